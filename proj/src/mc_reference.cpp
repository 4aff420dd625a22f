#include "qgfbsde/error.hpp"
#include "qgfbsde/mc.hpp"
#include "qgfbsde/rng.hpp"

#include <algorithm>
#include <cmath>

namespace qgfbsde::reference {

PathEnsemble simulate_forward(const Model& m, const McConfig& cfg) {
    cfg.validate();
    PathEnsemble ens(cfg.paths, cfg.steps, m.d(), m.T());
    const double dt = ens.dt();
    const double sdt = std::sqrt(dt);
    std::vector<double> sig(static_cast<std::size_t>(m.d()));

    for (int p = 0; p < cfg.paths; ++p) {
        ens.X()[ens.node(p, 0)] = m.x0();
        for (int k = 0; k < cfg.steps; ++k) {
            const double t = ens.t(k);
            const double x = ens.X()[ens.node(p, k)];
            m.sigma(t, x, sig);
            double diffusion = 0.0;
            for (int c = 0; c < m.d(); ++c) {
                const double w = sdt * normal_draw(cfg.seed, static_cast<std::uint64_t>(p),
                                                   static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(c));
                ens.dW()[ens.incr(p, k, c)] = w;
                diffusion += sig[static_cast<std::size_t>(c)] * w;
            }
            const double next = x + m.b(t, x) * dt + diffusion;
            if (!std::isfinite(next))
                throw NumericalError("non-finite state at path " + std::to_string(p) + ", step " + std::to_string(k + 1));
            ens.X()[ens.node(p, k + 1)] = next;
        }
    }
    return ens;
}

void simulate_variational(PathEnsemble& ens, const Model& m) {
    const double dt = ens.dt();
    std::vector<double> sx(static_cast<std::size_t>(ens.d()));
    for (int p = 0; p < ens.paths(); ++p) {
        double log_g = 0.0;
        ens.gradX()[ens.node(p, 0)] = 1.0;
        for (int k = 0; k < ens.steps(); ++k) {
            const double t = ens.t(k);
            const double x = ens.x(p, k);
            m.sigma_x(t, x, sx);
            double s2 = 0.0, noise = 0.0;
            for (int c = 0; c < ens.d(); ++c) {
                s2 += sx[static_cast<std::size_t>(c)] * sx[static_cast<std::size_t>(c)];
                noise += sx[static_cast<std::size_t>(c)] * ens.dw(p, k, c);
            }
            log_g += (m.b_x(t, x) - 0.5 * s2) * dt + noise;
            ens.gradX()[ens.node(p, k + 1)] = std::exp(log_g);
        }
    }
    ens.mark_variational();
}

WeightProcesses malliavin_weights(const PathEnsemble& ens, const Model& m, const BsdeSolution& sol) {
    const int P = ens.paths(), N = ens.steps(), d = ens.d();
    const double dt = ens.dt();
    WeightProcesses w;
    w.paths = P;
    w.steps = N;
    w.e.assign(static_cast<std::size_t>(P) * static_cast<std::size_t>(N + 1), 1.0);
    w.M_T.assign(static_cast<std::size_t>(P), 1.0);
    w.drift_used.assign(static_cast<std::size_t>(P) * static_cast<std::size_t>(N), 0.0);
    std::vector<double> z(static_cast<std::size_t>(d)), zero(static_cast<std::size_t>(d), 0.0);

    for (int p = 0; p < P; ++p) {
        double log_e = 0.0, log_m = 0.0;
        for (int k = 0; k < N; ++k) {
            const double t = ens.t(k);
            const double x = ens.x(p, k);
            const double y = sol.y(p, k);
            clip_z(sol.z(p, k), sol.z_clip, z);

            const double f_y0 = m.f(t, x, 0.0, z);
            double q;
            if (std::abs(y) >= 1e-12)
                q = (m.f(t, x, y, z) - f_y0) / y;
            else
                q = m.f_y(t, x, 0.0, z);
            w.drift_used[static_cast<std::size_t>(p * N + k)] = q;
            log_e += q * dt;

            double zn2 = 0.0;
            for (double v : z) zn2 += v * v;
            if (std::sqrt(zn2) >= 1e-12) {
                const double coef = (f_y0 - m.f(t, x, 0.0, zero)) / zn2;
                double drift = 0.0, th2 = 0.0;
                for (int c = 0; c < d; ++c) {
                    const double th = coef * z[static_cast<std::size_t>(c)];
                    drift += th * ens.dw(p, k, c);
                    th2 += th * th;
                }
                log_m += drift - 0.5 * th2 * dt;
            }
            w.e[ens.node(p, k + 1)] = std::exp(log_e);
        }
        w.M_T[static_cast<std::size_t>(p)] = std::exp(log_m);
    }
    return w;
}

} // namespace qgfbsde::reference
