#include "qgfbsde/mc.hpp"

#include "qgfbsde/error.hpp"
#include "qgfbsde/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace qgfbsde {

void set_worker_count(int n) {
    omp_set_num_threads(n > 0 ? n : omp_get_num_procs());
}

int worker_count() { return omp_get_max_threads(); }

void McConfig::validate() const {
    if (paths < 2) throw ConfigError("mc: paths must be >= 2");
    if (steps < 1) throw ConfigError("mc: steps must be >= 1");
    if (bins < 1) throw ConfigError("mc: bins must be >= 1");
    if (z_clip && !(*z_clip > 0.0)) throw ConfigError("mc: z_clip must be > 0");
    if (picard < 0) throw ConfigError("mc: picard must be >= 0");
}

PathEnsemble::PathEnsemble(int paths, int steps, int d, double T)
    : P_(paths), N_(steps), d_(d), T_(T),
      dW_(static_cast<std::size_t>(paths) * static_cast<std::size_t>(steps) * static_cast<std::size_t>(d)),
      X_(static_cast<std::size_t>(paths) * static_cast<std::size_t>(steps + 1)),
      gradX_(X_.size()) {}

Estimate sample_mean(std::span<const double> values) {
    const auto n = static_cast<double>(values.size());
    if (values.empty()) return {};
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double var = values.size() > 1 ? ss / (n - 1.0) : 0.0;
    return {mean, std::sqrt(var / n)};
}

void clip_z(std::span<const double> z, double level, std::span<double> out) {
    for (std::size_t c = 0; c < z.size(); ++c) out[c] = std::clamp(z[c], -level, level);
}

namespace {

constexpr double kExpLimit = 700.0;
constexpr double kQuotientFloor = 1e-12;

[[noreturn]] void non_finite_state(int p, int k) {
    throw NumericalError("non-finite state at path " + std::to_string(p) + ", step " + std::to_string(k));
}

} // namespace

PathEnsemble simulate_forward(const Model& m, const McConfig& cfg) {
    cfg.validate();
    PathEnsemble ens(cfg.paths, cfg.steps, m.d(), m.T());
    const int N = cfg.steps;
    const int d = m.d();
    const double dt = ens.dt();
    const double sdt = std::sqrt(dt);
    auto& X = ens.X();
    auto& dW = ens.dW();

    parallel_for(static_cast<std::size_t>(cfg.paths), cfg.exec, [&](std::size_t pi) {
        const int p = static_cast<int>(pi);
        std::vector<double> sig(static_cast<std::size_t>(d));
        double x = m.x0();
        X[ens.node(p, 0)] = x;
        for (int k = 0; k < N; ++k) {
            const double t = ens.t(k);
            m.sigma(t, x, sig);
            double diffusion = 0.0;
            for (int c = 0; c < d; ++c) {
                const double w = sdt * normal_draw(cfg.seed, pi, static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(c));
                dW[ens.incr(p, k, c)] = w;
                diffusion += sig[static_cast<std::size_t>(c)] * w;
            }
            x = x + m.b(t, x) * dt + diffusion;
            if (!std::isfinite(x)) non_finite_state(p, k + 1);
            X[ens.node(p, k + 1)] = x;
        }
    });
    return ens;
}

void simulate_variational(PathEnsemble& ens, const Model& m, Execution exec) {
    const int N = ens.steps();
    const int d = ens.d();
    const double dt = ens.dt();
    auto& G = ens.gradX();
    const auto& X = ens.X();

    parallel_for(static_cast<std::size_t>(ens.paths()), exec, [&](std::size_t pi) {
        const int p = static_cast<int>(pi);
        std::vector<double> sx(static_cast<std::size_t>(d));
        double log_g = 0.0;
        G[ens.node(p, 0)] = 1.0;
        for (int k = 0; k < N; ++k) {
            const double t = ens.t(k);
            const double x = X[ens.node(p, k)];
            m.sigma_x(t, x, sx);
            double s2 = 0.0, noise = 0.0;
            for (int c = 0; c < d; ++c) {
                s2 += sx[static_cast<std::size_t>(c)] * sx[static_cast<std::size_t>(c)];
                noise += sx[static_cast<std::size_t>(c)] * ens.dw(p, k, c);
            }
            log_g += (m.b_x(t, x) - 0.5 * s2) * dt + noise;
            const double gval = std::exp(log_g);
            if (!std::isfinite(gval) || !(gval > 0.0)) non_finite_state(p, k + 1);
            G[ens.node(p, k + 1)] = gval;
        }
    });
    ens.mark_variational();
}

WeightProcesses malliavin_weights(const PathEnsemble& ens, const Model& m, const BsdeSolution& sol, Execution exec) {
    const int P = ens.paths(), N = ens.steps(), d = ens.d();
    const double dt = ens.dt();
    WeightProcesses w;
    w.paths = P;
    w.steps = N;
    w.e.resize(static_cast<std::size_t>(P) * static_cast<std::size_t>(N + 1));
    w.M_T.resize(static_cast<std::size_t>(P));
    w.drift_used.resize(static_cast<std::size_t>(P) * static_cast<std::size_t>(N));

    parallel_for(static_cast<std::size_t>(P), exec, [&](std::size_t pi) {
        const int p = static_cast<int>(pi);
        std::vector<double> z(static_cast<std::size_t>(d)), zero(static_cast<std::size_t>(d), 0.0);
        double log_e = 0.0, log_m = 0.0;
        w.e[ens.node(p, 0)] = 1.0;
        for (int k = 0; k < N; ++k) {
            const double t = ens.t(k);
            const double x = ens.x(p, k);
            const double y = sol.y(p, k);
            clip_z(sol.z(p, k), sol.z_clip, z);

            const double f_y0 = m.f(t, x, 0.0, z);
            const double q = std::abs(y) >= kQuotientFloor ? (m.f(t, x, y, z) - f_y0) / y : m.f_y(t, x, 0.0, z);
            w.drift_used[static_cast<std::size_t>(p) * static_cast<std::size_t>(N) + static_cast<std::size_t>(k)] = q;
            log_e += q * dt;

            double zn2 = 0.0;
            for (double v : z) zn2 += v * v;
            if (std::sqrt(zn2) >= kQuotientFloor) {
                const double coef = (f_y0 - m.f(t, x, 0.0, zero)) / zn2;
                double drift = 0.0, th2 = 0.0;
                for (int c = 0; c < d; ++c) {
                    const double th = coef * z[static_cast<std::size_t>(c)];
                    drift += th * ens.dw(p, k, c);
                    th2 += th * th;
                }
                log_m += drift - 0.5 * th2 * dt;
            }
            if (!(std::abs(log_e) < kExpLimit) || !(log_m < kExpLimit))
                throw NumericalError("weight exponential overflow on path " + std::to_string(p) + " at step " +
                                     std::to_string(k));
            w.e[ens.node(p, k + 1)] = std::exp(log_e);
        }
        w.M_T[pi] = std::exp(log_m);
    });
    return w;
}

GradientEstimate grad_y0_via_weights(const PathEnsemble& ens, const Model& m, const BsdeSolution& sol,
                                     const WeightProcesses& w, Execution exec) {
    if (!ens.has_variational()) throw ConfigError("grad_y0_via_weights needs the variational process");
    const int P = ens.paths(), N = ens.steps(), d = ens.d();
    const double dt = ens.dt();
    std::vector<double> at_zero(static_cast<std::size_t>(P)), linearized(static_cast<std::size_t>(P));

    parallel_for(static_cast<std::size_t>(P), exec, [&](std::size_t pi) {
        const int p = static_cast<int>(pi);
        std::vector<double> z(static_cast<std::size_t>(d)), zero(static_cast<std::size_t>(d), 0.0);
        const double terminal = w.e_at(p, N) * m.g_x(ens.x(p, N)) * ens.grad_x(p, N);
        double run0 = 0.0, run1 = 0.0;
        for (int k = 0; k < N; ++k) {
            const double t = ens.t(k);
            const double x = ens.x(p, k);
            const double weight = w.e_at(p, k) * ens.grad_x(p, k) * dt;
            clip_z(sol.z(p, k), sol.z_clip, z);
            run0 += weight * m.f_x(t, x, 0.0, zero);
            run1 += weight * m.f_x(t, x, sol.y(p, k), z);
        }
        at_zero[pi] = w.M_T[pi] * (terminal + run0);
        linearized[pi] = w.M_T[pi] * (terminal + run1);
    });
    return {sample_mean(at_zero), sample_mean(linearized)};
}

void write_paths_csv(std::ostream& os, const PathEnsemble& ens, const BsdeSolution* sol, const WeightProcesses* w,
                     int max_paths) {
    const int d = ens.d(), N = ens.steps();
    const int P = std::min(ens.paths(), max_paths);
    os << "path,k,t,X,gradX,Y";
    for (int c = 1; c <= d; ++c) os << ",Z" << c;
    os << ",e\n";
    char buf[64];
    auto num = [&buf, &os](double v) {
        std::snprintf(buf, sizeof buf, ",%.17g", v);
        os << buf;
    };
    for (int p = 0; p < P; ++p) {
        for (int k = 0; k <= N; ++k) {
            os << p << "," << k;
            num(ens.t(k));
            num(ens.x(p, k));
            if (ens.has_variational()) num(ens.grad_x(p, k)); else os << ",";
            if (sol) num(sol->y(p, k)); else os << ",";
            for (int c = 0; c < d; ++c) {
                if (sol && k < N) num(sol->z(p, k, c)); else os << ",";
            }
            if (w) num(w->e_at(p, k)); else os << ",";
            os << "\n";
        }
    }
}

} // namespace qgfbsde
