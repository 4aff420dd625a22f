#include "qgfbsde/error.hpp"
#include "qgfbsde/mc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace qgfbsde {

namespace {

constexpr int kMinPerBin = 8;

struct AffineFit {
    double mean_x = 0.0, mean_v = 0.0, slope = 0.0;
    double at(double x) const { return mean_v + slope * (x - mean_x); }
};

// Least-squares v ~ a + b x over the bin; constant fit when x has no spread.
template <class GetX, class GetV>
AffineFit fit_affine(std::size_t n, GetX&& xs, GetV&& vs) {
    AffineFit fit;
    double sx = 0.0, sv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += xs(i);
        sv += vs(i);
    }
    fit.mean_x = sx / static_cast<double>(n);
    fit.mean_v = sv / static_cast<double>(n);
    if (n < 3) return fit;
    double sxx = 0.0, sxv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs(i) - fit.mean_x;
        sxx += dx * dx;
        sxv += dx * (vs(i) - fit.mean_v);
    }
    if (sxx > 1e-24 * static_cast<double>(n) * (1.0 + fit.mean_x * fit.mean_x)) fit.slope = sxv / sxx;
    return fit;
}

} // namespace

BsdeSolution solve_bsde_regression(const PathEnsemble& ens, const Model& m, const McConfig& cfg) {
    cfg.validate();
    const int P = ens.paths(), N = ens.steps(), d = ens.d();
    const auto Pz = static_cast<std::size_t>(P);
    const auto dz = static_cast<std::size_t>(d);
    const double dt = ens.dt();

    BsdeSolution sol;
    sol.paths = P;
    sol.steps = N;
    sol.d = d;
    sol.Y.resize(Pz * static_cast<std::size_t>(N + 1));
    sol.Z.resize(Pz * static_cast<std::size_t>(N) * dz);
    sol.z_clip = cfg.z_clip.value_or(1.0 / std::sqrt(dt));
    auto& diag = sol.diagnostics;
    diag.r_squared.assign(static_cast<std::size_t>(N), 0.0);
    diag.bins_used.assign(static_cast<std::size_t>(N), 0);
    diag.min_occupancy.assign(static_cast<std::size_t>(N), 0);
    diag.max_occupancy.assign(static_cast<std::size_t>(N), 0);
    diag.merged_bins.assign(static_cast<std::size_t>(N), 0);
    diag.z_se.assign(static_cast<std::size_t>(N) * dz, 0.0);

    auto Y = [&](int p, int k) -> double& {
        return sol.Y[static_cast<std::size_t>(p) * static_cast<std::size_t>(N + 1) + static_cast<std::size_t>(k)];
    };
    auto Z = [&](int p, int k, int c) -> double& {
        return sol.Z[(static_cast<std::size_t>(p) * static_cast<std::size_t>(N) + static_cast<std::size_t>(k)) * dz +
                     static_cast<std::size_t>(c)];
    };

    std::vector<double> pathwise(Pz); // g(X_T) + sum of driver increments: the plain estimator behind y0_se
    parallel_for(Pz, cfg.exec, [&](std::size_t p) {
        Y(static_cast<int>(p), N) = m.g(ens.x(static_cast<int>(p), N));
        pathwise[p] = Y(static_cast<int>(p), N);
    });

    std::vector<int> order(Pz);
    std::vector<double> y_hat(Pz), next(Pz);
    std::vector<double> bin_ss_res, bin_z_se;

    for (int k = N - 1; k >= 0; --k) {
        const double t = ens.t(k);
        for (int p = 0; p < P; ++p) next[static_cast<std::size_t>(p)] = Y(p, k + 1);

        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            const double xa = ens.x(a, k), xb = ens.x(b, k);
            return xa < xb || (xa == xb && a < b);
        });
        const double x_lo = ens.x(order.front(), k), x_hi = ens.x(order.back(), k);
        const double scale = 1.0 + std::max(std::abs(x_lo), std::abs(x_hi));

        int nb = 1;
        if (x_hi - x_lo > 1e-12 * scale) {
            nb = std::max(1, std::min(cfg.bins, P / kMinPerBin));
            diag.merged_bins[static_cast<std::size_t>(k)] = cfg.bins - nb;
        }
        const auto nbz = static_cast<std::size_t>(nb);
        auto bin_begin = [&](std::size_t b) { return b * Pz / nbz; };
        bin_ss_res.assign(nbz, 0.0);
        bin_z_se.assign(nbz * dz, 0.0);

        parallel_for(nbz, cfg.exec, [&](std::size_t b) {
            const std::size_t lo = bin_begin(b), n = bin_begin(b + 1) - lo;
            const int* idx = order.data() + lo;
            auto xs = [&](std::size_t i) { return ens.x(idx[i], k); };
            const AffineFit fy = fit_affine(n, xs, [&](std::size_t i) { return next[static_cast<std::size_t>(idx[i])]; });
            double ss = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto p = static_cast<std::size_t>(idx[i]);
                y_hat[p] = fy.at(xs(i));
                ss += (next[p] - y_hat[p]) * (next[p] - y_hat[p]);
            }
            bin_ss_res[b] = ss;
            for (int c = 0; c < d; ++c) {
                // residual times increment: same conditional mean as Y_{k+1} dW, far smaller variance
                auto vs = [&](std::size_t i) {
                    const auto p = static_cast<std::size_t>(idx[i]);
                    return (next[p] - y_hat[p]) * ens.dw(idx[i], k, c) / dt;
                };
                const AffineFit fz = fit_affine(n, xs, vs);
                double ssz = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double zf = fz.at(xs(i));
                    Z(idx[i], k, c) = zf;
                    ssz += (vs(i) - zf) * (vs(i) - zf);
                }
                const double dof = static_cast<double>(n > 2 ? n - 2 : 1);
                bin_z_se[b * dz + static_cast<std::size_t>(c)] = std::sqrt(ssz / dof / static_cast<double>(n));
            }
        });

        // diagnostics
        {
            const Estimate ym = sample_mean(next);
            double ss_tot = 0.0;
            for (double v : next) ss_tot += (v - ym.value) * (v - ym.value);
            const double ss_res = std::accumulate(bin_ss_res.begin(), bin_ss_res.end(), 0.0);
            diag.r_squared[static_cast<std::size_t>(k)] = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
            diag.bins_used[static_cast<std::size_t>(k)] = nb;
            int occ_min = P, occ_max = 0;
            for (std::size_t b = 0; b < nbz; ++b) {
                const int n = static_cast<int>(bin_begin(b + 1) - bin_begin(b));
                occ_min = std::min(occ_min, n);
                occ_max = std::max(occ_max, n);
            }
            diag.min_occupancy[static_cast<std::size_t>(k)] = occ_min;
            diag.max_occupancy[static_cast<std::size_t>(k)] = occ_max;
            for (std::size_t c = 0; c < dz; ++c) {
                double worst = 0.0;
                for (std::size_t b = 0; b < nbz; ++b) worst = std::max(worst, bin_z_se[b * dz + c]);
                diag.z_se[static_cast<std::size_t>(k) * dz + c] = worst;
            }
        }

        parallel_for(Pz, cfg.exec, [&](std::size_t pi) {
            const int p = static_cast<int>(pi);
            const double x = ens.x(p, k);
            std::vector<double> zc(dz);
            for (int c = 0; c < d; ++c) zc[static_cast<std::size_t>(c)] = Z(p, k, c);
            clip_z(zc, sol.z_clip, zc);
            double y = y_hat[pi], drift = 0.0;
            for (int it = 0; it <= cfg.picard; ++it) {
                drift = m.f(t, x, y, zc) * dt;
                y = y_hat[pi] + drift;
            }
            pathwise[pi] += drift;
            if (!std::isfinite(y))
                throw NumericalError("non-finite regression value at path " + std::to_string(p) + ", step " +
                                     std::to_string(k));
            Y(p, k) = y;
        });
    }

    std::vector<double> y0(Pz);
    sol.z0.assign(dz, 0.0);
    for (int p = 0; p < P; ++p) {
        y0[static_cast<std::size_t>(p)] = Y(p, 0);
        for (int c = 0; c < d; ++c) sol.z0[static_cast<std::size_t>(c)] += Z(p, 0, c);
    }
    for (double& v : sol.z0) v /= static_cast<double>(P);
    sol.y0 = sample_mean(y0).value;
    sol.y0_se = sample_mean(pathwise).se;
    return sol;
}

} // namespace qgfbsde
