#pragma once

#include "qgfbsde/execution.hpp"
#include "qgfbsde/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace qgfbsde {

struct McConfig {
    int paths = 100000;
    int steps = 100;
    std::uint64_t seed = 20111207;
    int bins = 50;                // quantile bins of the local affine regression
    std::optional<double> z_clip; // unset: 1/sqrt(dt), or 4 max|Z_pde| when the caller has a PDE solution
    int picard = 1;               // refinements of the Y argument of the driver per backward step
    Execution exec = Execution::parallel;

    /// Throws ConfigError unless paths >= 2, steps >= 1, bins >= 1, z_clip > 0, picard >= 0.
    void validate() const;
};

/// Simulated Brownian increments, Euler states and the variational process.
/// Arrays are path-major: X[p * (N+1) + k], dW[(p * N + k) * d + c].
class PathEnsemble {
public:
    PathEnsemble(int paths, int steps, int d, double T);

    int paths() const { return P_; }
    int steps() const { return N_; }
    int d() const { return d_; }
    double T() const { return T_; }
    double dt() const { return T_ / N_; }
    double t(int k) const { return k == N_ ? T_ : dt() * k; }

    double x(int p, int k) const { return X_[node(p, k)]; }
    double grad_x(int p, int k) const { return gradX_[node(p, k)]; }
    double dw(int p, int k, int c) const { return dW_[incr(p, k, c)]; }
    std::span<const double> dw(int p, int k) const { return {dW_.data() + incr(p, k, 0), static_cast<std::size_t>(d_)}; }

    bool has_variational() const { return has_grad_; }

    std::vector<double>& X() { return X_; }
    std::vector<double>& gradX() { return gradX_; }
    std::vector<double>& dW() { return dW_; }
    const std::vector<double>& X() const { return X_; }
    const std::vector<double>& gradX() const { return gradX_; }
    const std::vector<double>& dW() const { return dW_; }
    void mark_variational() { has_grad_ = true; }

    std::size_t node(int p, int k) const {
        return static_cast<std::size_t>(p) * static_cast<std::size_t>(N_ + 1) + static_cast<std::size_t>(k);
    }
    std::size_t incr(int p, int k, int c) const {
        return (static_cast<std::size_t>(p) * static_cast<std::size_t>(N_) + static_cast<std::size_t>(k)) *
                   static_cast<std::size_t>(d_) +
               static_cast<std::size_t>(c);
    }

private:
    int P_, N_, d_;
    double T_;
    std::vector<double> dW_, X_, gradX_;
    bool has_grad_ = false;
};

struct RegressionDiagnostics {
    std::vector<double> r_squared;    // per step, fit of Y_{k+1} on X_k
    std::vector<int> bins_used;       // per step
    std::vector<int> min_occupancy;   // per step, smallest bin
    std::vector<int> max_occupancy;   // per step, largest bin
    std::vector<int> merged_bins;     // per step, bins folded into neighbours
    std::vector<double> z_se;         // per step and component (k * d + c): largest per-bin standard error of Z
};

struct BsdeSolution {
    int paths = 0, steps = 0, d = 0;
    std::vector<double> Y; // P x (N+1), same layout as PathEnsemble::X
    std::vector<double> Z; // P x N x d, same layout as PathEnsemble::dW
    double y0 = 0.0;       // mean of Y at t = 0
    double y0_se = 0.0;    // standard error of the plain estimator g(X_T) + sum f dt
    std::vector<double> z0; // mean of Z at t = 0 per component
    double z_clip = 0.0;
    RegressionDiagnostics diagnostics;

    double y(int p, int k) const {
        return Y[static_cast<std::size_t>(p) * static_cast<std::size_t>(steps + 1) + static_cast<std::size_t>(k)];
    }
    double z(int p, int k, int c) const {
        return Z[(static_cast<std::size_t>(p) * static_cast<std::size_t>(steps) + static_cast<std::size_t>(k)) *
                     static_cast<std::size_t>(d) +
                 static_cast<std::size_t>(c)];
    }
    std::span<const double> z(int p, int k) const {
        return {Z.data() + (static_cast<std::size_t>(p) * static_cast<std::size_t>(steps) + static_cast<std::size_t>(k)) *
                               static_cast<std::size_t>(d),
                static_cast<std::size_t>(d)};
    }
};

/// e-process and terminal Girsanov density of the measure-change representation of grad Y.
struct WeightProcesses {
    int paths = 0, steps = 0;
    std::vector<double> e;          // P x (N+1)
    std::vector<double> M_T;        // P
    std::vector<double> drift_used; // P x N, the y-difference quotient integrated into log e

    double e_at(int p, int k) const {
        return e[static_cast<std::size_t>(p) * static_cast<std::size_t>(steps + 1) + static_cast<std::size_t>(k)];
    }
};

struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

Estimate sample_mean(std::span<const double> values);

struct GradientEstimate {
    Estimate at_zero;     // driver x-derivative evaluated at (t, X, 0, 0)
    Estimate linearized;  // driver x-derivative evaluated at (t, X, Y, clip(Z))
};

/// Brownian increments keyed by (seed, path, step, component) and Euler-Maruyama states.
PathEnsemble simulate_forward(const Model& m, const McConfig& cfg);

/// Fills gradX with the exponential form of the scalar variational equation.
void simulate_variational(PathEnsemble& ens, const Model& m, Execution exec = Execution::parallel);

/// Backward least-squares induction with quantile-bin affine regression.
BsdeSolution solve_bsde_regression(const PathEnsemble& ens, const Model& m, const McConfig& cfg);

/// Componentwise clip of z to [-level, level] (spans may alias).
void clip_z(std::span<const double> z, double level, std::span<double> out);

WeightProcesses malliavin_weights(const PathEnsemble& ens, const Model& m, const BsdeSolution& sol,
                                  Execution exec = Execution::parallel);

/// Weighted estimator of d/dx Y_0 and its linearized companion.
GradientEstimate grad_y0_via_weights(const PathEnsemble& ens, const Model& m, const BsdeSolution& sol,
                                     const WeightProcesses& w, Execution exec = Execution::parallel);

/// CSV `path,k,t,X,gradX,Y,Z1..Zd,e` for the first `max_paths` paths; Z and e are blank where undefined.
void write_paths_csv(std::ostream& os, const PathEnsemble& ens, const BsdeSolution* sol, const WeightProcesses* w,
                     int max_paths);

namespace reference {

// Plain single-threaded loops kept as the reference the OpenMP kernels are tested against.
PathEnsemble simulate_forward(const Model& m, const McConfig& cfg);
void simulate_variational(PathEnsemble& ens, const Model& m);
WeightProcesses malliavin_weights(const PathEnsemble& ens, const Model& m, const BsdeSolution& sol);

} // namespace reference

} // namespace qgfbsde
