#pragma once

#include "qgfbsde/expr.hpp"

#include <span>
#include <string>
#include <vector>

namespace qgfbsde {

/// Decoupled FBSDE data with one-dimensional state (m = 1) and d-dimensional noise.
///
///   X_s = x0 + int_0^s b(r, X_r) dr + int_0^s sigma(r, X_r) . dW_r
///   Y_s = g(X_T) + int_s^T f(r, X_r, Y_r, Z_r) dr - int_s^T Z_r . dW_r
struct ModelSpec {
    Expression b;                  // in (t, x)
    std::vector<Expression> sigma; // d entries, in (t, x)
    Expression f;                  // in (t, x, y, z1..zd)
    Expression g;                  // in x
    double T = 1.0;
    double x0 = 0.0;

    int d() const { return static_cast<int>(sigma.size()); }
};

/// Build a spec from expression strings; parse errors propagate as ParseError.
ModelSpec make_spec(const std::string& b, const std::vector<std::string>& sigma, const std::string& f,
                    const std::string& g, double T = 1.0, double x0 = 0.0);

/// A validated ModelSpec with its partial derivatives precomputed.
/// Immutable; all evaluators are reentrant.
class Model {
public:
    /// Throws ConfigError when the structural invariants fail (d >= 1, T > 0,
    /// variable usage of each function, zk index <= d).
    explicit Model(ModelSpec spec);

    const ModelSpec& spec() const { return spec_; }
    int d() const { return spec_.d(); }
    double T() const { return spec_.T; }
    double x0() const { return spec_.x0; }

    double b(double t, double x) const;
    double b_x(double t, double x) const;
    void sigma(double t, double x, std::span<double> out) const;
    void sigma_x(double t, double x, std::span<double> out) const;
    double sigma_norm(double t, double x) const;

    double f(double t, double x, double y, std::span<const double> z) const;
    double f_x(double t, double x, double y, std::span<const double> z) const;
    double f_y(double t, double x, double y, std::span<const double> z) const;
    void f_z(double t, double x, double y, std::span<const double> z, std::span<double> out) const;

    double g(double x) const;
    double g_x(double x) const;

    const Expression& f_x_expr() const { return f_x_; }
    const Expression& g_x_expr() const { return g_x_; }

private:
    ModelSpec spec_;
    Expression b_x_;
    std::vector<Expression> sigma_x_;
    Expression f_x_, f_y_;
    std::vector<Expression> f_z_;
    Expression g_x_;
};

// ---------------------------------------------------------------------------
// Sampling-based validation

/// Closed interval sampled at `count` equally spaced points (count == 1 samples the midpoint).
struct Range {
    double lo = 0.0;
    double hi = 0.0;
    int count = 1;

    double at(int i) const;
};

struct SamplePoint {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    std::vector<double> z;

    std::string to_string() const;
};

/// Lattice over (t, x, y, z); the z range applies to every component.
struct SampleBox {
    Range t, x, y, z;

    std::string describe() const;
};

/// Box covering [0,T] x [x_lo, x_hi] with default y and z envelopes.
SampleBox default_sample_box(const Model& m, double x_lo, double x_hi);

struct Violation {
    std::string condition;
    std::string point;
    double lhs = 0.0;
    double rhs = 0.0;
};

struct AssumptionReport {
    double growth_constant_M = 0.0;
    double lipschitz_constant_K = 0.0;
    double ellipticity_floor = 0.0;
    std::vector<Violation> violations;
    bool passed = true;
    std::string grid_used;
};

/// Checks the growth, boundedness and ellipticity conditions on a sample lattice, and with
/// `check_h2` the difference-quotient Lipschitz bounds on random sample pairs.
/// A bound is declared violated when its ratio over the full box exceeds `growth_factor` times
/// the ratio over the half-width inner box (superlinear growth of the checked quotient).
AssumptionReport validate_assumptions(const Model& m, const SampleBox& box, bool check_h2,
                                      double growth_factor = 2.5, double ellipticity_tol = 1e-8);

enum class Direction { increasing, decreasing, constant, nonmonotone };

const char* to_string(Direction d);

struct MonotonicityReport {
    Direction direction = Direction::constant;
    bool strict = false;
    double min_derivative = 0.0;
    double max_derivative = 0.0;
    SamplePoint witness; // where the derivative extreme that decided the direction occurs
};

inline constexpr double default_strict_tol = 1e-10;

/// Monotonicity of a function of x alone, judged from its symbolic derivative on the grid.
/// Throws ConfigError when `e` references t, y or z.
MonotonicityReport check_monotone(const Expression& e, const Range& x_grid,
                                  double strict_tol = default_strict_tol);

/// Monotonicity of x -> e(t, x, y, z) uniformly over the probe set.
MonotonicityReport check_monotone_in_x(const Expression& e, const Range& x_grid,
                                       std::span<const SamplePoint> probes,
                                       double strict_tol = default_strict_tol);

/// Lattice of (t, y, z) probes: `n` points per axis over [0,T], [-y_max,y_max], [-z_max,z_max]^d.
std::vector<SamplePoint> probe_lattice(double T, int d, double y_max, double z_max, int n = 5);

struct ComonotoneReport {
    bool comonotone = false;
    bool strict = false;
    MonotonicityReport first;
    MonotonicityReport second;
};

ComonotoneReport combine_comonotone(const MonotonicityReport& a, const MonotonicityReport& b);

ComonotoneReport check_comonotone(const Expression& e1, const Expression& e2, const Range& x_grid,
                                  double strict_tol = default_strict_tol);

/// True when no two reports have opposite directions and none is nonmonotone.
bool jointly_comonotone(std::span<const MonotonicityReport> reports);

} // namespace qgfbsde
