#pragma once

#include "qgfbsde/error.hpp"
#include "qgfbsde/execution.hpp"
#include "qgfbsde/model.hpp"

#include <iosfwd>
#include <span>
#include <vector>

namespace qgfbsde {

/// Query outside the solution grid.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Uniform space-time grid for the backward PDE.
struct Grid {
    double x_min = -6.0;
    double x_max = 6.0;
    int nx = 401;
    int nt = 400;

    double h() const { return (x_max - x_min) / (nx - 1); }
    double x_at(int i) const { return x_min + h() * i; }

    /// Throws ConfigError unless x_min < x0 < x_max, nx >= 4, nt >= 1.
    void validate(double x0) const;
};

/// Box x0 +- width_factor * max|sigma| * sqrt(T).
Grid default_grid(const Model& m, int nx = 401, int nt = 400, double width_factor = 6.0);

struct SchemeParams {
    double theta = 0.5;         // 1/2 = Crank-Nicolson, 1 = fully implicit
    int max_iterations = 8;     // fixed-point iterations on the driver per step
    double tolerance = 1e-10;   // sup-norm change between successive iterates
    Execution exec = Execution::parallel;
};

/// u and its spatial derivative on the grid; row k holds time t_k = k T / nt.
class PdeSolution {
public:
    PdeSolution(Grid grid, double T);

    const Grid& grid() const { return grid_; }
    double T() const { return T_; }
    double dt() const { return T_ / grid_.nt; }
    double t_at(int k) const { return k == grid_.nt ? T_ : dt() * k; }

    double u(int k, int i) const { return u_[index(k, i)]; }
    double ux(int k, int i) const { return ux_[index(k, i)]; }
    std::span<const double> u_row(int k) const;
    std::span<const double> ux_row(int k) const;

    /// Bilinear interpolation; throws RangeError outside [0,T] x [x_min,x_max].
    double eval_u(double t, double x) const;
    double eval_ux(double t, double x) const;

    bool contains(double t, double x) const;

    /// Largest number of fixed-point iterations any step needed.
    int max_iterations_used() const { return max_iterations_used_; }

private:
    friend PdeSolution solve_pde(const Model&, const Grid&, const SchemeParams&);
    std::size_t index(int k, int i) const {
        return static_cast<std::size_t>(k) * static_cast<std::size_t>(grid_.nx) + static_cast<std::size_t>(i);
    }
    double interpolate(const std::vector<double>& v, double t, double x) const;

    Grid grid_;
    double T_;
    std::vector<double> u_;
    std::vector<double> ux_;
    int max_iterations_used_ = 0;
};

/// Solves u_t + b u_x + 1/2 |sigma|^2 u_xx + f(t, x, u, u_x sigma) = 0, u(T, .) = g,
/// backward with a theta-scheme; u_xx = 0 at both ends of the box.
PdeSolution solve_pde(const Model& m, const Grid& grid, const SchemeParams& params = {});

/// Z = u_x(t, x) sigma(t, x).
void z_from_pde(const PdeSolution& sol, const Model& m, double t, double x, std::span<double> out);
std::vector<double> z_from_pde(const PdeSolution& sol, const Model& m, double t, double x);

/// 4 * max over grid nodes of |u_x sigma|, the default regression clip level when a PDE solution exists.
double z_clip_from_pde(const PdeSolution& sol, const Model& m);

/// Central differences inside, one-sided at the two ends.
void central_derivative(std::span<const double> u, double h, std::span<double> out);

/// CSV with header `t,x,u,ux`, t outer, x inner, 17 significant digits.
void write_pde_csv(std::ostream& os, const PdeSolution& sol);

struct PdeTable {
    std::vector<double> t, x, u, ux;
};
PdeTable read_pde_csv(std::istream& is);

} // namespace qgfbsde
