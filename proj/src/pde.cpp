#include "qgfbsde/pde.hpp"

#include "qgfbsde/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace qgfbsde {

void Grid::validate(double x0) const {
    if (!(x_min < x0 && x0 < x_max))
        throw ConfigError("grid box [" + format_number(x_min) + ", " + format_number(x_max) +
                          "] must contain x0 = " + format_number(x0) + " in its interior");
    if (nx < 4) throw ConfigError("grid needs nx >= 4 space nodes");
    if (nt < 1) throw ConfigError("grid needs nt >= 1 time steps");
}

Grid default_grid(const Model& m, int nx, int nt, double width_factor) {
    const double sqrt_T = std::sqrt(m.T());
    double smax = 0.0;
    for (int k = 0; k <= 4; ++k) smax = std::max(smax, m.sigma_norm(m.T() * k / 4.0, m.x0()));
    // second pass over the provisional box picks up state-dependent volatility
    const double half0 = width_factor * std::max(smax, 1e-3) * sqrt_T;
    for (int k = 0; k <= 4; ++k)
        for (int i = 0; i <= 40; ++i)
            smax = std::max(smax, m.sigma_norm(m.T() * k / 4.0, m.x0() - half0 + 2.0 * half0 * i / 40.0));
    const double half = width_factor * std::max(smax, 1e-3) * sqrt_T;
    return Grid{m.x0() - half, m.x0() + half, nx, nt};
}

// ---------------------------------------------------------------------------

PdeSolution::PdeSolution(Grid grid, double T)
    : grid_(grid), T_(T),
      u_(static_cast<std::size_t>(grid.nt + 1) * static_cast<std::size_t>(grid.nx)),
      ux_(u_.size()) {}

std::span<const double> PdeSolution::u_row(int k) const {
    return {u_.data() + index(k, 0), static_cast<std::size_t>(grid_.nx)};
}

std::span<const double> PdeSolution::ux_row(int k) const {
    return {ux_.data() + index(k, 0), static_cast<std::size_t>(grid_.nx)};
}

bool PdeSolution::contains(double t, double x) const {
    const double et = 1e-12 * std::max(1.0, T_);
    const double ex = 1e-12 * std::max(1.0, grid_.x_max - grid_.x_min);
    return t >= -et && t <= T_ + et && x >= grid_.x_min - ex && x <= grid_.x_max + ex;
}

double PdeSolution::interpolate(const std::vector<double>& v, double t, double x) const {
    if (!contains(t, x))
        throw RangeError("query (t=" + format_number(t) + ", x=" + format_number(x) + ") outside grid [0," +
                         format_number(T_) + "] x [" + format_number(grid_.x_min) + "," + format_number(grid_.x_max) +
                         "]");
    auto locate = [](double s, int n, int& cell, double& w) {
        const double r = std::round(s);
        if (std::abs(s - r) < 1e-9) s = r;
        s = std::clamp(s, 0.0, static_cast<double>(n));
        cell = std::min(static_cast<int>(s), n - 1);
        w = s - cell;
    };
    int k, i;
    double wt, wx;
    locate(t / dt(), grid_.nt, k, wt);
    locate((x - grid_.x_min) / grid_.h(), grid_.nx - 1, i, wx);
    const double a = v[index(k, i)], b = v[index(k, i + 1)];
    const double c = v[index(k + 1, i)], d = v[index(k + 1, i + 1)];
    const double lo = wx == 0.0 ? a : (1.0 - wx) * a + wx * b;
    const double hi = wx == 0.0 ? c : (1.0 - wx) * c + wx * d;
    return wt == 0.0 ? lo : (1.0 - wt) * lo + wt * hi;
}

double PdeSolution::eval_u(double t, double x) const { return interpolate(u_, t, x); }
double PdeSolution::eval_ux(double t, double x) const { return interpolate(ux_, t, x); }

void central_derivative(std::span<const double> u, double h, std::span<double> out) {
    const std::size_t n = u.size();
    out[0] = (u[1] - u[0]) / h;
    for (std::size_t i = 1; i + 1 < n; ++i) out[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
    out[n - 1] = (u[n - 1] - u[n - 2]) / h;
}

namespace {

// Coefficients of b u_x + D u_xx at one time level, plus sigma for the driver.
struct Level {
    double t = 0.0;
    std::vector<double> lower, diag, upper;
    std::vector<double> sigma; // nx * d
};

Level make_level(const Model& m, const Grid& g, double t, Execution exec) {
    const auto nx = static_cast<std::size_t>(g.nx);
    const auto d = static_cast<std::size_t>(m.d());
    const double h = g.h();
    Level lv;
    lv.t = t;
    lv.lower.resize(nx);
    lv.diag.resize(nx);
    lv.upper.resize(nx);
    lv.sigma.resize(nx * d);
    parallel_for(nx, exec, [&](std::size_t i) {
        const double x = g.x_at(static_cast<int>(i));
        std::span<double> s(lv.sigma.data() + i * d, d);
        m.sigma(t, x, s);
        double s2 = 0.0;
        for (double v : s) s2 += v * v;
        const double a = m.b(t, x);
        const double D = 0.5 * s2;
        lv.lower[i] = -a / (2.0 * h) + D / (h * h);
        lv.diag[i] = -2.0 * D / (h * h);
        lv.upper[i] = a / (2.0 * h) + D / (h * h);
    });
    return lv;
}

void driver_row(const Model& m, const Grid& g, const Level& lv, std::span<const double> u, std::span<double> ux,
                std::span<double> out, Execution exec) {
    central_derivative(u, g.h(), ux);
    const auto d = static_cast<std::size_t>(m.d());
    parallel_for(u.size(), exec, [&](std::size_t i) {
        double zbuf[8];
        std::vector<double> zheap;
        double* z = zbuf;
        if (d > 8) {
            zheap.resize(d);
            z = zheap.data();
        }
        for (std::size_t c = 0; c < d; ++c) z[c] = ux[i] * lv.sigma[i * d + c];
        out[i] = m.f(lv.t, g.x_at(static_cast<int>(i)), u[i], std::span<const double>(z, d));
    });
}

// Thomas algorithm; a[0] and c[n-1] are ignored. Overwrites c and r.
void solve_tridiagonal(std::span<const double> a, std::span<const double> b, std::span<double> c,
                       std::span<double> r, std::span<double> x) {
    const std::size_t n = b.size();
    double beta = b[0];
    c[0] /= beta;
    r[0] /= beta;
    for (std::size_t i = 1; i < n; ++i) {
        beta = b[i] - a[i] * c[i - 1];
        c[i] = i + 1 < n ? c[i] / beta : 0.0;
        r[i] = (r[i] - a[i] * r[i - 1]) / beta;
    }
    x[n - 1] = r[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = r[i] - c[i] * x[i + 1];
}

} // namespace

PdeSolution solve_pde(const Model& m, const Grid& grid, const SchemeParams& params) {
    grid.validate(m.x0());
    if (!(params.theta > 0.0 && params.theta <= 1.0)) throw ConfigError("theta must lie in (0, 1]");
    if (params.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");

    PdeSolution sol(grid, m.T());
    const int nx = grid.nx;
    const auto n = static_cast<std::size_t>(nx);
    const auto interior = n - 2;
    const double dt = sol.dt();
    const double theta = params.theta;
    const Execution exec = params.exec;
    const bool nonlinear = m.spec().f.depends_on(VarKind::y) || m.spec().f.depends_on(VarKind::z);

    // terminal row
    {
        std::vector<double> gx(n);
        for (int i = 0; i < nx; ++i) gx[static_cast<std::size_t>(i)] = m.g(grid.x_at(i));
        std::copy(gx.begin(), gx.end(), sol.u_.begin() + static_cast<std::ptrdiff_t>(sol.index(grid.nt, 0)));
        central_derivative(gx, grid.h(), {sol.ux_.data() + sol.index(grid.nt, 0), n});
    }

    std::vector<double> ux_buf(n), f_next(n), f_iter(n), explicit_rhs(interior);
    std::vector<double> a(interior), b(interior), c(interior), r(interior), x(interior);
    std::vector<double> iterate(n), candidate(n);
    Level next = make_level(m, grid, sol.t_at(grid.nt), exec);

    for (int k = grid.nt - 1; k >= 0; --k) {
        const std::span<const double> u_next = sol.u_row(k + 1);
        const Level cur = make_level(m, grid, sol.t_at(k), exec);

        driver_row(m, grid, next, u_next, ux_buf, f_next, exec);
        for (std::size_t j = 0; j < interior; ++j) {
            const std::size_t i = j + 1;
            const double lu = next.lower[i] * u_next[i - 1] + next.diag[i] * u_next[i] + next.upper[i] * u_next[i + 1];
            explicit_rhs[j] = u_next[i] + (1.0 - theta) * dt * lu + (1.0 - theta) * dt * f_next[i];
        }

        std::copy(u_next.begin(), u_next.end(), iterate.begin());
        int iterations = 0;
        double change = 0.0;
        while (true) {
            driver_row(m, grid, cur, iterate, ux_buf, f_iter, exec);
            for (std::size_t j = 0; j < interior; ++j) {
                const std::size_t i = j + 1;
                a[j] = -theta * dt * cur.lower[i];
                b[j] = 1.0 - theta * dt * cur.diag[i];
                c[j] = -theta * dt * cur.upper[i];
                r[j] = explicit_rhs[j] + theta * dt * f_iter[i];
            }
            // eliminate the ghost ends with u_0 = 2u_1 - u_2 and u_{n-1} = 2u_{n-2} - u_{n-3}
            b[0] += 2.0 * a[0];
            c[0] -= a[0];
            b[interior - 1] += 2.0 * c[interior - 1];
            a[interior - 1] -= c[interior - 1];
            solve_tridiagonal(a, b, c, r, x);

            candidate[0] = 2.0 * x[0] - x[1];
            std::copy(x.begin(), x.end(), candidate.begin() + 1);
            candidate[n - 1] = 2.0 * x[interior - 1] - x[interior - 2];
            ++iterations;

            change = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!std::isfinite(candidate[i]))
                    throw NumericalError("non-finite PDE value at step " + std::to_string(k) + " (t=" +
                                         format_number(sol.t_at(k)) + ", x=" +
                                         format_number(grid.x_at(static_cast<int>(i))) + ")");
                change = std::max(change, std::abs(candidate[i] - iterate[i]));
            }
            std::swap(iterate, candidate);
            if (!nonlinear || change < params.tolerance) break;
            if (iterations >= params.max_iterations)
                throw NumericalError("driver fixed point did not converge at step " + std::to_string(k) + " (t=" +
                                     format_number(sol.t_at(k)) + "): residual " + format_number(change) + " after " +
                                     std::to_string(iterations) + " iterations");
        }
        sol.max_iterations_used_ = std::max(sol.max_iterations_used_, iterations);

        std::copy(iterate.begin(), iterate.end(), sol.u_.begin() + static_cast<std::ptrdiff_t>(sol.index(k, 0)));
        central_derivative(iterate, grid.h(), {sol.ux_.data() + sol.index(k, 0), n});
        next = cur;
    }
    return sol;
}

void z_from_pde(const PdeSolution& sol, const Model& m, double t, double x, std::span<double> out) {
    const double ux = sol.eval_ux(t, x);
    m.sigma(t, x, out);
    for (double& v : out) v *= ux;
}

std::vector<double> z_from_pde(const PdeSolution& sol, const Model& m, double t, double x) {
    std::vector<double> z(static_cast<std::size_t>(m.d()));
    z_from_pde(sol, m, t, x, z);
    return z;
}

double z_clip_from_pde(const PdeSolution& sol, const Model& m) {
    const Grid& g = sol.grid();
    double zmax = 0.0;
    for (int k = 0; k <= g.nt; ++k)
        for (int i = 0; i < g.nx; ++i)
            zmax = std::max(zmax, std::abs(sol.ux(k, i)) * m.sigma_norm(sol.t_at(k), g.x_at(i)));
    return 4.0 * zmax;
}

// ---------------------------------------------------------------------------

void write_pde_csv(std::ostream& os, const PdeSolution& sol) {
    const Grid& g = sol.grid();
    os << "t,x,u,ux\n";
    char line[128];
    for (int k = 0; k <= g.nt; ++k) {
        for (int i = 0; i < g.nx; ++i) {
            std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", sol.t_at(k), g.x_at(i), sol.u(k, i),
                          sol.ux(k, i));
            os << line;
        }
    }
}

PdeTable read_pde_csv(std::istream& is) {
    PdeTable t;
    std::string line;
    if (!std::getline(is, line) || line != "t,x,u,ux") throw ConfigError("PDE CSV: missing header 't,x,u,ux'");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto fields = split_row(line);
        if (fields.size() != 4) throw ConfigError("PDE CSV: bad row '" + line + "'");
        double v[4];
        for (int j = 0; j < 4; ++j) v[j] = parse_double(fields[static_cast<std::size_t>(j)]);
        t.t.push_back(v[0]);
        t.x.push_back(v[1]);
        t.u.push_back(v[2]);
        t.ux.push_back(v[3]);
    }
    return t;
}

} // namespace qgfbsde
