#include "qgfbsde/model.hpp"

#include "qgfbsde/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace qgfbsde {

ModelSpec make_spec(const std::string& b, const std::vector<std::string>& sigma, const std::string& f,
                    const std::string& g, double T, double x0) {
    ModelSpec s;
    s.b = Expression::parse(b);
    for (const auto& sig : sigma) s.sigma.push_back(Expression::parse(sig));
    s.f = Expression::parse(f);
    s.g = Expression::parse(g);
    s.T = T;
    s.x0 = x0;
    return s;
}

namespace {

void require_only(const Expression& e, const std::string& what, bool allow_t, bool allow_y, bool allow_z) {
    if (!allow_t && e.depends_on(VarKind::t)) throw ConfigError(what + " must not depend on t: " + e.to_string());
    if (!allow_y && e.depends_on(VarKind::y)) throw ConfigError(what + " must not depend on y: " + e.to_string());
    if (!allow_z && e.depends_on(VarKind::z)) throw ConfigError(what + " must not depend on z: " + e.to_string());
}

} // namespace

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
    if (spec_.d() < 1) throw ConfigError("model needs at least one volatility component (d >= 1)");
    if (!(spec_.T > 0.0) || !std::isfinite(spec_.T)) throw ConfigError("horizon T must be positive and finite");
    if (!std::isfinite(spec_.x0)) throw ConfigError("x0 must be finite");
    require_only(spec_.b, "drift b", true, false, false);
    for (std::size_t c = 0; c < spec_.sigma.size(); ++c)
        require_only(spec_.sigma[c], "sigma component " + std::to_string(c + 1), true, false, false);
    require_only(spec_.g, "terminal condition g", false, false, false);
    if (spec_.f.max_z_index() > spec_.d())
        throw ConfigError("driver f references z" + std::to_string(spec_.f.max_z_index()) +
                          " but d = " + std::to_string(spec_.d()));

    b_x_ = spec_.b.differentiate(Variable::x());
    for (const auto& s : spec_.sigma) sigma_x_.push_back(s.differentiate(Variable::x()));
    f_x_ = spec_.f.differentiate(Variable::x());
    f_y_ = spec_.f.differentiate(Variable::y());
    for (int k = 1; k <= spec_.d(); ++k) f_z_.push_back(spec_.f.differentiate(Variable::z(k)));
    g_x_ = spec_.g.differentiate(Variable::x());
}

double Model::b(double t, double x) const { return spec_.b.eval({t, x, 0.0, {}}); }
double Model::b_x(double t, double x) const { return b_x_.eval({t, x, 0.0, {}}); }

void Model::sigma(double t, double x, std::span<double> out) const {
    for (std::size_t c = 0; c < spec_.sigma.size(); ++c) out[c] = spec_.sigma[c].eval({t, x, 0.0, {}});
}

void Model::sigma_x(double t, double x, std::span<double> out) const {
    for (std::size_t c = 0; c < sigma_x_.size(); ++c) out[c] = sigma_x_[c].eval({t, x, 0.0, {}});
}

double Model::sigma_norm(double t, double x) const {
    double s2 = 0.0;
    for (const auto& s : spec_.sigma) {
        const double v = s.eval({t, x, 0.0, {}});
        s2 += v * v;
    }
    return std::sqrt(s2);
}

double Model::f(double t, double x, double y, std::span<const double> z) const { return spec_.f.eval({t, x, y, z}); }
double Model::f_x(double t, double x, double y, std::span<const double> z) const { return f_x_.eval({t, x, y, z}); }
double Model::f_y(double t, double x, double y, std::span<const double> z) const { return f_y_.eval({t, x, y, z}); }

void Model::f_z(double t, double x, double y, std::span<const double> z, std::span<double> out) const {
    for (std::size_t c = 0; c < f_z_.size(); ++c) out[c] = f_z_[c].eval({t, x, y, z});
}

double Model::g(double x) const { return spec_.g.eval({0.0, x, 0.0, {}}); }
double Model::g_x(double x) const { return g_x_.eval({0.0, x, 0.0, {}}); }

// ---------------------------------------------------------------------------

double Range::at(int i) const {
    if (count <= 1) return 0.5 * (lo + hi);
    return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
}

std::string SamplePoint::to_string() const {
    std::ostringstream os;
    os << "(t=" << format_number(t) << ", x=" << format_number(x) << ", y=" << format_number(y);
    for (std::size_t c = 0; c < z.size(); ++c) os << ", z" << c + 1 << "=" << format_number(z[c]);
    os << ")";
    return os.str();
}

std::string SampleBox::describe() const {
    std::ostringstream os;
    auto r = [&os](const char* name, const Range& g) {
        os << name << "[" << format_number(g.lo) << "," << format_number(g.hi) << "]x" << g.count;
    };
    r("t", t);
    os << " ";
    r("x", x);
    os << " ";
    r("y", y);
    os << " ";
    r("z", z);
    os << " per component";
    return os.str();
}

SampleBox default_sample_box(const Model& m, double x_lo, double x_hi) {
    const int nz = m.d() == 1 ? 17 : (m.d() == 2 ? 9 : 5);
    return SampleBox{{0.0, m.T(), 5}, {x_lo, x_hi, 41}, {-4.0, 4.0, 9}, {-8.0, 8.0, nz}};
}

namespace {

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double a : v) s += a * a;
    return std::sqrt(s);
}

// Tracks the supremum of a checked quotient over the full box and over the inner box.
struct Envelope {
    std::string name;
    double full = 0.0;
    double inner = 0.0;
    SamplePoint argmax;
    bool seen = false;

    Envelope(std::string n) : name(std::move(n)) {}

    void update(double v, bool is_inner, const SamplePoint& p) {
        if (!seen || v > full || std::isnan(v)) {
            full = v;
            argmax = p;
            seen = true;
        }
        if (is_inner) inner = std::max(inner, v);
    }
};

class Checker {
public:
    Checker(const Model& m, const SampleBox& box, double growth_factor)
        : m_(m), box_(box), growth_factor_(growth_factor) {}

    AssumptionReport run(bool check_h2, double ellipticity_tol);

private:
    const Model& m_;
    SampleBox box_;
    double growth_factor_;
    AssumptionReport rep_;
    std::vector<std::string> failed_conditions_;

    bool inside_inner(double x, double y, std::span<const double> z) const {
        auto in = [](const Range& r, double v) {
            const double c = 0.5 * (r.lo + r.hi);
            const double h = 0.5 * (r.hi - r.lo);
            return std::abs(v - c) <= 0.5 * h + 1e-12 * (1.0 + std::abs(h));
        };
        if (!in(box_.x, x) || !in(box_.y, y)) return false;
        return std::all_of(z.begin(), z.end(), [&](double v) { return in(box_.z, v); });
    }

    void record_failure(const std::string& condition, const SamplePoint& p, const std::string& what) {
        if (std::find(failed_conditions_.begin(), failed_conditions_.end(), condition) != failed_conditions_.end())
            return;
        failed_conditions_.push_back(condition);
        rep_.violations.push_back({"evaluation failure: " + condition + ": " + what, p.to_string(), 0.0, 0.0});
    }

    void check_envelope(const Envelope& e) {
        if (!std::isfinite(e.full)) {
            rep_.violations.push_back({e.name + " is not finite", e.argmax.to_string(), e.full, 0.0});
            return;
        }
        const double bound = growth_factor_ * e.inner;
        if (e.full > bound + 1e-9)
            rep_.violations.push_back({e.name + " grows superlinearly across the sample box",
                                       e.argmax.to_string(), e.full, bound});
    }

    std::vector<double> sample_z(std::mt19937_64& rng, const Range& r) const {
        std::uniform_real_distribution<double> u(r.lo, r.hi);
        std::vector<double> z(static_cast<std::size_t>(m_.d()));
        for (double& v : z) v = u(rng);
        return z;
    }

    void lipschitz_h2(bool inner_box, std::vector<Envelope>& env);

    // A lattice can step over an isolated zero of |sigma| (sigma = x on an even grid);
    // golden-section search between the neighbours of each lattice local minimum.
    void refine_sigma_floor(double t, const std::vector<double>& row, double& floor, SamplePoint& floor_at) const {
        const int n = static_cast<int>(row.size());
        if (n < 3) return;
        for (int i = 0; i < n; ++i) {
            const double s = row[static_cast<std::size_t>(i)];
            if (!std::isfinite(s)) continue;
            if ((i > 0 && !(s <= row[static_cast<std::size_t>(i - 1)])) ||
                (i + 1 < n && !(s <= row[static_cast<std::size_t>(i + 1)])))
                continue;
            double a = box_.x.at(std::max(i - 1, 0)), b = box_.x.at(std::min(i + 1, n - 1));
            if (!(b - a > 0.0)) continue;
            const double r = 0.5 * (std::sqrt(5.0) - 1.0);
            try {
                double c = b - r * (b - a), dd = a + r * (b - a);
                double fc = m_.sigma_norm(t, c), fd = m_.sigma_norm(t, dd);
                for (int it = 0; it < 100 && b - a > 1e-14 * (1.0 + std::abs(a)); ++it) {
                    if (fc < fd) {
                        b = dd; dd = c; fd = fc;
                        c = b - r * (b - a);
                        fc = m_.sigma_norm(t, c);
                    } else {
                        a = c; c = dd; fc = fd;
                        dd = a + r * (b - a);
                        fd = m_.sigma_norm(t, dd);
                    }
                }
                const double x = fc < fd ? c : dd;
                const double v = std::min(fc, fd);
                if (v < floor) {
                    floor = v;
                    floor_at = SamplePoint{t, x, 0.0, {}};
                }
            } catch (const EvalError&) {
                // reported by the lattice pass
            }
        }
    }
};

AssumptionReport Checker::run(bool check_h2, double ellipticity_tol) {
    const int d = m_.d();
    rep_.grid_used = box_.describe() + (check_h2 ? "; H2 on 2000 random pairs per box, seed 20111207" : "");

    Envelope f_env{"|f| / (1+|y|+|z|^2)"}, fx_env{"|df/dx| / (1+|y|+|z|^2)"}, fy_env{"|df/dy|"},
        fz_env{"|df/dz| / (1+|z|)"};
    Envelope bx_env{"|db/dx|"}, sx_env{"|dsigma/dx|"}, g_env{"|g|"}, gx_env{"|dg/dx|"};
    double floor = std::numeric_limits<double>::infinity();
    SamplePoint floor_at;

    std::vector<double> z(static_cast<std::size_t>(d));
    std::vector<double> buf(static_cast<std::size_t>(d));
    std::vector<int> zi(static_cast<std::size_t>(d));

    // g and its derivative depend on x only
    for (int ix = 0; ix < box_.x.count; ++ix) {
        const double x = box_.x.at(ix);
        SamplePoint p{0.0, x, 0.0, {}};
        const bool inner = inside_inner(x, 0.5 * (box_.y.lo + box_.y.hi), {});
        try {
            g_env.update(std::abs(m_.g(x)), inner, p);
        } catch (const EvalError& e) {
            record_failure("g", p, e.what());
        }
        try {
            gx_env.update(std::abs(m_.g_x(x)), inner, p);
        } catch (const EvalError& e) {
            record_failure("dg/dx", p, e.what());
        }
    }

    for (int it = 0; it < box_.t.count; ++it) {
        const double t = box_.t.at(it);
        SamplePoint p0{t, 0.0, 0.0, {}};
        try {
            const double b0 = m_.b(t, 0.0);
            m_.sigma(t, 0.0, buf);
            if (!std::isfinite(b0) || !std::isfinite(norm(buf)))
                rep_.violations.push_back({"|b(t,0)| or |sigma(t,0)| not finite", p0.to_string(), b0, norm(buf)});
        } catch (const EvalError& e) {
            record_failure("b(t,0), sigma(t,0)", p0, e.what());
        }

        std::vector<double> row_sigma(static_cast<std::size_t>(box_.x.count), std::numeric_limits<double>::quiet_NaN());
        for (int ix = 0; ix < box_.x.count; ++ix) {
            const double x = box_.x.at(ix);
            SamplePoint px{t, x, 0.0, {}};
            const bool inner_x = inside_inner(x, 0.5 * (box_.y.lo + box_.y.hi), {});
            try {
                const double s = m_.sigma_norm(t, x);
                row_sigma[static_cast<std::size_t>(ix)] = s;
                if (s < floor) {
                    floor = s;
                    floor_at = px;
                }
                bx_env.update(std::abs(m_.b_x(t, x)), inner_x, px);
                m_.sigma_x(t, x, buf);
                sx_env.update(norm(buf), inner_x, px);
            } catch (const EvalError& e) {
                record_failure("b, sigma", px, e.what());
            }

            for (int iy = 0; iy < box_.y.count; ++iy) {
                const double y = box_.y.at(iy);
                std::fill(zi.begin(), zi.end(), 0);
                while (true) {
                    for (int c = 0; c < d; ++c) z[static_cast<std::size_t>(c)] = box_.z.at(zi[static_cast<std::size_t>(c)]);
                    SamplePoint p{t, x, y, z};
                    const bool inner = inside_inner(x, y, z);
                    const double zn = norm(z);
                    const double env = 1.0 + std::abs(y) + zn * zn;
                    try {
                        f_env.update(std::abs(m_.f(t, x, y, z)) / env, inner, p);
                        fx_env.update(std::abs(m_.f_x(t, x, y, z)) / env, inner, p);
                        fy_env.update(std::abs(m_.f_y(t, x, y, z)), inner, p);
                        m_.f_z(t, x, y, z, buf);
                        fz_env.update(norm(buf) / (1.0 + zn), inner, p);
                    } catch (const EvalError& e) {
                        record_failure("f and its derivatives", p, e.what());
                    }
                    int c = 0;
                    while (c < d && ++zi[static_cast<std::size_t>(c)] == box_.z.count) zi[static_cast<std::size_t>(c++)] = 0;
                    if (c == d) break;
                }
            }
        }
        refine_sigma_floor(t, row_sigma, floor, floor_at);
    }

    for (const Envelope* e : {&f_env, &fx_env, &fy_env, &fz_env, &bx_env, &sx_env, &g_env, &gx_env})
        check_envelope(*e);

    rep_.growth_constant_M = std::max({f_env.full, fx_env.full, fy_env.full, fz_env.full});
    rep_.lipschitz_constant_K = std::max(bx_env.full, sx_env.full);
    rep_.ellipticity_floor = std::isfinite(floor) ? floor : 0.0;
    if (!(rep_.ellipticity_floor > ellipticity_tol))
        rep_.violations.push_back({"sigma not uniformly elliptic", floor_at.to_string(), rep_.ellipticity_floor,
                                   ellipticity_tol});

    if (check_h2) {
        std::vector<Envelope> full_env, inner_env;
        lipschitz_h2(false, full_env);
        lipschitz_h2(true, inner_env);
        for (std::size_t i = 0; i < full_env.size(); ++i) {
            Envelope e = full_env[i];
            e.inner = inner_env[i].full;
            check_envelope(e);
            rep_.lipschitz_constant_K = std::max(rep_.lipschitz_constant_K, e.full);
        }
    }

    rep_.passed = rep_.violations.empty();
    return rep_;
}

void Checker::lipschitz_h2(bool inner_box, std::vector<Envelope>& env) {
    env = {{"H2 Lipschitz quotient of db/dx"}, {"H2 Lipschitz quotient of dsigma/dx"},
           {"H2 Lipschitz quotient of dg/dx"}, {"H2 Lipschitz quotient of df/dy"},
           {"H2 Lipschitz quotient of df/dx"}, {"H2 Lipschitz quotient of df/dz"}};
    auto shrink = [inner_box](const Range& r) {
        if (!inner_box) return r;
        const double c = 0.5 * (r.lo + r.hi), h = 0.25 * (r.hi - r.lo);
        return Range{c - h, c + h, r.count};
    };
    const Range xr = shrink(box_.x), yr = shrink(box_.y), zr = shrink(box_.z);
    std::mt19937_64 rng(20111207);
    std::uniform_real_distribution<double> ut(box_.t.lo, box_.t.hi), ux(xr.lo, xr.hi), uy(yr.lo, yr.hi);
    const auto d = static_cast<std::size_t>(m_.d());
    std::vector<double> a(d), b(d);

    for (int i = 0; i < 2000; ++i) {
        const double t = ut(rng);
        const double x1 = ux(rng), x2 = ux(rng), y1 = uy(rng), y2 = uy(rng);
        const std::vector<double> z1 = sample_z(rng, zr), z2 = sample_z(rng, zr);
        SamplePoint p{t, x1, y1, z1};
        try {
            const double dx = std::abs(x1 - x2);
            double dz = 0.0;
            for (std::size_t c = 0; c < d; ++c) dz += (z1[c] - z2[c]) * (z1[c] - z2[c]);
            dz = std::sqrt(dz);
            const double dy = std::abs(y1 - y2);
            if (dx > 0.0) {
                env[0].update(std::abs(m_.b_x(t, x1) - m_.b_x(t, x2)) / dx, false, p);
                m_.sigma_x(t, x1, a);
                m_.sigma_x(t, x2, b);
                double ds = 0.0;
                for (std::size_t c = 0; c < d; ++c) ds += (a[c] - b[c]) * (a[c] - b[c]);
                env[1].update(std::sqrt(ds) / dx, false, p);
                env[2].update(std::abs(m_.g_x(x1) - m_.g_x(x2)) / dx, false, p);
            }
            const double dist = dx + dy + dz;
            if (dist > 0.0) {
                const double w = 1.0 + norm(z1) + norm(z2);
                env[3].update(std::abs(m_.f_y(t, x1, y1, z1) - m_.f_y(t, x2, y2, z2)) / dist, false, p);
                env[4].update(std::abs(m_.f_x(t, x1, y1, z1) - m_.f_x(t, x2, y2, z2)) / (w * (w * dx + dy + dz)),
                              false, p);
                m_.f_z(t, x1, y1, z1, a);
                m_.f_z(t, x2, y2, z2, b);
                double dfz = 0.0;
                for (std::size_t c = 0; c < d; ++c) dfz += (a[c] - b[c]) * (a[c] - b[c]);
                env[5].update(std::sqrt(dfz) / (w * dx + dy + dz), false, p);
            }
        } catch (const EvalError& e) {
            record_failure("H2 derivatives", p, e.what());
        }
    }
}

} // namespace

AssumptionReport validate_assumptions(const Model& m, const SampleBox& box, bool check_h2, double growth_factor,
                                      double ellipticity_tol) {
    if (box.t.count < 1 || box.x.count < 1 || box.y.count < 1 || box.z.count < 1)
        throw ConfigError("sample grid must be nonempty");
    Checker c(m, box, growth_factor);
    return c.run(check_h2, ellipticity_tol);
}

// ---------------------------------------------------------------------------

const char* to_string(Direction d) {
    switch (d) {
    case Direction::increasing: return "increasing";
    case Direction::decreasing: return "decreasing";
    case Direction::constant: return "constant";
    case Direction::nonmonotone: return "nonmonotone";
    }
    return "?";
}

MonotonicityReport check_monotone_in_x(const Expression& e, const Range& x_grid, std::span<const SamplePoint> probes,
                                       double strict_tol) {
    if (x_grid.count < 1 || probes.empty()) throw ConfigError("monotonicity grid must be nonempty");
    const Expression de = e.differentiate(Variable::x());
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    SamplePoint at_lo, at_hi;
    for (const SamplePoint& probe : probes) {
        for (int i = 0; i < x_grid.count; ++i) {
            const double x = x_grid.at(i);
            const double v = de.eval({probe.t, x, probe.y, probe.z});
            if (v < lo) {
                lo = v;
                at_lo = {probe.t, x, probe.y, probe.z};
            }
            if (v > hi) {
                hi = v;
                at_hi = {probe.t, x, probe.y, probe.z};
            }
        }
    }
    MonotonicityReport r;
    r.min_derivative = lo;
    r.max_derivative = hi;
    if (lo >= -strict_tol && hi <= strict_tol) {
        r.direction = Direction::constant;
        r.witness = std::abs(lo) > std::abs(hi) ? at_lo : at_hi;
    } else if (lo >= -strict_tol) {
        r.direction = Direction::increasing;
        r.strict = lo > strict_tol;
        r.witness = at_lo;
    } else if (hi <= strict_tol) {
        r.direction = Direction::decreasing;
        r.strict = hi < -strict_tol;
        r.witness = at_hi;
    } else {
        r.direction = Direction::nonmonotone;
        r.witness = at_lo;
    }
    return r;
}

MonotonicityReport check_monotone(const Expression& e, const Range& x_grid, double strict_tol) {
    if (e.depends_on(VarKind::t) || e.depends_on(VarKind::y) || e.depends_on(VarKind::z))
        throw ConfigError("monotonicity check requires a function of x alone: " + e.to_string());
    const SamplePoint probe{};
    return check_monotone_in_x(e, x_grid, std::span<const SamplePoint>(&probe, 1), strict_tol);
}

std::vector<SamplePoint> probe_lattice(double T, int d, double y_max, double z_max, int n) {
    const Range tr{0.0, T, n}, yr{-y_max, y_max, n}, zr{-z_max, z_max, n};
    std::vector<SamplePoint> out;
    std::vector<int> zi(static_cast<std::size_t>(d), 0);
    for (int it = 0; it < n; ++it) {
        for (int iy = 0; iy < n; ++iy) {
            std::fill(zi.begin(), zi.end(), 0);
            while (true) {
                SamplePoint p{tr.at(it), 0.0, yr.at(iy), std::vector<double>(static_cast<std::size_t>(d))};
                for (int c = 0; c < d; ++c) p.z[static_cast<std::size_t>(c)] = zr.at(zi[static_cast<std::size_t>(c)]);
                out.push_back(std::move(p));
                int c = 0;
                while (c < d && ++zi[static_cast<std::size_t>(c)] == n) zi[static_cast<std::size_t>(c++)] = 0;
                if (c == d) break;
            }
        }
    }
    return out;
}

ComonotoneReport combine_comonotone(const MonotonicityReport& a, const MonotonicityReport& b) {
    ComonotoneReport r;
    r.first = a;
    r.second = b;
    const bool monotone = a.direction != Direction::nonmonotone && b.direction != Direction::nonmonotone;
    const bool compatible =
        a.direction == Direction::constant || b.direction == Direction::constant || a.direction == b.direction;
    r.comonotone = monotone && compatible;
    r.strict = a.strict && b.strict && a.direction == b.direction;
    return r;
}

ComonotoneReport check_comonotone(const Expression& e1, const Expression& e2, const Range& x_grid, double strict_tol) {
    return combine_comonotone(check_monotone(e1, x_grid, strict_tol), check_monotone(e2, x_grid, strict_tol));
}

bool jointly_comonotone(std::span<const MonotonicityReport> reports) {
    bool inc = false, dec = false;
    for (const auto& r : reports) {
        if (r.direction == Direction::nonmonotone) return false;
        inc |= r.direction == Direction::increasing;
        dec |= r.direction == Direction::decreasing;
    }
    return !(inc && dec);
}

} // namespace qgfbsde
