#include "qgfbsde/theorems.hpp"

#include "qgfbsde/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

namespace qgfbsde {

std::vector<double> odot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw ConfigError("odot: length mismatch (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

bool odot_nonnegative(std::span<const double> a, std::span<const double> b, double tol) {
    const auto p = odot(a, b);
    return std::all_of(p.begin(), p.end(), [tol](double v) { return v >= -tol; });
}

std::string Location::to_string() const {
    std::string s;
    if (path >= 0) {
        s = "path " + std::to_string(path) + ", step " + std::to_string(step);
        if (component >= 0) s += ", component " + std::to_string(component + 1);
        s += " (t=" + format_number(t) + ", x=" + format_number(x) + ")";
    } else {
        s = "t=" + format_number(t) + ", x=" + format_number(x);
    }
    return s;
}

SignCertificate make_certificate(std::string quantity, double min_value, Location at, double tolerance) {
    SignCertificate c;
    c.quantity = std::move(quantity);
    c.min_value = min_value;
    c.argmin = at;
    c.tolerance = tolerance;
    c.passed = min_value >= -tolerance;
    c.strict = min_value > tolerance;
    return c;
}

SignCertificate make_strict_certificate(std::string quantity, double min_value, Location at, double tolerance) {
    SignCertificate c = make_certificate(std::move(quantity), min_value, at, tolerance);
    c.passed = c.strict;
    c.strict_required = true;
    return c;
}

const char* to_string(Verdict v) {
    switch (v) {
    case Verdict::passed: return "passed";
    case Verdict::failed: return "failed";
    case Verdict::hypotheses_not_satisfied: return "hypotheses not satisfied - conclusion not asserted";
    }
    return "?";
}

bool TheoremReport::hypotheses_satisfied() const {
    return std::all_of(hypotheses.begin(), hypotheses.end(), [](const Hypothesis& h) { return h.passed; });
}

Verdict TheoremReport::verdict() const {
    if (!hypotheses_satisfied()) return Verdict::hypotheses_not_satisfied;
    if (!conclusion.passed) return Verdict::failed;
    for (const auto& c : supporting)
        if (c.gating && !c.passed) return Verdict::failed;
    return Verdict::passed;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct NodeMin {
    double value = kInf;
    Location at;

    void offer(double v, const Location& l) {
        // NaN must surface as a failure, never be skipped by the comparison
        if (v < value || (std::isnan(v) && !std::isnan(value))) {
            value = v;
            at = l;
        }
    }
};

// Per-path minima reduced serially in path order so the argmin is independent of the worker count.
template <class PerPath>
NodeMin min_over_paths(int P, Execution exec, PerPath&& per_path) {
    std::vector<NodeMin> local(static_cast<std::size_t>(P));
    parallel_for(static_cast<std::size_t>(P), exec,
                 [&](std::size_t p) { per_path(static_cast<int>(p), local[p]); });
    NodeMin best;
    for (const auto& l : local) best.offer(l.value, l.at);
    return best;
}

// Grid-node minimum of q(k, i) over rows 0..nt and columns [i_lo, i_hi].
template <class Q>
NodeMin min_over_grid(const PdeSolution& s, int i_lo, int i_hi, Q&& q) {
    NodeMin best;
    for (int k = 0; k <= s.grid().nt; ++k)
        for (int i = i_lo; i <= i_hi; ++i) best.offer(q(k, i), Location{s.t_at(k), s.grid().x_at(i)});
    return best;
}

std::pair<int, int> interior_columns(const Grid& g) {
    return {g.nx / 4, g.nx - 1 - g.nx / 4};
}

std::string yes_no(bool b) { return b ? "yes" : "no"; }

std::string describe(const MonotonicityReport& r) {
    return std::string(to_string(r.direction)) + (r.strict ? " (strict)" : "") + ", derivative in [" +
           format_number(r.min_derivative) + ", " + format_number(r.max_derivative) + "]";
}

Hypothesis assumption_hypothesis(const std::string& name, const Model& m, const Grid& grid, bool check_h2) {
    const AssumptionReport a = validate_assumptions(m, default_sample_box(m, grid.x_min, grid.x_max), check_h2);
    Hypothesis h{name, a.passed, {}};
    std::ostringstream os;
    os << "M=" << format_number(a.growth_constant_M) << ", K=" << format_number(a.lipschitz_constant_K)
       << ", ellipticity floor=" << format_number(a.ellipticity_floor) << ", violations=" << a.violations.size();
    if (!a.violations.empty()) os << " (first: " << a.violations.front().condition << " at " << a.violations.front().point << ")";
    h.evidence = os.str();
    return h;
}

Range x_range(const Grid& g, int points) { return Range{g.x_min, g.x_max, points}; }

struct DataMonotonicity {
    MonotonicityReport g;
    MonotonicityReport f;
};

DataMonotonicity data_monotonicity(const Model& m, const Grid& grid, const TheoremOptions& opts) {
    const SampleBox box = default_sample_box(m, grid.x_min, grid.x_max);
    const auto probes = probe_lattice(m.T(), m.d(), box.y.hi, box.z.hi, opts.probe_points);
    const Range xs = x_range(grid, opts.monotone_points);
    return {check_monotone(m.spec().g, xs), check_monotone_in_x(m.spec().f, xs, probes)};
}

Hypothesis comonotone_hypothesis(const std::string& name, const MonotonicityReport& a, const MonotonicityReport& b) {
    const ComonotoneReport c = combine_comonotone(a, b);
    return {name, c.comonotone, describe(a) + "; " + describe(b)};
}

double sign_of(Direction d) { return d == Direction::decreasing ? -1.0 : 1.0; }

// Largest per-step regression SE over components.
double step_se(const BsdeSolution& sol, int k) {
    double se = 0.0;
    for (int c = 0; c < sol.d; ++c)
        se = std::max(se, sol.diagnostics.z_se[static_cast<std::size_t>(k) * static_cast<std::size_t>(sol.d) +
                                               static_cast<std::size_t>(c)]);
    return se;
}

McConfig with_pde_clip(McConfig cfg, const PdeSolution& s, const Model& m) {
    if (!cfg.z_clip) {
        const double clip = z_clip_from_pde(s, m);
        if (clip > 0.0) cfg.z_clip = clip;
    }
    return cfg;
}

} // namespace

SignCertificate sigma_product_certificate(const Model& m1, const PathEnsemble& e1, const Model& m2,
                                          const PathEnsemble& e2, double tol) {
    if (m1.d() != m2.d()) throw ConfigError("sigma product: models have different noise dimensions");
    const int d = m1.d(), N = e1.steps();
    const NodeMin best = min_over_paths(e1.paths(), Execution::parallel, [&](int p, NodeMin& out) {
        std::vector<double> s1(static_cast<std::size_t>(d)), s2(static_cast<std::size_t>(d));
        for (int k = 0; k <= N; ++k) {
            const double t = e1.t(k);
            m1.sigma(t, e1.x(p, k), s1);
            m2.sigma(t, e2.x(p, k), s2);
            for (int c = 0; c < d; ++c)
                out.offer(s1[static_cast<std::size_t>(c)] * s2[static_cast<std::size_t>(c)],
                          Location{t, e1.x(p, k), p, k, c});
        }
    });
    return make_certificate("sigma1 (.) sigma2", best.value, best.at, tol);
}

SignCertificate check_sigma_product(const Model& m1, const Model& m2, const McConfig& cfg, double tol) {
    if (m1.d() != m2.d()) throw ConfigError("sigma product: models have different noise dimensions");
    const PathEnsemble e1 = simulate_forward(m1, cfg);
    const PathEnsemble e2 = simulate_forward(m2, cfg);
    return sigma_product_certificate(m1, e1, m2, e2, tol);
}

TheoremReport verify_comonotonicity(const Model& m1, const Model& m2, const Grid& grid, const McConfig& cfg,
                                    const TheoremOptions& opts) {
    if (m1.d() != m2.d()) throw ConfigError("comonotonicity: models have different noise dimensions");
    if (m1.T() != m2.T()) throw ConfigError("comonotonicity: models have different horizons");
    grid.validate(m1.x0());
    grid.validate(m2.x0());

    TheoremReport r;
    r.theorem = "comonotonicity";
    r.backends_used = {"pde", "mc"};

    r.hypotheses.push_back(assumption_hypothesis("model 1 assumptions", m1, grid, opts.check_h2));
    r.hypotheses.push_back(assumption_hypothesis("model 2 assumptions", m2, grid, opts.check_h2));
    const DataMonotonicity d1 = data_monotonicity(m1, grid, opts);
    const DataMonotonicity d2 = data_monotonicity(m2, grid, opts);
    r.hypotheses.push_back(comonotone_hypothesis("g1 and x -> f1 comonotone", d1.g, d1.f));
    r.hypotheses.push_back(comonotone_hypothesis("g2 and x -> f2 comonotone", d2.g, d2.f));
    r.hypotheses.push_back(comonotone_hypothesis("g1 and g2 comonotone", d1.g, d2.g));
    // Constants are comonotone with everything, so the pairwise checks alone let g1 = g2 = const
    // pair an increasing f1 with a decreasing f2.
    {
        const MonotonicityReport all[] = {d1.g, d1.f, d2.g, d2.f};
        r.hypotheses.push_back({"g1, f1, g2, f2 share one direction", jointly_comonotone(all),
                                std::string(to_string(d1.g.direction)) + ", " + to_string(d1.f.direction) + ", " +
                                    to_string(d2.g.direction) + ", " + to_string(d2.f.direction)});
    }

    const PathEnsemble e1 = simulate_forward(m1, cfg);
    const PathEnsemble e2 = simulate_forward(m2, cfg);
    const SignCertificate sig = sigma_product_certificate(m1, e1, m2, e2, opts.tol);
    r.hypotheses.push_back({"sigma1 (.) sigma2 >= 0 along coupled paths", sig.passed,
                            "min " + format_number(sig.min_value) + " at " + sig.argmin.to_string()});

    // PDE: ux1 ux2 at every node
    const PdeSolution s1 = solve_pde(m1, grid, opts.scheme);
    const PdeSolution s2 = solve_pde(m2, grid, opts.scheme);
    const NodeMin pde_min = min_over_grid(s1, 0, grid.nx - 1, [&](int k, int i) { return s1.ux(k, i) * s2.ux(k, i); });
    r.conclusion = make_certificate("min ux1*ux2 over grid", pde_min.value, pde_min.at, opts.tol);

    // MC primary: PDE gradients read along the coupled paths
    const int d = m1.d(), N = e1.steps();
    long long outside = 0;
    std::vector<long long> outside_per_path(static_cast<std::size_t>(e1.paths()), 0);
    const NodeMin mc_min = min_over_paths(e1.paths(), cfg.exec, [&](int p, NodeMin& out) {
        std::vector<double> z1(static_cast<std::size_t>(d)), z2(static_cast<std::size_t>(d));
        for (int k = 0; k < N; ++k) {
            const double t = e1.t(k), x1 = e1.x(p, k), x2 = e2.x(p, k);
            if (!s1.contains(t, x1) || !s2.contains(t, x2)) {
                ++outside_per_path[static_cast<std::size_t>(p)];
                continue;
            }
            z_from_pde(s1, m1, t, x1, z1);
            z_from_pde(s2, m2, t, x2, z2);
            for (int c = 0; c < d; ++c)
                out.offer(z1[static_cast<std::size_t>(c)] * z2[static_cast<std::size_t>(c)], Location{t, x1, p, k, c});
        }
    });
    for (long long n : outside_per_path) outside += n;
    // PDE gradients are deterministic given the path, so the SE term of the MC budget is zero here.
    SignCertificate mc = make_certificate("min Z1 (.) Z2 along paths (PDE gradients)", mc_min.value, mc_min.at,
                                          opts.mc_budget);
    mc.note = std::to_string(outside) + " path nodes outside the grid skipped";
    r.supporting.push_back(mc);

    if (opts.run_regression) {
        const BsdeSolution b1 = solve_bsde_regression(e1, m1, with_pde_clip(cfg, s1, m1));
        const BsdeSolution b2 = solve_bsde_regression(e2, m2, with_pde_clip(cfg, s2, m2));
        double worst = kInf, worst_tol = opts.mc_budget;
        Location at;
        for (int k = 0; k < N; ++k) {
            double z1max = 0.0, z2max = 0.0;
            for (int c = 0; c < d; ++c) {
                double sum = 0.0;
                for (int p = 0; p < e1.paths(); ++p) {
                    sum += b1.z(p, k, c) * b2.z(p, k, c);
                    z1max = std::max(z1max, std::abs(b1.z(p, k, c)));
                    z2max = std::max(z2max, std::abs(b2.z(p, k, c)));
                }
                const double mean = sum / e1.paths();
                const double se = z1max * step_se(b2, k) + z2max * step_se(b1, k);
                const double tol = opts.se_multiplier * se + opts.mc_budget;
                if (mean + tol < worst + worst_tol || worst == kInf) {
                    worst = mean;
                    worst_tol = tol;
                    at = Location{e1.t(k), 0.0, -1, k, c};
                }
            }
        }
        SignCertificate reg = make_certificate("min over steps of mean Z1 (.) Z2 (regression)", worst, at, worst_tol);
        reg.gating = false;
        reg.note = "secondary evidence";
        r.supporting.push_back(reg);
    }

    const ComonotoneReport gg = combine_comonotone(d1.g, d2.g);
    if (gg.strict && sig.strict) {
        const auto [lo, hi] = interior_columns(grid);
        const NodeMin strict_min = min_over_grid(s1, lo, hi, [&](int k, int i) { return s1.ux(k, i) * s2.ux(k, i); });
        SignCertificate st = make_strict_certificate("min ux1*ux2 over interior (strict)", strict_min.value,
                                                     strict_min.at, opts.tol);
        st.note = "x in the middle half of the grid";
        r.supporting.push_back(st);
    }

    std::ostringstream os;
    os << "PDE min ux1*ux2 = " << format_number(r.conclusion.min_value) << " (tol " << format_number(opts.tol)
       << "); MC min Z1(.)Z2 = " << format_number(mc.min_value) << "; verdict: " << to_string(r.verdict());
    r.narrative = os.str();
    return r;
}

TheoremReport verify_positivity(const Model& m, const Grid& grid, const McConfig& cfg, const TheoremOptions& opts) {
    grid.validate(m.x0());
    TheoremReport r;
    r.theorem = "positivity";
    r.backends_used = {"pde", "mc"};

    r.hypotheses.push_back(assumption_hypothesis("model assumptions", m, grid, opts.check_h2));
    const DataMonotonicity dm = data_monotonicity(m, grid, opts);
    const ComonotoneReport route1 = combine_comonotone(dm.g, dm.f);

    // Second route: g and x -> f(t, x, 0, 0) both increasing.
    Expression f00 = m.spec().f.substitute(Variable::y(), Expression::constant(0.0));
    for (int c = 1; c <= m.d(); ++c) f00 = f00.substitute(Variable::z(c), Expression::constant(0.0));
    const SamplePoint t_probes[] = {{0.0, 0.0, 0.0, {}}, {0.5 * m.T(), 0.0, 0.0, {}}, {m.T(), 0.0, 0.0, {}}};
    const MonotonicityReport f00_rep = check_monotone_in_x(f00, x_range(grid, opts.monotone_points), t_probes);
    auto weakly_increasing = [](Direction d) { return d == Direction::increasing || d == Direction::constant; };
    const bool route2 = weakly_increasing(dm.g.direction) && weakly_increasing(f00_rep.direction);

    Hypothesis mono{"g and x -> f comonotone, or g and x -> f(t,x,0,0) increasing", route1.comonotone || route2, {}};
    mono.evidence = "g " + describe(dm.g) + "; f " + describe(dm.f) + "; f(t,x,0,0) " + describe(f00_rep);
    r.hypotheses.push_back(mono);

    Direction predicted = Direction::constant;
    if (route1.comonotone) {
        for (Direction d : {dm.g.direction, dm.f.direction})
            if (d != Direction::constant) predicted = d;
    } else if (route2) {
        if (dm.g.direction != Direction::constant || f00_rep.direction != Direction::constant)
            predicted = Direction::increasing;
    }
    const double s = sign_of(predicted);
    const bool zero_case = predicted == Direction::constant;

    const PdeSolution sol = solve_pde(m, grid, opts.scheme);
    if (zero_case) {
        const NodeMin best = min_over_grid(sol, 0, grid.nx - 1, [&](int k, int i) { return 0.0 - std::abs(sol.ux(k, i)); });
        r.conclusion = make_certificate("-max |ux| over grid", best.value, best.at, opts.tol);
    } else {
        const NodeMin best = min_over_grid(sol, 0, grid.nx - 1, [&](int k, int i) { return s * sol.ux(k, i); });
        r.conclusion = make_certificate(s > 0 ? "min ux over grid" : "min -ux over grid", best.value, best.at, opts.tol);
    }

    const PathEnsemble ens = simulate_forward(m, cfg);
    const int d = m.d(), N = ens.steps();
    std::vector<long long> outside(static_cast<std::size_t>(ens.paths()), 0);
    const NodeMin mc_min = min_over_paths(ens.paths(), cfg.exec, [&](int p, NodeMin& out) {
        std::vector<double> z(static_cast<std::size_t>(d)), sig(static_cast<std::size_t>(d));
        for (int k = 0; k < N; ++k) {
            const double t = ens.t(k), x = ens.x(p, k);
            if (!sol.contains(t, x)) {
                ++outside[static_cast<std::size_t>(p)];
                continue;
            }
            z_from_pde(sol, m, t, x, z);
            m.sigma(t, x, sig);
            for (int c = 0; c < d; ++c) {
                const double zc = z[static_cast<std::size_t>(c)];
                const double v = zero_case ? 0.0 - std::abs(zc) : s * zc * sig[static_cast<std::size_t>(c)];
                out.offer(v, Location{t, x, p, k, c});
            }
        }
    });
    long long skipped = 0;
    for (long long n : outside) skipped += n;
    const std::string mc_name = zero_case ? "-max |Z| along paths (PDE gradients)"
                                          : (s > 0 ? "min Z (.) sigma along paths (PDE gradients)"
                                                   : "min -Z (.) sigma along paths (PDE gradients)");
    SignCertificate mc = make_certificate(mc_name, mc_min.value, mc_min.at, zero_case ? opts.tol : opts.mc_budget);
    mc.note = std::to_string(skipped) + " path nodes outside the grid skipped";
    r.supporting.push_back(mc);

    if (opts.run_regression) {
        const BsdeSolution b = solve_bsde_regression(ens, m, with_pde_clip(cfg, sol, m));
        double worst = kInf, worst_tol = 0.0;
        Location at;
        std::vector<double> sig(static_cast<std::size_t>(d));
        for (int k = 0; k < N; ++k) {
            double smax = 0.0;
            std::vector<double> sum(static_cast<std::size_t>(d), 0.0);
            for (int p = 0; p < ens.paths(); ++p) {
                m.sigma(ens.t(k), ens.x(p, k), sig);
                for (int c = 0; c < d; ++c) {
                    const double zc = b.z(p, k, c), sc = sig[static_cast<std::size_t>(c)];
                    sum[static_cast<std::size_t>(c)] += zero_case ? 0.0 - std::abs(zc) : s * zc * sc;
                    smax = std::max(smax, std::abs(sc));
                }
            }
            for (int c = 0; c < d; ++c) {
                const double mean = sum[static_cast<std::size_t>(c)] / ens.paths();
                const double se = (zero_case ? 1.0 : smax) * step_se(b, k);
                const double tol = opts.se_multiplier * se + (zero_case ? opts.tol : opts.mc_budget);
                if (worst == kInf || mean + tol < worst + worst_tol) {
                    worst = mean;
                    worst_tol = tol;
                    at = Location{ens.t(k), 0.0, -1, k, c};
                }
            }
        }
        SignCertificate reg = make_certificate(zero_case ? "min over steps of mean -|Z| (regression)"
                                                         : "min over steps of mean signed Z (.) sigma (regression)",
                                               worst, at, worst_tol);
        reg.gating = false;
        reg.note = "secondary evidence";
        r.supporting.push_back(reg);
    }

    if (!zero_case && dm.g.strict) {
        const auto [lo, hi] = interior_columns(grid);
        const NodeMin best = min_over_grid(sol, lo, hi, [&](int k, int i) { return s * sol.ux(k, i); });
        SignCertificate st = make_strict_certificate(s > 0 ? "min ux over interior (strict)"
                                                           : "min -ux over interior (strict)",
                                                     best.value, best.at, opts.tol);
        st.note = "x in the middle half of the grid";
        r.supporting.push_back(st);
    }

    std::ostringstream os;
    os << "predicted direction " << to_string(predicted) << "; PDE " << r.conclusion.quantity << " = "
       << format_number(r.conclusion.min_value) << " (tol " << format_number(opts.tol) << "); verdict: "
       << to_string(r.verdict());
    r.narrative = os.str();
    return r;
}

ModelSpec sde_as_bsde(const ModelSpec& m, bool increasing) {
    ModelSpec out = m;
    const Expression y = Expression::variable(Variable::y());
    if (increasing) {
        out.g = Expression::variable(Variable::x());
        out.f = -m.b.substitute(Variable::x(), y);
    } else {
        out.g = -Expression::variable(Variable::x());
        out.f = m.b.substitute(Variable::x(), -y);
    }
    return out;
}

RewriteCheck sde_as_bsde_self_check(const Model& m, bool increasing, const McConfig& cfg, double budget) {
    RewriteCheck rc;
    rc.rewritten = sde_as_bsde(m.spec(), increasing);
    const Model rewritten(rc.rewritten);
    const PathEnsemble ens = simulate_forward(rewritten, cfg);
    const BsdeSolution b = solve_bsde_regression(ens, rewritten, cfg);
    const int d = m.d(), N = ens.steps(), P = ens.paths();
    const double s = increasing ? 1.0 : -1.0;

    std::vector<double> disc(static_cast<std::size_t>(N));
    parallel_for(static_cast<std::size_t>(N), cfg.exec, [&](std::size_t kz) {
        const int k = static_cast<int>(kz);
        std::vector<double> sig(static_cast<std::size_t>(d));
        double sum = 0.0;
        for (int p = 0; p < P; ++p) {
            m.sigma(ens.t(k), ens.x(p, k), sig);
            double worst = 0.0;
            for (int c = 0; c < d; ++c)
                worst = std::max(worst, std::abs(b.z(p, k, c) - s * sig[static_cast<std::size_t>(c)]));
            sum += worst;
        }
        disc[kz] = sum / P;
    });

    rc.passed = true;
    double worst_excess = -kInf;
    for (int k = 0; k < N; ++k) {
        const double tol = 3.0 * step_se(b, k) + budget;
        const double v = disc[static_cast<std::size_t>(k)];
        if (v > tol) rc.passed = false;
        if (v - tol > worst_excess) {
            worst_excess = v - tol;
            rc.max_step_discrepancy = v;
            rc.worst_step = k;
            rc.tolerance = tol;
        }
    }
    return rc;
}

RepresentationReport check_representation(const Model& m, const Grid& grid, const McConfig& cfg, double identity_tol,
                                          double budget, const SchemeParams& scheme) {
    grid.validate(m.x0());
    RepresentationReport rep;
    rep.identity_tolerance = identity_tol;
    const PdeSolution sol = solve_pde(m, grid, scheme);
    PathEnsemble ens = simulate_forward(m, cfg);
    simulate_variational(ens, m, cfg.exec);
    const BsdeSolution b = solve_bsde_regression(ens, m, with_pde_clip(cfg, sol, m));
    const int d = m.d(), N = ens.steps(), P = ens.paths();

    struct StepStats {
        double max_bc = 0.0, sum_bc = 0.0, sum_ab = 0.0, sum_ac = 0.0;
        long long nodes = 0, outside = 0;
    };
    std::vector<StepStats> stats(static_cast<std::size_t>(N));
    parallel_for(static_cast<std::size_t>(N), cfg.exec, [&](std::size_t kz) {
        const int k = static_cast<int>(kz);
        StepStats& st = stats[kz];
        std::vector<double> zb(static_cast<std::size_t>(d)), sig(static_cast<std::size_t>(d));
        const double t = ens.t(k);
        for (int p = 0; p < P; ++p) {
            const double x = ens.x(p, k);
            if (!sol.contains(t, x)) {
                ++st.outside;
                continue;
            }
            ++st.nodes;
            z_from_pde(sol, m, t, x, zb);
            m.sigma(t, x, sig);
            const double gx = ens.grad_x(p, k);
            const double grad_y = sol.eval_ux(t, x) * gx;
            double bc = 0.0, ab = 0.0, ac = 0.0;
            for (int c = 0; c < d; ++c) {
                const double zc = grad_y / gx * sig[static_cast<std::size_t>(c)];
                const double za = b.z(p, k, c);
                bc = std::max(bc, std::abs(zb[static_cast<std::size_t>(c)] - zc));
                ab = std::max(ab, std::abs(za - zb[static_cast<std::size_t>(c)]));
                ac = std::max(ac, std::abs(za - zc));
            }
            st.max_bc = std::max(st.max_bc, bc);
            st.sum_bc += bc;
            st.sum_ab += ab;
            st.sum_ac += ac;
        }
    });

    double sum_bc = 0.0, sum_ab = 0.0;
    double worst_excess = -kInf;
    rep.statistical_passed = true;
    for (int k = 0; k < N; ++k) {
        const StepStats& st = stats[static_cast<std::size_t>(k)];
        rep.nodes_checked += st.nodes;
        rep.nodes_outside_grid += st.outside;
        rep.max_pde_vs_malliavin = std::max(rep.max_pde_vs_malliavin, st.max_bc);
        sum_bc += st.sum_bc;
        sum_ab += st.sum_ab;
        if (st.nodes == 0) continue;
        const double n = static_cast<double>(st.nodes);
        const double ab = st.sum_ab / n, ac = st.sum_ac / n;
        const double tol = 3.0 * step_se(b, k) + budget;
        rep.max_step_regression_vs_pde = std::max(rep.max_step_regression_vs_pde, ab);
        rep.max_step_regression_vs_malliavin = std::max(rep.max_step_regression_vs_malliavin, ac);
        if (ab > tol || ac > tol) rep.statistical_passed = false;
        if (std::max(ab, ac) - tol > worst_excess) {
            worst_excess = std::max(ab, ac) - tol;
            rep.worst_step = k;
            rep.statistical_tolerance = tol;
        }
    }
    if (rep.nodes_checked > 0) {
        rep.mean_pde_vs_malliavin = sum_bc / static_cast<double>(rep.nodes_checked);
        rep.mean_regression_vs_pde = sum_ab / static_cast<double>(rep.nodes_checked);
    }
    rep.identity_passed = rep.max_pde_vs_malliavin <= identity_tol;
    return rep;
}

SignCertificate check_y_comparison(const Model& m1, const Model& m2, const Grid& grid, double tol,
                                   const SchemeParams& scheme) {
    if (m1.d() != m2.d()) throw ConfigError("comparison: models have different noise dimensions");
    grid.validate(m1.x0());
    auto below = [](double a, double b) { return a - b < -1e-12 * (1.0 + std::abs(b)); };

    for (int i = 0; i < grid.nx; ++i) {
        const double x = grid.x_at(i);
        if (below(m1.g(x), m2.g(x)))
            throw ConfigError("ordering hypothesis fails at (x=" + format_number(x) + "): g1 < g2");
    }
    const SampleBox box = default_sample_box(m1, grid.x_min, grid.x_max);
    const int d = m1.d();
    std::vector<int> zi(static_cast<std::size_t>(d), 0);
    SamplePoint pt;
    pt.z.assign(static_cast<std::size_t>(d), 0.0);
    for (int it = 0; it < box.t.count; ++it)
        for (int ix = 0; ix < box.x.count; ++ix)
            for (int iy = 0; iy < box.y.count; ++iy) {
                std::fill(zi.begin(), zi.end(), 0);
                for (;;) {
                    pt.t = box.t.at(it);
                    pt.x = box.x.at(ix);
                    pt.y = box.y.at(iy);
                    for (int c = 0; c < d; ++c) pt.z[static_cast<std::size_t>(c)] = box.z.at(zi[static_cast<std::size_t>(c)]);
                    if (below(m1.f(pt.t, pt.x, pt.y, pt.z), m2.f(pt.t, pt.x, pt.y, pt.z)))
                        throw ConfigError("ordering hypothesis fails at " + pt.to_string() + ": f1 < f2");
                    int c = 0;
                    while (c < d && ++zi[static_cast<std::size_t>(c)] == box.z.count) zi[static_cast<std::size_t>(c++)] = 0;
                    if (c == d) break;
                }
            }

    const PdeSolution s1 = solve_pde(m1, grid, scheme);
    const PdeSolution s2 = solve_pde(m2, grid, scheme);
    const NodeMin best = min_over_grid(s1, 0, grid.nx - 1, [&](int k, int i) { return s1.u(k, i) - s2.u(k, i); });
    return make_certificate("min u1-u2 over grid", best.value, best.at, tol);
}

namespace {

void write_certificate(std::ostream& os, const std::string& prefix, const SignCertificate& c) {
    os << prefix << ".quantity = " << c.quantity << "\n";
    os << prefix << ".min_value = " << format_number(c.min_value) << "\n";
    os << prefix << ".argmin = " << c.argmin.to_string() << "\n";
    os << prefix << ".tolerance = " << format_number(c.tolerance) << "\n";
    os << prefix << ".passed = " << yes_no(c.passed) << "\n";
    os << prefix << ".strict = " << yes_no(c.strict) << "\n";
    os << prefix << ".gating = " << yes_no(c.gating) << "\n";
    os << prefix << ".strict_required = " << yes_no(c.strict_required) << "\n";
    if (!c.note.empty()) os << prefix << ".note = " << c.note << "\n";
}

} // namespace

void write_report(std::ostream& os, const TheoremReport& r) {
    os << "theorem = " << r.theorem << "\n";
    os << "backends =";
    for (const auto& b : r.backends_used) os << " " << b;
    os << "\n";
    for (std::size_t i = 0; i < r.hypotheses.size(); ++i) {
        const auto& h = r.hypotheses[i];
        const std::string p = "hypothesis." + std::to_string(i + 1);
        os << p << ".name = " << h.name << "\n";
        os << p << ".passed = " << yes_no(h.passed) << "\n";
        os << p << ".evidence = " << h.evidence << "\n";
    }
    write_certificate(os, "conclusion", r.conclusion);
    for (std::size_t i = 0; i < r.supporting.size(); ++i)
        write_certificate(os, "supporting." + std::to_string(i + 1), r.supporting[i]);
    os << "narrative = " << r.narrative << "\n";
    os << "verdict = " << to_string(r.verdict()) << "\n";
}

void write_product_csv(std::ostream& os, const PdeSolution& s1, const PdeSolution& s2) {
    if (s1.grid().nx != s2.grid().nx || s1.grid().nt != s2.grid().nt)
        throw ConfigError("product table: grids differ");
    os << "t,x,ux1,ux2,product\n";
    char buf[160];
    for (int k = 0; k <= s1.grid().nt; ++k)
        for (int i = 0; i < s1.grid().nx; ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", s1.t_at(k), s1.grid().x_at(i),
                          s1.ux(k, i), s2.ux(k, i), s1.ux(k, i) * s2.ux(k, i));
            os << buf;
        }
}

} // namespace qgfbsde
