// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any criterion fails.
// Each criterion prints its evidence lines first, then the verdict line.

#include "qgfbsde/error.hpp"
#include "qgfbsde/mc.hpp"
#include "qgfbsde/pde.hpp"
#include "qgfbsde/theorems.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <string>
#include <tuple>
#include <vector>

using namespace qgfbsde;

namespace {

constexpr int kPaths = 100000;
constexpr int kSteps = 100;

class Criterion {
public:
    Criterion(int number, std::string title) : number_(number), title_(std::move(title)) {}

    void check(bool ok, const char* fmt, ...) __attribute__((format(printf, 3, 4))) {
        char buf[512];
        va_list args;
        va_start(args, fmt);
        std::vsnprintf(buf, sizeof buf, fmt, args);
        va_end(args);
        std::printf("    [%s] %s\n", ok ? "ok" : "XX", buf);
        std::fflush(stdout);
        passed_ = passed_ && ok;
    }

    void fail_with(const std::exception& e) { check(false, "exception: %s", e.what()); }

    bool finish() const {
        std::printf("criterion %d: %s  %s\n", number_, passed_ ? "PASS" : "FAIL", title_.c_str());
        std::fflush(stdout);
        return passed_;
    }

private:
    int number_;
    std::string title_;
    bool passed_ = true;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

Model model(const std::string& b, std::vector<std::string> sigma, const std::string& f, const std::string& g,
            double x0 = 0.0, double T = 1.0) {
    return Model(make_spec(b, sigma, f, g, T, x0));
}

McConfig mc(int paths = kPaths, int steps = kSteps) {
    McConfig c;
    c.paths = paths;
    c.steps = steps;
    return c;
}

double sup_error(const PdeSolution& s, const std::function<double(double, double)>& exact) {
    double e = 0.0;
    for (int k = 0; k <= s.grid().nt; ++k)
        for (int i = 0; i < s.grid().nx; ++i)
            e = std::max(e, std::abs(s.u(k, i) - exact(s.t_at(k), s.grid().x_at(i))));
    return e;
}

struct NamedModel {
    const char* name;
    Model m;
};

// ---------------------------------------------------------------------------

bool closed_forms() {
    Criterion c(1, "closed-form PDE accuracy and mesh halving");
    struct Case {
        const char* name;
        Model m;
        std::function<double(double, double)> exact;
    };
    const double T = 1.0, beta = 0.3;
    const std::vector<Case> cases = {
        {"martingale", model("0", {"1"}, "0", "x"), [](double, double x) { return x; }},
        {"cole-hopf", model("0", {"1"}, "0.5*z1^2", "x"), [T](double t, double x) { return x + 0.5 * (T - t); }},
        {"linear", model("0", {"1"}, "0.3*y", "x", 1.0),
         [T, beta](double t, double x) { return std::exp(beta * (T - t)) * x; }},
    };
    constexpr double floor = 1e-10; // both errors at roundoff: no discretization error left to halve
    for (const auto& k : cases) {
        try {
            const Stopwatch sw;
            const Grid fine = default_grid(k.m);
            const PdeSolution s = solve_pde(k.m, fine);
            const double err = sup_error(s, k.exact);
            const double u0 = s.eval_u(0.0, k.m.x0());
            const double secs = sw.seconds();
            Grid coarse = fine;
            coarse.nx = (fine.nx + 1) / 2;
            coarse.nt = fine.nt / 2;
            const double err_coarse = sup_error(solve_pde(k.m, coarse), k.exact);
            const bool at_floor = err <= floor && err_coarse <= floor;
            const double ratio = err > 0.0 ? err_coarse / err : INFINITY;
            c.check(err <= 2e-3, "%s: sup error %.3e on %dx%d (u0 = %.12g, exact %.12g), limit 2e-3", k.name, err,
                    fine.nx, fine.nt, u0, k.exact(0.0, k.m.x0()));
            c.check(at_floor || ratio >= 1.8, "%s: halving ratio %.3g (coarse %.3e)%s", k.name, ratio, err_coarse,
                    at_floor ? ", both at roundoff" : "");
            c.check(secs <= 10.0, "%s: %.2f s, limit 10 s", k.name, secs);
        } catch (const std::exception& e) {
            c.fail_with(e);
        }
    }
    return c.finish();
}

std::vector<NamedModel> cross_backend_models() {
    return {
        {"cole-hopf", model("0", {"1"}, "0.5*z1^2", "x")},
        {"linear-y", model("0", {"1"}, "0.3*y", "x", 1.0)},
        {"quadratic-tanh", model("0", {"1"}, "0.2*tanh(x) + 0.5*z1^2", "tanh(x)")},
        {"ou-tanh", model("0.1*(1-x)", {"0.5"}, "0.1*tanh(x)", "tanh(x)")},
        {"linear-full", model("-0.5*x", {"1+0.1*tanh(x)"}, "0.1*x + 0.3*y + 0.2*z1", "tanh(x)", 0.3)},
    };
}

bool cross_backend() {
    Criterion c(2, "MC and PDE agree on Y0");
    for (const auto& [name, m] : cross_backend_models()) {
        try {
            const Stopwatch sw;
            const double u = solve_pde(m, default_grid(m)).eval_u(0.0, m.x0());
            const McConfig cfg = mc();
            const BsdeSolution s = solve_bsde_regression(simulate_forward(m, cfg), m, cfg);
            const double secs = sw.seconds();
            const double gap = std::abs(s.y0 - u), tol = 3 * s.y0_se + 0.02;
            c.check(gap <= tol, "%s: MC %.6f (SE %.2e) vs PDE %.6f, gap %.2e <= %.2e", name, s.y0, s.y0_se, u, gap,
                    tol);
            c.check(secs <= 60.0, "%s: %.1f s, limit 60 s", name, secs);
        } catch (const std::exception& e) {
            c.fail_with(e);
        }
    }
    return c.finish();
}

bool representation() {
    Criterion c(3, "representation identity and regression Z");
    const std::vector<NamedModel> models = {
        {"cole-hopf", model("0", {"1"}, "0.5*z1^2", "x")},
        {"quadratic-tanh", model("0", {"1"}, "0.2*tanh(x) + 0.5*z1^2", "tanh(x)")},
        {"linear-full", model("-0.5*x", {"1+0.1*tanh(x)"}, "0.1*x + 0.3*y + 0.2*z1", "tanh(x)", 0.3)},
    };
    for (const auto& [name, m] : models) {
        try {
            const RepresentationReport r = check_representation(m, default_grid(m), mc());
            c.check(r.identity_passed, "%s: max |gradY (gradX)^-1 sigma - ux sigma| = %.2e <= %.0e (%lld nodes, %lld outside grid)",
                    name, r.max_pde_vs_malliavin, r.identity_tolerance, r.nodes_checked, r.nodes_outside_grid);
            c.check(r.statistical_passed,
                    "%s: regression Z vs PDE %.3e, vs weights %.3e at worst step %d, tolerance %.3e", name,
                    r.max_step_regression_vs_pde, r.max_step_regression_vs_malliavin, r.worst_step,
                    r.statistical_tolerance);
        } catch (const std::exception& e) {
            c.fail_with(e);
        }
    }
    return c.finish();
}

const SignCertificate* find(const TheoremReport& r, const std::string& needle) {
    for (const auto& s : r.supporting)
        if (s.quantity.find(needle) != std::string::npos) return &s;
    return nullptr;
}

bool comonotonicity() {
    Criterion c(4, "comonotonicity of Z1 and Z2");
    struct Pair {
        const char* name;
        Model m1, m2;
        bool strict;
    };
    const std::vector<Pair> pairs = {
        {"increasing pair", model("0", {"1"}, "0.5*z1^2", "x"),
         model("0.1*(1-x)", {"0.5"}, "0.1*tanh(x)", "tanh(x)"), true},
        {"decreasing pair", model("0", {"1"}, "0.5*z1^2", "-x"),
         model("0.1*(1-x)", {"0.5"}, "-0.1*tanh(x)", "-tanh(x)"), true},
        {"d=2 pair", model("0", {"1", "0.5"}, "0.5*z1^2 + 0.1*z2^2", "tanh(x)"),
         model("-0.2*x", {"0.8+0.1*tanh(x)", "0.4"}, "0.1*x + 0.2*z1", "x + 0.5*tanh(x)"), true},
    };
    for (const auto& p : pairs) {
        try {
            const Grid grid = default_grid(p.m1);
            const TheoremReport r = verify_comonotonicity(p.m1, p.m2, grid, mc());
            c.check(r.hypotheses_satisfied(), "%s: hypotheses hold", p.name);
            c.check(r.conclusion.passed, "%s: PDE min ux1*ux2 = %.3e >= -%.0e at %s", p.name, r.conclusion.min_value,
                    r.conclusion.tolerance, r.conclusion.argmin.to_string().c_str());
            const SignCertificate* path = find(r, "along paths");
            c.check(path && path->passed, "%s: MC min Z1 (.) Z2 = %.3e >= -%.3e", p.name, path ? path->min_value : NAN,
                    path ? path->tolerance : NAN);
            if (const SignCertificate* reg = find(r, "(regression)"))
                std::printf("    [..] %s: regression evidence %.3e vs -%.3e (secondary)\n", p.name, reg->min_value,
                            reg->tolerance);
            if (p.strict) {
                const SignCertificate* st = find(r, "(strict)");
                c.check(st && st->passed, "%s: strict interior min %.3e > %.0e", p.name, st ? st->min_value : NAN,
                        st ? st->tolerance : NAN);
            }
            c.check(r.verdict() == Verdict::passed, "%s: verdict %s", p.name, to_string(r.verdict()));
        } catch (const std::exception& e) {
            c.fail_with(e);
        }
    }
    return c.finish();
}

bool positivity() {
    Criterion c(5, "sign of Z (.) sigma");
    const std::vector<NamedModel> models = {
        {"increasing", model("0", {"1"}, "0.2*tanh(x) + 0.5*z1^2", "tanh(x)")},
        {"decreasing", model("0", {"1"}, "-0.2*tanh(x) + 0.5*z1^2", "-tanh(x)")},
        {"x-independent", model("0", {"1"}, "0.5*z1^2", "0.5")},
    };
    for (const auto& [name, m] : models) {
        try {
            const TheoremReport r = verify_positivity(m, default_grid(m), mc());
            c.check(r.conclusion.passed, "%s: PDE %s = %.3e >= -%.0e", name, r.conclusion.quantity.c_str(),
                    r.conclusion.min_value, r.conclusion.tolerance);
            for (const auto& s : r.supporting)
                c.check(s.passed || !s.gating, "%s: %s = %.3e, tolerance %.3e%s", name, s.quantity.c_str(),
                        s.min_value, s.tolerance, s.gating ? "" : " (secondary)");
            c.check(r.verdict() == Verdict::passed, "%s: verdict %s", name, to_string(r.verdict()));
        } catch (const std::exception& e) {
            c.fail_with(e);
        }
    }
    return c.finish();
}

bool rewrite() {
    Criterion c(6, "forward SDE rewritten as a BSDE");
    const std::vector<NamedModel> models = {
        {"brownian", model("0", {"1"}, "0", "x")},
        {"ou", model("-x", {"1"}, "0", "x", 2.0)},
    };
    for (const auto& [name, m] : models)
        for (bool increasing : {true, false}) {
            try {
                const RewriteCheck r = sde_as_bsde_self_check(m, increasing, mc());
                c.check(r.passed, "%s (%s): max step |Z~ - sigma| = %.3e at step %d, tolerance %.3e", name,
                        increasing ? "increasing" : "decreasing", r.max_step_discrepancy, r.worst_step, r.tolerance);
            } catch (const std::exception& e) {
                c.fail_with(e);
            }
        }
    return c.finish();
}

struct WeightRun {
    PathEnsemble ens;
    BsdeSolution sol;
    WeightProcesses w;
};

WeightRun run_weights(const Model& m, const McConfig& cfg) {
    PathEnsemble e = simulate_forward(m, cfg);
    simulate_variational(e, m);
    BsdeSolution s = solve_bsde_regression(e, m, cfg);
    WeightProcesses w = malliavin_weights(e, m, s);
    return {std::move(e), std::move(s), std::move(w)};
}

bool weights() {
    Criterion c(7, "measure-change gradient formula");
    try {
        const Model m = model("0", {"1"}, "0.1*x + 0.3*y + 0.2*z1", "tanh(x)", 0.3);
        const WeightRun r = run_weights(m, mc());
        const GradientEstimate g = grad_y0_via_weights(r.ens, m, r.sol, r.w);
        const double ux = solve_pde(m, default_grid(m)).eval_ux(0.0, m.x0());
        const double rel = std::abs(g.at_zero.value - ux) / std::abs(ux);
        c.check(rel <= 0.05, "linear driver: weighted %.6f (SE %.1e) vs PDE ux %.6f, relative gap %.2e <= 0.05",
                g.at_zero.value, g.at_zero.se, ux, rel);
        const Estimate mt = sample_mean(r.w.M_T);
        c.check(std::abs(mt.value - 1.0) <= 3 * mt.se + 1e-12, "linear driver: mean M_T = %.5f (SE %.1e)", mt.value,
                mt.se);
    } catch (const std::exception& e) {
        c.fail_with(e);
    }
    const std::vector<NamedModel> models = {
        {"cole-hopf", model("0", {"1"}, "0.5*z1^2", "x")},
        {"quadratic-tanh", model("0", {"1"}, "0.2*tanh(x) + 0.5*z1^2", "tanh(x)")},
        {"linear-y", model("0", {"1"}, "0.3*y + 0.1*x", "tanh(x)", 1.0)},
        {"y-and-z", model("0", {"1"}, "0.1*sin(y) + 0.2*z1", "tanh(x)")},
    };
    for (const auto& [name, m] : models) {
        try {
            const WeightRun r = run_weights(m, mc());
            const bool y_free = !m.spec().f.depends_on(VarKind::y);
            const bool z_free = !m.spec().f.depends_on(VarKind::z);
            if (y_free) {
                const bool ones = std::all_of(r.w.e.begin(), r.w.e.end(), [](double v) { return v == 1.0; });
                c.check(ones, "%s: e == 1 on every node", name);
            }
            if (z_free) {
                const bool ones = std::all_of(r.w.M_T.begin(), r.w.M_T.end(), [](double v) { return v == 1.0; });
                c.check(ones, "%s: M_T == 1 on every path", name);
            }
            const Estimate mt = sample_mean(r.w.M_T);
            c.check(std::abs(mt.value - 1.0) <= 3 * mt.se + 1e-12, "%s: mean M_T = %.5f (SE %.1e)", name, mt.value,
                    mt.se);
        } catch (const std::exception& e) {
            c.fail_with(e);
        }
    }
    return c.finish();
}

bool structural() {
    Criterion c(8, "structural invariants and negative controls");
    for (const auto& [name, m] : cross_backend_models()) {
        try {
            PathEnsemble e = simulate_forward(m, mc());
            simulate_variational(e, m);
            const double lo = *std::min_element(e.gradX().begin(), e.gradX().end());
            c.check(lo > 0.0, "%s: min gradX = %.3e over %zu nodes", name, lo, e.gradX().size());
        } catch (const std::exception& e) {
            c.fail_with(e);
        }
    }

    try {
        const Model m = model("0.1*(1-x)", {"1+0.1*tanh(x)", "0.3"}, "0.2*tanh(x) + 0.3*y*z1 + 0.1*z2^2", "tanh(x)");
        const McConfig cfg = mc(20000, kSteps);
        auto run = [&](int workers) {
            set_worker_count(workers);
            const WeightRun r = run_weights(m, cfg);
            return std::make_tuple(r.ens.X(), r.ens.gradX(), r.sol.Y, r.sol.Z, r.w.e, r.w.M_T);
        };
        const auto one = run(1);
        for (int workers : {2, 4, 7}) c.check(run(workers) == one, "bitwise identical with %d workers vs 1", workers);
        set_worker_count(0);
        McConfig serial = cfg;
        serial.exec = Execution::serial;
        const PathEnsemble ref = reference::simulate_forward(m, serial);
        c.check(ref.X() == std::get<0>(one), "OpenMP forward kernel matches the serial reference bitwise");
    } catch (const std::exception& e) {
        set_worker_count(0);
        c.fail_with(e);
    }

    try {
        const Model m1 = model("0", {"1", "0.5"}, "0.5*z1^2", "x");
        const Model m2 = model("0.1*(1-x)", {"0.5", "0.3"}, "0.1*tanh(x)", "tanh(x)");
        const Model m2_sigma = model("0.1*(1-x)", {"0.5", "-0.3"}, "0.1*tanh(x)", "tanh(x)");
        const Model m2_g = model("0.1*(1-x)", {"0.5", "0.3"}, "0.1*tanh(x)", "-tanh(x)");
        const McConfig cfg = mc(20000, kSteps);
        const SignCertificate base = check_sigma_product(m1, m2, cfg);
        const SignCertificate flipped = check_sigma_product(m1, m2_sigma, cfg);
        c.check(base.passed && !flipped.passed, "sigma2 -> -sigma2: sigma product min %.3f -> %.3f", base.min_value,
                flipped.min_value);
        TheoremOptions o;
        o.run_regression = false;
        const Grid grid = default_grid(m1);
        const TheoremReport r_base = verify_comonotonicity(m1, m2, grid, cfg, o);
        const TheoremReport r_sigma = verify_comonotonicity(m1, m2_sigma, grid, cfg, o);
        const TheoremReport r_g = verify_comonotonicity(m1, m2_g, grid, cfg, o);
        c.check(r_base.verdict() == Verdict::passed, "baseline pair: %s", to_string(r_base.verdict()));
        c.check(r_sigma.verdict() == Verdict::hypotheses_not_satisfied, "sigma2 -> -sigma2: %s",
                to_string(r_sigma.verdict()));
        c.check(r_g.verdict() == Verdict::hypotheses_not_satisfied && !r_g.conclusion.passed,
                "g2 -> -g2: %s, PDE min ux1*ux2 %.3e -> %.3e", to_string(r_g.verdict()), r_base.conclusion.min_value,
                r_g.conclusion.min_value);
    } catch (const std::exception& e) {
        c.fail_with(e);
    }
    return c.finish();
}

} // namespace

int main() {
    const Stopwatch total;
    const std::vector<bool (*)()> criteria = {closed_forms, cross_backend, representation, comonotonicity,
                                              positivity,   rewrite,       weights,        structural};
    int failures = 0;
    for (auto run : criteria) failures += run() ? 0 : 1;
    std::printf("acceptance: %d of %zu criteria passed in %.1f s\n", static_cast<int>(criteria.size()) - failures,
                criteria.size(), total.seconds());
    return failures == 0 ? 0 : 1;
}
