#include "qgfbsde/cli.hpp"

#include "qgfbsde/config.hpp"
#include "qgfbsde/csv.hpp"
#include "qgfbsde/error.hpp"
#include "qgfbsde/theorems.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace qgfbsde::cli {

namespace {

struct RunConfig {
    std::string command;
    std::vector<std::string> models;
    std::string out_dir = "qgfbsde-out";
    std::string format = "text";
    double tol = 1e-6;
    std::string direction = "increasing";
    int export_paths = 0;

    std::optional<double> x_min, x_max, width_factor, z_clip;
    std::optional<int> nx, nt, paths, steps, bins;
    std::optional<std::uint64_t> seed;
};

struct Loaded {
    Model model;
    Grid grid;
    McConfig mc;
};

Loaded load(const RunConfig& rc, const std::string& path) {
    ModelConfig c = load_model_config(path);
    if (rc.x_min) c.grid.x_min = rc.x_min;
    if (rc.x_max) c.grid.x_max = rc.x_max;
    if (rc.nx) c.grid.nx = rc.nx;
    if (rc.nt) c.grid.nt = rc.nt;
    if (rc.paths) c.mc.paths = *rc.paths;
    if (rc.steps) c.mc.steps = *rc.steps;
    if (rc.seed) c.mc.seed = *rc.seed;
    if (rc.bins) c.mc.bins = *rc.bins;
    if (rc.z_clip) c.mc.z_clip = rc.z_clip;
    c.mc.validate();

    Model m(c.spec);
    Grid g = default_grid(m, c.grid.nx.value_or(401), c.grid.nt.value_or(400), rc.width_factor.value_or(6.0));
    if (c.grid.x_min) g.x_min = *c.grid.x_min;
    if (c.grid.x_max) g.x_max = *c.grid.x_max;
    g.validate(m.x0());
    return {std::move(m), g, c.mc};
}

class Artifacts {
public:
    explicit Artifacts(const std::string& dir) : dir_(dir) { std::filesystem::create_directories(dir_); }

    std::ofstream open(const std::string& name) const {
        std::ofstream f(dir_ / name);
        if (!f) throw ConfigError("cannot write '" + (dir_ / name).string() + "'");
        return f;
    }

private:
    std::filesystem::path dir_;
};

void write_assumptions(std::ostream& os, const AssumptionReport& a) {
    os << "assumptions.grid = " << a.grid_used << "\n";
    os << "assumptions.growth_constant_M = " << format_number(a.growth_constant_M) << "\n";
    os << "assumptions.lipschitz_constant_K = " << format_number(a.lipschitz_constant_K) << "\n";
    os << "assumptions.ellipticity_floor = " << format_number(a.ellipticity_floor) << "\n";
    os << "assumptions.violations = " << a.violations.size() << "\n";
    for (std::size_t i = 0; i < a.violations.size(); ++i) {
        const auto& v = a.violations[i];
        os << "violation." << i + 1 << " = " << v.condition << " at " << v.point << " (" << format_number(v.lhs)
           << " vs " << format_number(v.rhs) << ")\n";
    }
    os << "assumptions.passed = " << (a.passed ? "yes" : "no") << "\n";
}

AssumptionReport assumptions_for(const Loaded& l) {
    return validate_assumptions(l.model, default_sample_box(l.model, l.grid.x_min, l.grid.x_max), true);
}

// Prints the report to the artifact and a short summary to `out`.
int finish_theorem(const TheoremReport& r, const Artifacts& art, std::ostream& out) {
    {
        auto f = art.open("report.txt");
        write_report(f, r);
    }
    for (const auto& h : r.hypotheses)
        out << "hypothesis " << (h.passed ? "ok  " : "FAIL") << "  " << h.name << "\n";
    const bool asserted = r.hypotheses_satisfied();
    auto line = [&out, asserted](const SignCertificate& c) {
        out << (!asserted ? "obs " : c.passed ? "pass" : "FAIL") << "  " << c.quantity << " = " << format_number(c.min_value)
            << (c.strict_required ? " > " : " >= -") << format_number(c.tolerance) << (c.gating ? "" : " (informative)") << "\n";
    };
    line(r.conclusion);
    for (const auto& c : r.supporting) line(c);
    switch (r.verdict()) {
    case Verdict::passed:
        out << "summary: PASS\n";
        return ok;
    case Verdict::failed:
        out << "summary: FAIL (certificate failed)\n";
        return certificate_failed;
    case Verdict::hypotheses_not_satisfied:
        out << "summary: FAIL (hypotheses not satisfied - conclusion not asserted)\n";
        return certificate_failed;
    }
    return certificate_failed;
}

int cmd_validate(const RunConfig& rc, const Artifacts& art, std::ostream& out) {
    const Loaded l = load(rc, rc.models.at(0));
    const AssumptionReport a = assumptions_for(l);
    auto f = art.open("report.txt");
    write_assumptions(f, a);
    write_assumptions(out, a);
    out << "summary: " << (a.passed ? "PASS" : "FAIL (assumption violated)") << "\n";
    return a.passed ? ok : certificate_failed;
}

int require_valid(const Loaded& l, std::ostream& out) {
    const AssumptionReport a = assumptions_for(l);
    if (a.passed) return ok;
    write_assumptions(out, a);
    out << "summary: model rejected by validation\n";
    return config_error;
}

int cmd_solve_pde(const RunConfig& rc, const Artifacts& art, std::ostream& out) {
    const Loaded l = load(rc, rc.models.at(0));
    if (int rc_valid = require_valid(l, out)) return rc_valid;
    const PdeSolution s = solve_pde(l.model, l.grid);
    {
        auto f = art.open("pde.csv");
        write_pde_csv(f, s);
    }
    std::ostringstream rep;
    rep << "grid = [" << format_number(l.grid.x_min) << ", " << format_number(l.grid.x_max) << "] nx=" << l.grid.nx
        << " nt=" << l.grid.nt << "\n";
    rep << "u0 = " << format_number(s.eval_u(0.0, l.model.x0())) << "\n";
    rep << "ux0 = " << format_number(s.eval_ux(0.0, l.model.x0())) << "\n";
    rep << "max_fixed_point_iterations = " << s.max_iterations_used() << "\n";
    art.open("report.txt") << rep.str();
    out << rep.str() << "summary: PASS\n";
    return ok;
}

int cmd_solve_mc(const RunConfig& rc, const Artifacts& art, std::ostream& out) {
    const Loaded l = load(rc, rc.models.at(0));
    if (int rc_valid = require_valid(l, out)) return rc_valid;
    PathEnsemble ens = simulate_forward(l.model, l.mc);
    simulate_variational(ens, l.model, l.mc.exec);
    const BsdeSolution sol = solve_bsde_regression(ens, l.model, l.mc);
    const WeightProcesses w = malliavin_weights(ens, l.model, sol, l.mc.exec);
    const GradientEstimate gr = grad_y0_via_weights(ens, l.model, sol, w, l.mc.exec);
    const Estimate mt = sample_mean(w.M_T);

    std::ostringstream rep;
    rep << "paths = " << l.mc.paths << "\nsteps = " << l.mc.steps << "\nseed = " << l.mc.seed << "\n";
    rep << "y0 = " << format_number(sol.y0) << "\ny0_se = " << format_number(sol.y0_se) << "\n";
    for (int c = 0; c < sol.d; ++c)
        rep << "z0." << c + 1 << " = " << format_number(sol.z0[static_cast<std::size_t>(c)]) << "\n";
    rep << "z_clip = " << format_number(sol.z_clip) << "\n";
    rep << "grad_y0.at_zero = " << format_number(gr.at_zero.value) << " +- " << format_number(gr.at_zero.se) << "\n";
    rep << "grad_y0.linearized = " << format_number(gr.linearized.value) << " +- " << format_number(gr.linearized.se)
        << "\n";
    rep << "grad_y0.note = terminal gradient taken at X_T; at_zero uses f_x(t, X, 0, 0), linearized uses f_x(t, X, Y, Z)\n";
    rep << "mean_M_T = " << format_number(mt.value) << " +- " << format_number(mt.se) << "\n";
    const auto& r2 = sol.diagnostics.r_squared;
    // step 0 regresses on a single point (all paths start at x0), where R^2 carries no information
    const auto r2_from = r2.size() > 1 ? r2.begin() + 1 : r2.begin();
    rep << "min_r_squared = " << format_number(r2.empty() ? 1.0 : *std::min_element(r2_from, r2.end())) << "\n";
    art.open("report.txt") << rep.str();

    const int export_paths = rc.export_paths > 0 ? rc.export_paths : (rc.format == "csv-bundle" ? 100 : 0);
    if (export_paths > 0) {
        auto f = art.open("paths.csv");
        write_paths_csv(f, ens, &sol, &w, export_paths);
    }
    out << rep.str() << "summary: PASS\n";
    return ok;
}

TheoremOptions theorem_options(const RunConfig& rc) {
    TheoremOptions o;
    o.tol = rc.tol;
    return o;
}

int cmd_positivity(const RunConfig& rc, const Artifacts& art, std::ostream& out) {
    const Loaded l = load(rc, rc.models.at(0));
    const TheoremReport r = verify_positivity(l.model, l.grid, l.mc, theorem_options(rc));
    if (rc.format == "csv-bundle") {
        auto f = art.open("pde.csv");
        write_pde_csv(f, solve_pde(l.model, l.grid));
    }
    return finish_theorem(r, art, out);
}

int cmd_comonotone(const RunConfig& rc, const Artifacts& art, std::ostream& out) {
    const Loaded a = load(rc, rc.models.at(0));
    const Loaded b = load(rc, rc.models.at(1));
    // one grid covering both default boxes
    Grid g = a.grid;
    g.x_min = std::min(a.grid.x_min, b.grid.x_min);
    g.x_max = std::max(a.grid.x_max, b.grid.x_max);
    g.nx = std::max(a.grid.nx, b.grid.nx);
    g.nt = std::max(a.grid.nt, b.grid.nt);
    McConfig mc = a.mc;
    if (a.mc.paths != b.mc.paths || a.mc.steps != b.mc.steps || a.mc.seed != b.mc.seed)
        out << "note: [mc] of the second model ignored; paths are coupled through the first model's settings\n";
    const TheoremReport r = verify_comonotonicity(a.model, b.model, g, mc, theorem_options(rc));
    if (rc.format == "csv-bundle") {
        auto f = art.open("products.csv");
        write_product_csv(f, solve_pde(a.model, g), solve_pde(b.model, g));
    }
    return finish_theorem(r, art, out);
}

int cmd_representation(const RunConfig& rc, const Artifacts& art, std::ostream& out) {
    const Loaded l = load(rc, rc.models.at(0));
    const RepresentationReport r = check_representation(l.model, l.grid, l.mc);
    std::ostringstream rep;
    rep << "nodes_checked = " << r.nodes_checked << "\nnodes_outside_grid = " << r.nodes_outside_grid << "\n";
    rep << "max_pde_vs_malliavin = " << format_number(r.max_pde_vs_malliavin) << "\n";
    rep << "mean_pde_vs_malliavin = " << format_number(r.mean_pde_vs_malliavin) << "\n";
    rep << "identity_tolerance = " << format_number(r.identity_tolerance) << "\n";
    rep << "identity_passed = " << (r.identity_passed ? "yes" : "no") << "\n";
    rep << "max_step_regression_vs_pde = " << format_number(r.max_step_regression_vs_pde) << "\n";
    rep << "max_step_regression_vs_malliavin = " << format_number(r.max_step_regression_vs_malliavin) << "\n";
    rep << "mean_regression_vs_pde = " << format_number(r.mean_regression_vs_pde) << "\n";
    rep << "worst_step = " << r.worst_step << "\n";
    rep << "statistical_tolerance = " << format_number(r.statistical_tolerance) << "\n";
    rep << "statistical_passed = " << (r.statistical_passed ? "yes" : "no") << "\n";
    art.open("report.txt") << rep.str();
    out << rep.str() << "summary: " << (r.passed() ? "PASS" : "FAIL (certificate failed)") << "\n";
    return r.passed() ? ok : certificate_failed;
}

int cmd_rewrite(const RunConfig& rc, const Artifacts& art, std::ostream& out) {
    if (rc.direction != "increasing" && rc.direction != "decreasing")
        throw ConfigError("--direction must be 'increasing' or 'decreasing'");
    const Loaded l = load(rc, rc.models.at(0));
    const RewriteCheck chk = sde_as_bsde_self_check(l.model, rc.direction == "increasing", l.mc);
    ModelConfig rewritten;
    rewritten.spec = chk.rewritten;
    rewritten.mc = l.mc;
    art.open("rewritten.cfg") << format_model_config(rewritten);
    std::ostringstream rep;
    rep << "g = " << chk.rewritten.g.to_string() << "\nf = " << chk.rewritten.f.to_string() << "\n";
    rep << "max_step_discrepancy = " << format_number(chk.max_step_discrepancy) << "\n";
    rep << "worst_step = " << chk.worst_step << "\ntolerance = " << format_number(chk.tolerance) << "\n";
    rep << "passed = " << (chk.passed ? "yes" : "no") << "\n";
    art.open("report.txt") << rep.str();
    out << rep.str() << "summary: " << (chk.passed ? "PASS" : "FAIL (certificate failed)") << "\n";
    return chk.passed ? ok : certificate_failed;
}

void apply_thread_env() {
    const char* v = std::getenv("QGFBSDE_THREADS");
    if (!v || !*v) return;
    const long long n = parse_integer(v);
    if (n < 0 || n > 4096) throw ConfigError("QGFBSDE_THREADS must be in [0, 4096]");
    set_worker_count(static_cast<int>(n));
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig rc;
    CLI::App app{"Numerical lab for quadratic-growth FBSDEs", "qgfbsde"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.add_option("--out", rc.out_dir, "Artifact directory");
    app.add_option("--format", rc.format, "Report format")->check(CLI::IsMember({"text", "csv-bundle"}));
    app.add_option("--tol", rc.tol, "PDE certificate tolerance")->check(CLI::NonNegativeNumber);
    app.add_option("--nx", rc.nx, "Space nodes");
    app.add_option("--nt", rc.nt, "Time steps of the PDE grid");
    app.add_option("--x-min", rc.x_min);
    app.add_option("--x-max", rc.x_max);
    app.add_option("--width-factor", rc.width_factor, "Default box half-width in units of max|sigma| sqrt(T)");
    app.add_option("--paths", rc.paths);
    app.add_option("--steps", rc.steps);
    app.add_option("--seed", rc.seed);
    app.add_option("--bins", rc.bins);
    app.add_option("--z-clip", rc.z_clip);
    app.add_option("--export-paths", rc.export_paths, "Write the first N paths to paths.csv");

    struct Sub {
        const char* name;
        const char* help;
        int models;
    };
    const Sub subs[] = {
        {"validate", "Check the model assumptions on the sample box", 1},
        {"solve-pde", "Solve the backward PDE", 1},
        {"solve-mc", "Regression Monte Carlo solve with weights", 1},
        {"check-positivity", "Sign certificate for Z (.) sigma", 1},
        {"check-comonotone", "Comonotonicity certificate for two models", 2},
        {"check-representation", "Compare the three Z estimates along paths", 1},
        {"rewrite-sde", "Rewrite the forward SDE as a BSDE and self-check", 1},
    };
    for (const auto& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        sub->add_option("model", rc.models, s.models == 1 ? "Model file" : "Two model files")
            ->required()
            ->expected(s.models);
        if (std::string(s.name) == "rewrite-sde")
            sub->add_option("--direction", rc.direction, "increasing or decreasing");
        sub->callback([&rc, name = std::string(s.name)] { rc.command = name; });
    }

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return config_error;
    }

    try {
        apply_thread_env();
        const Artifacts art(rc.out_dir);
        if (rc.command == "validate") return cmd_validate(rc, art, out);
        if (rc.command == "solve-pde") return cmd_solve_pde(rc, art, out);
        if (rc.command == "solve-mc") return cmd_solve_mc(rc, art, out);
        if (rc.command == "check-positivity") return cmd_positivity(rc, art, out);
        if (rc.command == "check-comonotone") return cmd_comonotone(rc, art, out);
        if (rc.command == "check-representation") return cmd_representation(rc, art, out);
        if (rc.command == "rewrite-sde") return cmd_rewrite(rc, art, out);
        err << "error: unknown command\n";
        return config_error;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return config_error;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return config_error;
    } catch (const EvalError& e) {
        err << "error: model not defined on the sample box: " << e.what() << "\n";
        return config_error;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return numerical_error;
    } catch (const RangeError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return numerical_error;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return config_error;
    }
}

} // namespace qgfbsde::cli
