#pragma once

#include "qgfbsde/mc.hpp"
#include "qgfbsde/model.hpp"
#include "qgfbsde/pde.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace qgfbsde {

/// Componentwise product (a_1 b_1, ..., a_d b_d). Throws ConfigError on length mismatch.
std::vector<double> odot(std::span<const double> a, std::span<const double> b);

/// True when every component of a (.) b is >= -tol.
bool odot_nonnegative(std::span<const double> a, std::span<const double> b, double tol = 0.0);

/// Where an extreme value was observed: a grid node (t, x) or a path node (path, step, component).
struct Location {
    double t = 0.0;
    double x = 0.0;
    int path = -1;
    int step = -1;
    int component = -1;

    std::string to_string() const;
};

/// Evidence that a quantity stays above -tolerance.
struct SignCertificate {
    std::string quantity;
    double min_value = 0.0;
    Location argmin;
    double tolerance = 0.0;
    bool passed = false; // min_value >= -tolerance
    bool strict = false; // min_value > +tolerance
    bool gating = true;  // counts towards the report verdict
    bool strict_required = false; // passed means min_value > +tolerance
    std::string note;
};

SignCertificate make_certificate(std::string quantity, double min_value, Location at, double tolerance);

/// Strict variant: passes only when min_value > +tolerance.
SignCertificate make_strict_certificate(std::string quantity, double min_value, Location at, double tolerance);

struct Hypothesis {
    std::string name;
    bool passed = false;
    std::string evidence;
};

enum class Verdict { passed, failed, hypotheses_not_satisfied };

const char* to_string(Verdict v);

struct TheoremReport {
    std::string theorem;
    std::vector<Hypothesis> hypotheses;
    SignCertificate conclusion;               // primary evidence (PDE grid)
    std::vector<SignCertificate> supporting;  // Monte Carlo and strictness evidence
    std::vector<std::string> backends_used;
    std::string narrative;

    bool hypotheses_satisfied() const;
    /// Hypothesis failure takes precedence: the conclusion is then observational only.
    Verdict verdict() const;
};

struct TheoremOptions {
    double tol = 1e-6;          // PDE certificate tolerance
    double mc_budget = 0.02;    // MC tolerance is 3 SE + mc_budget
    double se_multiplier = 3.0;
    SchemeParams scheme{};
    int probe_points = 5;       // per axis of the (t, y, z) probe lattice for x -> f
    int monotone_points = 401;  // x samples for monotonicity checks
    bool check_h2 = true;
    bool run_regression = true; // secondary MC evidence from regression Z
};

/// Models are coupled through the same seed, hence the same Brownian increments.
SignCertificate check_sigma_product(const Model& m1, const Model& m2, const McConfig& cfg, double tol = 1e-6);

SignCertificate sigma_product_certificate(const Model& m1, const PathEnsemble& e1, const Model& m2,
                                          const PathEnsemble& e2, double tol);

TheoremReport verify_comonotonicity(const Model& m1, const Model& m2, const Grid& grid, const McConfig& cfg,
                                    const TheoremOptions& opts = {});

TheoremReport verify_positivity(const Model& m, const Grid& grid, const McConfig& cfg,
                                const TheoremOptions& opts = {});

/// Backward data of the forward SDE: increasing g~ = x, f~(t,y) = -b(t,y); decreasing g~ = -x, f~(t,y) = b(t,-y).
ModelSpec sde_as_bsde(const ModelSpec& m, bool increasing);

struct RewriteCheck {
    ModelSpec rewritten;
    double max_step_discrepancy = 0.0; // max over steps of the path-mean |Z~ - (+-sigma)|
    int worst_step = 0;
    double tolerance = 0.0;            // 3 SE + budget at the worst step
    bool passed = false;
};

/// Solves the rewritten BSDE by regression and compares Z~ with +-sigma(t, X_t) along paths.
RewriteCheck sde_as_bsde_self_check(const Model& m, bool increasing, const McConfig& cfg, double budget = 0.05);

struct RepresentationReport {
    double max_pde_vs_malliavin = 0.0;  // |z_from_pde - grad Y (grad X)^-1 sigma|
    double mean_pde_vs_malliavin = 0.0;
    double max_step_regression_vs_pde = 0.0; // max over steps of the path-mean |Z_reg - z_from_pde|
    double mean_regression_vs_pde = 0.0;
    double max_step_regression_vs_malliavin = 0.0;
    int worst_step = 0;
    double identity_tolerance = 1e-6;
    double statistical_tolerance = 0.0; // 3 SE + budget at the worst step
    long long nodes_checked = 0;
    long long nodes_outside_grid = 0;
    bool identity_passed = false;
    bool statistical_passed = false;
    bool passed() const { return identity_passed && statistical_passed; }
};

RepresentationReport check_representation(const Model& m, const Grid& grid, const McConfig& cfg,
                                          double identity_tol = 1e-6, double budget = 0.05,
                                          const SchemeParams& scheme = {});

/// u1 >= u2 - tol on every grid node, provided g1 >= g2 and f1 >= f2 on the sample box.
/// Throws ConfigError("ordering hypothesis fails at ...") otherwise.
SignCertificate check_y_comparison(const Model& m1, const Model& m2, const Grid& grid, double tol = 1e-8,
                                   const SchemeParams& scheme = {});

/// Deterministic `key = value` report.
void write_report(std::ostream& os, const TheoremReport& r);

/// `t,x,ux1,ux2,product` for every grid node.
void write_product_csv(std::ostream& os, const PdeSolution& s1, const PdeSolution& s2);

} // namespace qgfbsde
