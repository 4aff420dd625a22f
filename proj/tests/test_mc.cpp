#include "oracles.hpp"

#include "qgfbsde/error.hpp"
#include "qgfbsde/mc.hpp"
#include "qgfbsde/csv.hpp"
#include "qgfbsde/pde.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

using namespace qgfbsde;

namespace {

Model model(const std::string& b, std::vector<std::string> sigma, const std::string& f, const std::string& g,
            double x0 = 0.0) {
    return Model(make_spec(b, sigma, f, g, 1.0, x0));
}

McConfig config(int paths, int steps = 100) {
    McConfig c;
    c.paths = paths;
    c.steps = steps;
    return c;
}

// Restores the default worker count when a test changes it.
struct WorkerGuard {
    ~WorkerGuard() { set_worker_count(0); }
};

} // namespace

TEST(McConfig, Validation) {
    EXPECT_THROW(config(1).validate(), ConfigError);
    EXPECT_THROW(config(10, 0).validate(), ConfigError);
    McConfig c = config(10);
    c.z_clip = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c.z_clip = 1.0;
    c.bins = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Forward, BrownianMoments) {
    const Model m = model("0", {"1"}, "0", "x");
    const PathEnsemble e = simulate_forward(m, config(100000));
    std::vector<double> xt(100000);
    for (int p = 0; p < e.paths(); ++p) xt[static_cast<std::size_t>(p)] = e.x(p, e.steps());
    const Estimate s = sample_mean(xt);
    EXPECT_NEAR(s.value, 0.0, 3.0 / std::sqrt(100000.0));
    const double var = s.se * s.se * 100000.0;
    EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Forward, OrnsteinUhlenbeckMean) {
    const Model m = model("-x", {"1"}, "0", "x", 2.0);
    const PathEnsemble e = simulate_forward(m, config(100000));
    std::vector<double> xt(100000);
    for (int p = 0; p < e.paths(); ++p) xt[static_cast<std::size_t>(p)] = e.x(p, e.steps());
    const Estimate s = sample_mean(xt);
    EXPECT_NEAR(s.value, 2.0 * std::pow(0.99, 100), 3 * s.se); // Euler mean
    EXPECT_NEAR(s.value, 2.0 * std::exp(-1.0), 3 * s.se);
}

TEST(Forward, SeedDeterminism) {
    const Model m = model("0.1*(1-x)", {"0.5", "0.2*cos(x)"}, "0", "x");
    const PathEnsemble a = simulate_forward(m, config(500, 20));
    const PathEnsemble b = simulate_forward(m, config(500, 20));
    EXPECT_EQ(a.X(), b.X());
    EXPECT_EQ(a.dW(), b.dW());
    McConfig other = config(500, 20);
    other.seed = 1;
    EXPECT_NE(simulate_forward(m, other).X(), a.X());
    // path p depends on (seed, p) only
    const PathEnsemble small = simulate_forward(m, config(7, 20));
    for (int k = 0; k <= 20; ++k) EXPECT_EQ(small.x(6, k), a.x(6, k));
}

TEST(Forward, BlowUpIsReported) {
    const Model m = model("x^3", {"1"}, "0", "x", 3.0);
    try {
        simulate_forward(m, config(4, 100));
        FAIL() << "expected blow-up";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("path 0"), std::string::npos);
    }
}

TEST(Variational, ClosedForms) {
    {
        const Model m = model("0", {"1"}, "0", "x");
        PathEnsemble e = simulate_forward(m, config(200, 50));
        simulate_variational(e, m);
        for (double g : e.gradX()) ASSERT_EQ(g, 1.0);
    }
    {
        const Model m = model("0.2*x", {"1"}, "0", "x");
        PathEnsemble e = simulate_forward(m, config(200, 50));
        simulate_variational(e, m);
        for (int p = 0; p < 200; ++p) {
            EXPECT_EQ(e.grad_x(p, 0), 1.0);
            EXPECT_NEAR(e.grad_x(p, 50), std::exp(0.2), 1e-13);
        }
    }
}

TEST(Variational, PositiveEverywhere) {
    const Model m = model("-0.5*x", {"1+0.1*tanh(x)"}, "0", "x");
    PathEnsemble e = simulate_forward(m, config(20000, 100));
    simulate_variational(e, m);
    EXPECT_GT(*std::min_element(e.gradX().begin(), e.gradX().end()), 0.0);
    for (int p = 0; p < e.paths(); ++p) ASSERT_EQ(e.grad_x(p, 0), 1.0);
}

TEST(Regression, Martingale) {
    const Model m = model("0", {"1"}, "0", "x", 0.4);
    const McConfig c = config(100000);
    const PathEnsemble e = simulate_forward(m, c);
    const BsdeSolution s = solve_bsde_regression(e, m, c);
    EXPECT_NEAR(s.y0, 0.4, 3 * s.y0_se);
    for (int p = 0; p < e.paths(); p += 997) ASSERT_EQ(s.y(p, e.steps()), m.g(e.x(p, e.steps())));
    for (int k = 0; k < e.steps(); ++k) {
        double sum = 0.0;
        for (int p = 0; p < e.paths(); ++p) sum += s.z(p, k, 0);
        EXPECT_NEAR(sum / e.paths(), 1.0, 0.05) << "step " << k;
    }
    EXPECT_EQ(s.diagnostics.bins_used[0], 1); // all paths start at x0
    EXPECT_EQ(s.diagnostics.bins_used[50], 50);
    EXPECT_EQ(s.diagnostics.min_occupancy[50], 2000);
}

TEST(Regression, ColeHopf) {
    const Model m = model("0", {"1"}, "0.5*z1^2", "x");
    const McConfig c = config(100000);
    const PathEnsemble e = simulate_forward(m, c);
    const BsdeSolution s = solve_bsde_regression(e, m, c);
    EXPECT_NEAR(s.y0, 0.5, 3 * s.y0_se + 0.02);
}

TEST(Regression, SeErrorShrinksLikeRootP) {
    const Model m = model("0", {"1"}, "0.2*tanh(x)+0.5*z1^2", "tanh(x)");
    const McConfig c1 = config(25000, 50), c2 = config(50000, 50);
    const BsdeSolution s1 = solve_bsde_regression(simulate_forward(m, c1), m, c1);
    const BsdeSolution s2 = solve_bsde_regression(simulate_forward(m, c2), m, c2);
    const double ratio = s1.y0_se / s2.y0_se;
    EXPECT_NEAR(ratio, std::sqrt(2.0), 0.2 * std::sqrt(2.0));
}

TEST(Weights, DegenerateCases) {
    const McConfig c = config(20000, 50);
    {
        const Model m = model("0", {"1"}, "0.5*z1^2", "x");
        const PathEnsemble e = simulate_forward(m, c);
        const BsdeSolution s = solve_bsde_regression(e, m, c);
        const WeightProcesses w = malliavin_weights(e, m, s);
        for (double v : w.e) ASSERT_EQ(v, 1.0);
        const Estimate mt = sample_mean(w.M_T);
        EXPECT_NEAR(mt.value, 1.0, 3 * mt.se);
    }
    {
        const Model m = model("0", {"1"}, "0.3*y", "x", 1.0);
        const PathEnsemble e = simulate_forward(m, c);
        const BsdeSolution s = solve_bsde_regression(e, m, c);
        const WeightProcesses w = malliavin_weights(e, m, s);
        for (double v : w.M_T) ASSERT_EQ(v, 1.0);
        // |d f / dy| = 0.3 bounds |log e|
        double worst = 0.0;
        for (int p = 0; p < e.paths(); ++p) worst = std::max(worst, std::abs(std::log(w.e_at(p, e.steps()))));
        EXPECT_LE(worst, 0.3 * 1.0 + 1e-9);
        for (int p = 0; p < e.paths(); ++p) ASSERT_EQ(w.e_at(p, 0), 1.0);
    }
}

TEST(Weights, OverflowIsReported) {
    const Model m = model("0", {"1"}, "800*y", "x");
    const PathEnsemble e = simulate_forward(m, config(3, 10));
    BsdeSolution s;
    s.paths = 3;
    s.steps = 10;
    s.d = 1;
    s.Y.assign(3 * 11, 1.0);
    s.Z.assign(3 * 10, 0.0);
    s.z_clip = 10.0;
    try {
        malliavin_weights(e, m, s);
        FAIL() << "expected overflow";
    } catch (const NumericalError& err) {
        EXPECT_NE(std::string(err.what()).find("path 0"), std::string::npos);
    }
}

TEST(Gradient, TrivialAndQuadrature) {
    const McConfig c = config(100000, 50);
    {
        const Model m = model("0", {"1"}, "0", "x");
        PathEnsemble e = simulate_forward(m, c);
        simulate_variational(e, m);
        const BsdeSolution s = solve_bsde_regression(e, m, c);
        const GradientEstimate g = grad_y0_via_weights(e, m, s, malliavin_weights(e, m, s));
        EXPECT_NEAR(g.at_zero.value, 1.0, 3 * g.at_zero.se + 1e-12);
    }
    {
        const Model m = model("0", {"1"}, "0", "tanh(x)");
        PathEnsemble e = simulate_forward(m, c);
        simulate_variational(e, m);
        const BsdeSolution s = solve_bsde_regression(e, m, c);
        const GradientEstimate g = grad_y0_via_weights(e, m, s, malliavin_weights(e, m, s));
        const double frozen = 0.60570550944558765; // E[sech^2(W_1)], 80-point Gauss-Hermite
        EXPECT_NEAR(oracle::normal_expectation(oracle::sech2, 0.0, 1.0), frozen, 1e-14);
        EXPECT_NEAR(g.at_zero.value, frozen, 3 * g.at_zero.se);
    }
}

TEST(Gradient, LinearDriverMatchesClosedForm) {
    const double frozen = 0.87523073252687311; // oracle::linear_driver_ux(0.1, 0.3, 0.2, 0.3, 1)
    EXPECT_NEAR(oracle::linear_driver_ux(0.1, 0.3, 0.2, 0.3, 1.0), frozen, 1e-14);
    const Model m = model("0", {"1"}, "0.1*x + 0.3*y + 0.2*z1", "tanh(x)", 0.3);
    const McConfig c = config(50000, 50);
    PathEnsemble e = simulate_forward(m, c);
    simulate_variational(e, m);
    const BsdeSolution s = solve_bsde_regression(e, m, c);
    const WeightProcesses w = malliavin_weights(e, m, s);
    const GradientEstimate g = grad_y0_via_weights(e, m, s, w);
    EXPECT_NEAR(g.at_zero.value, frozen, 0.05 * frozen);
    EXPECT_EQ(g.at_zero.value, g.linearized.value); // f_x is constant
    const PdeSolution pde = solve_pde(m, default_grid(m));
    EXPECT_NEAR(pde.eval_ux(0, 0.3), frozen, 1e-3);
}

TEST(Kernels, MatchSerialReferenceBitwise) {
    const Model m = model("0.1*(1-x)", {"0.5+0.1*tanh(x)", "0.3"}, "0.2*tanh(x) + 0.3*y*z1 + 0.1*z2^2", "tanh(x)");
    McConfig c = config(3000, 40);
    PathEnsemble par = simulate_forward(m, c);
    PathEnsemble ref = reference::simulate_forward(m, c);
    EXPECT_EQ(par.X(), ref.X());
    EXPECT_EQ(par.dW(), ref.dW());
    simulate_variational(par, m);
    reference::simulate_variational(ref, m);
    EXPECT_EQ(par.gradX(), ref.gradX());
    const BsdeSolution s = solve_bsde_regression(par, m, c);
    const WeightProcesses wp = malliavin_weights(par, m, s);
    const WeightProcesses wr = reference::malliavin_weights(ref, m, s);
    EXPECT_EQ(wp.e, wr.e);
    EXPECT_EQ(wp.M_T, wr.M_T);
    EXPECT_EQ(wp.drift_used, wr.drift_used);
}

TEST(Kernels, IndependentOfWorkerCount) {
    WorkerGuard guard;
    const Model m = model("0.1*(1-x)", {"1"}, "0.2*tanh(x) + 0.5*z1^2 - 0.1*y", "tanh(x)");
    const McConfig c = config(5000, 30);
    auto run = [&](int workers) {
        set_worker_count(workers);
        PathEnsemble e = simulate_forward(m, c);
        simulate_variational(e, m);
        const BsdeSolution s = solve_bsde_regression(e, m, c);
        const WeightProcesses w = malliavin_weights(e, m, s);
        return std::make_tuple(e.X(), e.gradX(), s.Y, s.Z, w.e, w.M_T);
    };
    const auto one = run(1);
    EXPECT_EQ(run(3), one);
    EXPECT_EQ(run(8), one);
    McConfig serial = c;
    serial.exec = Execution::serial;
    PathEnsemble e = simulate_forward(m, serial);
    EXPECT_EQ(e.X(), std::get<0>(one));
    EXPECT_EQ(solve_bsde_regression(e, m, serial).Y, std::get<2>(one));
}

TEST(PathsCsv, RoundTrip) {
    const Model m = model("0", {"1", "0.5"}, "0.5*z1^2", "tanh(x)");
    const McConfig c = config(50, 10);
    PathEnsemble e = simulate_forward(m, c);
    simulate_variational(e, m);
    const BsdeSolution s = solve_bsde_regression(e, m, c);
    const WeightProcesses w = malliavin_weights(e, m, s);
    std::stringstream ss;
    write_paths_csv(ss, e, &s, &w, 5);
    const PathsTable t = read_paths_csv(ss);
    ASSERT_EQ(t.header.size(), 9u);
    ASSERT_EQ(t.rows.size(), 5u * 11u);
    for (const auto& row : t.rows) {
        const int p = static_cast<int>(*row[0]), k = static_cast<int>(*row[1]);
        EXPECT_EQ(*row[2], e.t(k));
        EXPECT_EQ(*row[3], e.x(p, k));
        EXPECT_EQ(*row[4], e.grad_x(p, k));
        EXPECT_EQ(*row[5], s.y(p, k));
        if (k < 10) {
            EXPECT_EQ(*row[6], s.z(p, k, 0));
            EXPECT_EQ(*row[7], s.z(p, k, 1));
        } else {
            EXPECT_FALSE(row[6].has_value());
        }
        EXPECT_EQ(*row[8], w.e_at(p, k));
    }
}
