#include "oracles.hpp"

#include "qgfbsde/error.hpp"
#include "qgfbsde/pde.hpp"
#include "qgfbsde/theorems.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace qgfbsde;

namespace {

Model model(const std::string& b, std::vector<std::string> sigma, const std::string& f, const std::string& g,
            double x0 = 0.0) {
    return Model(make_spec(b, sigma, f, g, 1.0, x0));
}

template <class Exact>
double sup_error(const PdeSolution& s, Exact&& exact) {
    double e = 0.0;
    for (int k = 0; k <= s.grid().nt; ++k)
        for (int i = 0; i < s.grid().nx; ++i)
            e = std::max(e, std::abs(s.u(k, i) - exact(s.t_at(k), s.grid().x_at(i))));
    return e;
}

} // namespace

TEST(Pde, GridValidation) {
    EXPECT_THROW((Grid{-1, 1, 3, 10}.validate(0.0)), ConfigError);
    EXPECT_THROW((Grid{-1, 1, 11, 0}.validate(0.0)), ConfigError);
    EXPECT_THROW((Grid{0, 1, 11, 10}.validate(0.0)), ConfigError);
    EXPECT_NO_THROW((Grid{-1, 1, 4, 1}.validate(0.0)));
    const Grid g = default_grid(model("0", {"2"}, "0", "x", 1.0));
    EXPECT_DOUBLE_EQ(g.x_min, 1.0 - 12.0);
    EXPECT_DOUBLE_EQ(g.x_max, 1.0 + 12.0);
}

TEST(Pde, MartingaleClosedForm) {
    const Model m = model("0", {"1"}, "0", "x");
    const PdeSolution s = solve_pde(m, Grid{-6, 6, 401, 200});
    EXPECT_NEAR(s.eval_u(0, 0), 0.0, 1e-3);
    EXPECT_NEAR(s.eval_ux(0, 0), 1.0, 1e-3);
    EXPECT_NEAR(s.eval_ux(0.5, 0.3), 1.0, 1e-3);
    std::vector<double> z(1);
    z_from_pde(s, m, 0.2, 0.1, z);
    EXPECT_NEAR(z[0], 1.0, 1e-3);
}

TEST(Pde, ColeHopfClosedForm) {
    const Model m = model("0", {"1"}, "0.5*z1^2", "x");
    const PdeSolution s = solve_pde(m, default_grid(m));
    for (double x : {-2.0, 0.0, 1.5}) EXPECT_NEAR(s.eval_u(0, x), x + 0.5, 2e-3);
    EXPECT_NEAR(s.eval_ux(0, 0.7), 1.0, 2e-3);
    EXPECT_NEAR(z_from_pde(s, m, 0, 0)[0], 1.0, 2e-3);
}

TEST(Pde, LinearDriverClosedForm) {
    const Model m = model("0", {"1"}, "0.3*y", "x", 1.0);
    const PdeSolution s = solve_pde(m, default_grid(m));
    EXPECT_NEAR(s.eval_u(0, 1.0), std::exp(0.3), 2e-3);
}

TEST(Pde, ZScalesComponentwise) {
    const Model m = model("0", {"1", "0.5"}, "0", "x");
    const PdeSolution s = solve_pde(m, default_grid(m));
    const auto z = z_from_pde(s, m, 0.0, 0.0);
    ASSERT_EQ(z.size(), 2u);
    EXPECT_NEAR(z[0], 1.0, 1e-3);
    EXPECT_NEAR(z[1], 0.5, 1e-3);
}

TEST(Pde, TerminalRowAndDerivativeRows) {
    const Model m = model("0.1*(1-x)", {"0.5"}, "0.1*tanh(x) + 0.2*z1^2", "tanh(x)");
    const Grid g{-4, 4, 81, 40};
    const PdeSolution s = solve_pde(m, g);
    for (int i = 0; i < g.nx; ++i) EXPECT_EQ(s.u(g.nt, i), m.g(g.x_at(i)));
    for (int k : {0, 17, g.nt}) {
        std::vector<double> d(static_cast<std::size_t>(g.nx));
        central_derivative(s.u_row(k), g.h(), d);
        for (int i = 0; i < g.nx; ++i) EXPECT_EQ(s.ux(k, i), d[static_cast<std::size_t>(i)]);
    }
}

TEST(Pde, Interpolation) {
    const Model m = model("0", {"1"}, "0", "x");
    const Grid g{-2, 2, 41, 10};
    const PdeSolution s = solve_pde(m, g);
    EXPECT_EQ(s.eval_u(s.t_at(3), g.x_at(7)), s.u(3, 7));
    EXPECT_EQ(s.eval_u(s.t_at(10), g.x_at(40)), s.u(10, 40));
    // piecewise-linear data: midpoint value is the average
    const double mid = 0.5 * (g.x_at(4) + g.x_at(5));
    EXPECT_NEAR(s.eval_u(s.t_at(2), mid), 0.5 * (s.u(2, 4) + s.u(2, 5)), 1e-15);
    EXPECT_THROW(s.eval_u(0.0, 2.5), RangeError);
    EXPECT_THROW(s.eval_ux(1.5, 0.0), RangeError);
    EXPECT_THROW(s.eval_u(-0.1, 0.0), RangeError);
}

TEST(Pde, MeshHalvingLinearDriver) {
    const Model m = model("0", {"1"}, "0.3*y", "x", 1.0);
    auto exact = [](double t, double x) { return std::exp(0.3 * (1.0 - t)) * x; };
    const Grid coarse{-5, 7, 201, 50}, fine{-5, 7, 401, 100};
    const double e1 = sup_error(solve_pde(m, coarse), exact), e2 = sup_error(solve_pde(m, fine), exact);
    EXPECT_LT(e2, e1);
    EXPECT_GE(e1 / e2, 1.8) << e1 << " " << e2;
}

TEST(Pde, MatchesIndependentExplicitScheme) {
    // Frozen output of oracle::explicit_pde on [x0-7, x0+7] with 561 nodes.
    struct Case {
        const char *b, *sigma, *f, *g;
        double x0, smax, frozen;
    } cases[] = {
        {"0", "1", "0.2*tanh(x)+0.5*z1^2", "tanh(x)", 0.0, 1.0, 0.23180353664583422},
        {"0.1*(1-x)", "0.5", "0.1*tanh(x)", "tanh(x)", 0.0, 0.5, 0.083932355567467781},
        {"-0.5*x", "1+0.1*tanh(x)", "0.1*x+0.3*y+0.2*z1", "tanh(x)", 0.3, 1.1, 0.33442963263692838},
    };
    for (const auto& c : cases) {
        const auto o = oracle::explicit_pde(Expression::parse(c.b), Expression::parse(c.sigma), Expression::parse(c.f),
                                            Expression::parse(c.g), 1.0, c.x0 - 7, c.x0 + 7, 561, c.smax);
        EXPECT_NEAR(o.at(c.x0), c.frozen, 1e-12) << c.f;
        const Model m = model(c.b, {c.sigma}, c.f, c.g, c.x0);
        const PdeSolution s = solve_pde(m, default_grid(m));
        EXPECT_NEAR(s.eval_u(0, c.x0), c.frozen, 2e-3) << c.f;
    }
}

TEST(Pde, ComparisonProperty) {
    const Grid g{-6, 6, 201, 100};
    const Model base = model("0", {"1"}, "0.2*tanh(x)+0.5*z1^2", "tanh(x)");
    const Model lifted_g = model("0", {"1"}, "0.2*tanh(x)+0.5*z1^2", "tanh(x)+0.5");
    const Model lifted_f = model("0", {"1"}, "0.2*tanh(x)+0.5*z1^2+0.1", "tanh(x)");
    EXPECT_TRUE(check_y_comparison(lifted_g, base, g).passed);
    EXPECT_TRUE(check_y_comparison(lifted_f, base, g).passed);
    const SignCertificate same = check_y_comparison(base, base, g);
    EXPECT_TRUE(same.passed);
    EXPECT_EQ(same.min_value, 0.0);
    try {
        check_y_comparison(base, lifted_g, g);
        FAIL() << "ordering violated but accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("ordering hypothesis fails at"), std::string::npos);
    }
}

TEST(Pde, MonotonePropagation) {
    for (const char* f : {"0.2*tanh(x)+0.5*z1^2", "0.1*x + 0.3*y", "0.5*sin(y) + 0.1*tanh(x)"}) {
        const Model m = model("0", {"1+0.1*tanh(x)"}, f, "tanh(x)");
        const PdeSolution s = solve_pde(m, default_grid(m, 201, 100));
        double lo = 1e300;
        for (int k = 0; k <= s.grid().nt; ++k)
            for (int i = 0; i < s.grid().nx; ++i) lo = std::min(lo, s.ux(k, i));
        EXPECT_GE(lo, -1e-6) << f;
    }
}

TEST(Pde, FixedPointFailureIsReported) {
    const Model m = model("0", {"1"}, "0.5*z1^2", "tanh(x)");
    SchemeParams p;
    p.max_iterations = 1;
    EXPECT_THROW(solve_pde(m, Grid{-6, 6, 101, 10}, p), NumericalError);
}

TEST(Pde, SerialAndParallelAgree) {
    const Model m = model("0.1*(1-x)", {"0.5+0.1*sin(x)"}, "0.2*tanh(x) + 0.3*z1^2 - 0.1*y", "tanh(x)");
    SchemeParams ser;
    ser.exec = Execution::serial;
    const PdeSolution a = solve_pde(m, default_grid(m, 201, 100), ser);
    const PdeSolution b = solve_pde(m, default_grid(m, 201, 100));
    for (int k = 0; k <= 100; ++k)
        for (int i = 0; i < 201; ++i) ASSERT_EQ(a.u(k, i), b.u(k, i));
}

TEST(Pde, CsvRoundTrip) {
    const Model m = model("0", {"1"}, "0.5*z1^2", "tanh(x)");
    const PdeSolution s = solve_pde(m, Grid{-3, 3, 31, 40});
    std::stringstream ss;
    write_pde_csv(ss, s);
    const PdeTable t = read_pde_csv(ss);
    ASSERT_EQ(t.u.size(), 31u * 41u);
    std::size_t r = 0;
    for (int k = 0; k <= 40; ++k)
        for (int i = 0; i < 31; ++i, ++r) {
            EXPECT_EQ(t.t[r], s.t_at(k));
            EXPECT_EQ(t.x[r], s.grid().x_at(i));
            EXPECT_EQ(t.u[r], s.u(k, i));
            EXPECT_EQ(t.ux[r], s.ux(k, i));
        }
}
