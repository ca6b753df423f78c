#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "invstop/errors.hpp"
#include "invstop/model.hpp"

using namespace invstop;

namespace {

Problem bm(double sigma, PayoffSpec payoff, double T = 1.0) {
    return Problem(DiffusionSpec(Field::constant(0.0), Field::constant(sigma), 1.0, T),
                   std::move(payoff));
}

Eigen::VectorXd grid(double lo, double hi, int n) { return Eigen::VectorXd::LinSpaced(n, lo, hi); }

}  // namespace

TEST(GeneratorPayoff, QuadraticTerminalGivesSigmaSquared) {
    for (double s : {0.5, 1.0, 2.0}) {
        const auto p = bm(s, PayoffSpec::monomial(1.0, 2));
        for (double t : {0.0, 0.3, 1.0})
            for (double x : {-3.0, 0.0, 2.5}) EXPECT_DOUBLE_EQ(generator_payoff(p, t, x), s * s);
    }
}

TEST(GeneratorPayoff, MartingaleTerminalGivesZero) {
    const auto p = bm(1.3, PayoffSpec::monomial(1.0, 1));
    EXPECT_EQ(generator_payoff(p, 0.2, 7.0), 0.0);
}

TEST(GeneratorPayoff, StaticFlow) {
    const Problem p(DiffusionSpec(Field::constant(0.0), Field::constant(0.0), 1.0, 1.0),
                    PayoffSpec::flow_only(Field::affine(0.0, -1.0)));
    EXPECT_EQ(generator_payoff(p, 0.5, 2.0), -2.0);
    EXPECT_EQ(generator_payoff(p, 0.5, -0.25), 0.25);
}

TEST(GeneratorPayoff, ProductTerminal) {
    // g = x (T - t): g_t = -x, g_xx = 0
    const auto p = bm(1.0, PayoffSpec::product(1.0, 1.0));
    EXPECT_DOUBLE_EQ(generator_payoff(p, 0.4, 0.7), -0.7);
}

TEST(GeneratorPayoff, OrnsteinUhlenbeckDriftEntersThroughGx) {
    // mu = kappa (theta - x), g = x^2: h = 2 x mu + sigma^2
    const double kappa = 0.8, theta = 0.3, s = 0.6;
    const Problem p(DiffusionSpec(Field::affine(kappa * theta, -kappa), Field::constant(s), kappa, 1.0),
                    PayoffSpec::monomial(1.0, 2));
    const double x = 1.7;
    EXPECT_NEAR(generator_payoff(p, 0.1, x), 2.0 * x * kappa * (theta - x) + s * s, 1e-14);
}

TEST(GeneratorPayoff, LinearInFlow) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const auto f1 = Field::affine(0.3, -1.2, 0.5);
    const auto f2 = Field::custom([](double t, double x) { return std::sin(x) + t; });
    const auto f12 = Field::custom([&](double t, double x) { return f1(t, x) + f2(t, x); });
    const DiffusionSpec d(Field::affine(0.1, -0.4), Field::constant(0.7), 1.0, 1.0);
    const Problem both(d, PayoffSpec::monomial(0.5, 3, f12));
    const Problem first(d, PayoffSpec::monomial(0.5, 3, f1));
    const Problem second(d, PayoffSpec::flow_only(f2));
    for (int i = 0; i < 200; ++i) {
        const double t = 0.5 * (u(rng) + 2.0) / 2.0, x = u(rng);
        const double lhs = generator_payoff(both, t, x);
        const double rhs = generator_payoff(first, t, x) + generator_payoff(second, t, x);
        EXPECT_NEAR(lhs, rhs, 8 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(lhs)));
    }
}

TEST(GeneratorPayoff, NonFiniteNamesFunctionAndPoint) {
    const auto nan_flow = Field::custom(
        [](double, double x) { return x > 1.0 ? std::numeric_limits<double>::quiet_NaN() : 0.0; },
        "spiky");
    const auto p = bm(1.0, PayoffSpec::flow_only(nan_flow));
    EXPECT_EQ(generator_payoff(p, 0.5, 0.5), 0.0);
    try {
        generator_payoff(p, 0.5, 2.0);
        FAIL() << "expected EvaluationError";
    } catch (const EvaluationError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("f (spiky)"), std::string::npos) << what;
        EXPECT_NE(what.find("x=2"), std::string::npos) << what;
    }
}

TEST(GeneratorPayoff, RejectsTimeOutsideHorizon) {
    const auto p = bm(1.0, PayoffSpec::monomial(1.0, 2));
    EXPECT_THROW(generator_payoff(p, -0.1, 0.0), std::out_of_range);
    EXPECT_THROW(generator_payoff(p, 1.1, 0.0), std::out_of_range);
}

TEST(SingleCrossing, StrictlyDecreasingFlow) {
    const auto p = bm(1.0, PayoffSpec::flow_only(Field::affine(0.0, -1.0)));
    const auto r = check_single_crossing(p, grid(0.0, 1.0, 5), grid(-2.0, 2.0, 41));
    EXPECT_TRUE(r.holds);
    EXPECT_TRUE(r.holds_strictly);
    EXPECT_TRUE(r.fails_at.empty());
}

TEST(SingleCrossing, ConstantHHoldsWeakly) {
    const auto p = bm(0.8, PayoffSpec::monomial(1.0, 2));
    const auto r = check_single_crossing(p, grid(0.0, 1.0, 3), grid(-1.0, 1.0, 11));
    EXPECT_TRUE(r.holds);
    EXPECT_FALSE(r.holds_strictly);
}

TEST(SingleCrossing, IncreasingFlowFailsEveryPair) {
    const auto p = bm(1.0, PayoffSpec::flow_only(Field::affine(0.0, 1.0)));
    const auto times = grid(0.0, 1.0, 4);
    const auto states = grid(-1.0, 1.0, 9);
    const auto r = check_single_crossing(p, times, states);
    EXPECT_FALSE(r.holds);
    ASSERT_EQ(r.fails_at.size(), 4u * 8u);
    EXPECT_EQ(r.fails_at.front().x1, states[0]);
    EXPECT_EQ(r.fails_at.front().x2, states[1]);
}

TEST(SingleCrossing, FlagsExactlyInjectedViolations) {
    // h = -x except for bumps that make h increase on two known pairs.
    const auto bumpy = Field::custom([](double t, double x) {
        if (t > 0.5 && std::abs(x - 0.5) < 1e-9) return 10.0;
        if (t < 0.5 && std::abs(x + 1.0) < 1e-9) return 10.0;
        return -x;
    });
    const auto p = bm(1.0, PayoffSpec::flow_only(bumpy));
    const Eigen::VectorXd times = (Eigen::VectorXd(2) << 0.25, 0.75).finished();
    const auto states = grid(-2.0, 2.0, 17);  // step 0.25
    const auto r = check_single_crossing(p, times, states);
    ASSERT_EQ(r.fails_at.size(), 2u);
    EXPECT_EQ(r.fails_at[0].t, 0.25);
    EXPECT_DOUBLE_EQ(r.fails_at[0].x1, -1.25);
    EXPECT_DOUBLE_EQ(r.fails_at[0].x2, -1.0);
    EXPECT_EQ(r.fails_at[1].t, 0.75);
    EXPECT_DOUBLE_EQ(r.fails_at[1].x1, 0.25);
    EXPECT_DOUBLE_EQ(r.fails_at[1].x2, 0.5);
}

TEST(SingleCrossing, RequiresAscendingStates) {
    const auto p = bm(1.0, PayoffSpec::monomial(1.0, 2));
    const Eigen::VectorXd states = (Eigen::VectorXd(3) << 0.0, 1.0, 0.5).finished();
    EXPECT_THROW(check_single_crossing(p, grid(0.0, 1.0, 2), states), PreconditionError);
}

TEST(PayoffPartials, BuiltInsMatchFiniteDifferences) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ut(0.1, 0.9), ux(-2.0, 2.0);
    Eigen::MatrixX2d pts(100, 2);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) pts.row(i) << ut(rng), ux(rng);
    const PayoffSpec specs[] = {PayoffSpec::monomial(1.0, 2), PayoffSpec::monomial(-0.5, 3),
                                PayoffSpec::monomial(2.0, 1), PayoffSpec::product(1.5, 1.0)};
    for (const auto& spec : specs)
        for (double delta : {1e-4, 1e-5}) {
            const auto r = check_payoff_partials(spec, pts, delta);
            EXPECT_TRUE(r.all_finite);
            // Cubic terms give a C delta^2 error; rounding dominates the second difference.
            EXPECT_LE(r.max_err_x, 3.0 * delta * delta + 1e-7) << spec.g.name();
            EXPECT_LE(r.max_err_t, 3.0 * delta * delta + 1e-7) << spec.g.name();
            EXPECT_LE(r.max_err_xx, 2e-14 / (delta * delta) + 1e-6) << spec.g.name();
        }
}

TEST(PayoffPartials, WrongPartialIsDetected) {
    auto spec = PayoffSpec::monomial(1.0, 2);
    spec.g_x = Field::affine(0.0, 2.0 * 1.01);
    Eigen::MatrixX2d pts(1, 2);
    pts << 0.5, 1.0;
    EXPECT_GT(check_payoff_partials(spec, pts, 1e-4).max_err_x, 1e-3);
}

TEST(DiffusionSpot, AffineWithinDeclaredBound) {
    const DiffusionSpec ok(Field::affine(0.2, -0.8), Field::affine(1.0, 0.1), 0.9, 1.0);
    const auto r = spot_check_diffusion(ok, 500, 5, 5.0);
    EXPECT_TRUE(r.lipschitz_ok);
    EXPECT_NEAR(r.worst_ratio, 0.9, 1e-9);
    const DiffusionSpec bad(Field::affine(0.0, -2.0), Field::constant(1.0), 1.0, 1.0);
    EXPECT_FALSE(spot_check_diffusion(bad, 100, 5).lipschitz_ok);
}

TEST(DiffusionSpot, NegativeVolatilityFlagged) {
    const DiffusionSpec d(Field::constant(0.0), Field::affine(0.0, 1.0), 1.0, 1.0);
    EXPECT_FALSE(spot_check_diffusion(d, 100, 1).sigma_nonnegative);
}

TEST(DiffusionSpec, RejectsBadDeclarations) {
    EXPECT_THROW(DiffusionSpec(Field::constant(0.0), Field::constant(1.0), 0.0, 1.0), std::invalid_argument);
    EXPECT_THROW(DiffusionSpec(Field::constant(0.0), Field::constant(1.0), 1.0, -1.0), std::invalid_argument);
}
