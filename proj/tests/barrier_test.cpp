#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "invstop/barrier.hpp"
#include "invstop/errors.hpp"

using namespace invstop;

namespace {

Barrier step_up() {
    return Barrier({{0.0, 1.0, std::nullopt}, {0.5, 2.0, std::nullopt}}, Interpolation::constant, 1.0);
}

Barrier mixed_linear() {
    // continuous kink at 0.3, downward jump 0.7 at 0.6, upward jump at 0.8
    return Barrier({{0.0, 1.0, std::nullopt},
                    {0.3, 1.5, std::nullopt},
                    {0.6, 0.8, 1.5},
                    {0.8, 1.2, 0.9},
                    {1.0, 1.0, std::nullopt}},
                   Interpolation::linear);
}

}  // namespace

TEST(Barrier, ConstantEvaluates) {
    const auto b = Barrier::constant(1.5, 2.0);
    for (double t : {0.0, 0.7, 2.0}) EXPECT_EQ(b.eval(t), 1.5);
    EXPECT_EQ(b.eval_left(2.0), 1.5);
    EXPECT_TRUE(b.jumps().empty());
}

TEST(Barrier, CadlagConvention) {
    const auto b = step_up();
    EXPECT_EQ(b.eval(0.5), 2.0);
    EXPECT_EQ(b.eval(0.49), 1.0);
    EXPECT_EQ(b.eval_left(0.5), 1.0);
    EXPECT_EQ(b.eval(1.0), 2.0);
}

TEST(Barrier, DownwardJumpReported) {
    const Barrier b({{0.0, 2.0, std::nullopt}, {0.5, 1.0, std::nullopt}}, Interpolation::constant, 1.0);
    EXPECT_EQ(b.eval_left(0.5), 2.0);
    const auto r = b.validate_regular();
    EXPECT_TRUE(r.ok);
    ASSERT_EQ(r.jumps.size(), 1u);
    EXPECT_EQ(r.jumps[0].t, 0.5);
    EXPECT_EQ(r.jumps[0].size, -1.0);
    EXPECT_EQ(r.downward_jump_sum, 1.0);
}

TEST(Barrier, JumpOfPointSeven) {
    const Barrier b({{0.0, 1.5, std::nullopt}, {0.4, 0.8, 1.5}}, Interpolation::linear, 1.0);
    const auto j = b.jumps();
    ASSERT_EQ(j.size(), 1u);
    EXPECT_EQ(j[0].t, 0.4);
    EXPECT_NEAR(j[0].size, -0.7, 1e-15);
}

TEST(Barrier, LinearUsesLeftLimitAtRightKnot) {
    const auto b = mixed_linear();
    // segment [0.3, 0.6): from 1.5 to the left limit 1.5, so flat, not smeared toward 0.8
    EXPECT_DOUBLE_EQ(b.eval(0.59), 1.5);
    EXPECT_DOUBLE_EQ(b.eval(0.6), 0.8);
    EXPECT_DOUBLE_EQ(b.eval_left(0.6), 1.5);
    // segment [0.6, 0.8): 0.8 -> 0.9
    EXPECT_DOUBLE_EQ(b.eval(0.7), 0.85);
    EXPECT_DOUBLE_EQ(b.eval_left(0.8), 0.9);
    EXPECT_DOUBLE_EQ(b.eval(0.8), 1.2);
    EXPECT_DOUBLE_EQ(b.eval(0.15), 1.25);
    const auto j = b.jumps();
    ASSERT_EQ(j.size(), 2u);
    EXPECT_NEAR(j[0].size, -0.7, 1e-15);
    EXPECT_NEAR(j[1].size, 0.3, 1e-15);
}

TEST(Barrier, LeftEqualsRightBetweenKnots) {
    const auto b = mixed_linear();
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const double t = u(rng);
        if (t == 0.0 || t == 0.3 || t == 0.6 || t == 0.8) continue;
        EXPECT_EQ(b.eval_left(t), b.eval(t));
    }
}

TEST(Barrier, RightContinuousAtKnots) {
    for (const auto& b : {step_up(), mixed_linear()})
        for (const auto& k : b.knots()) {
            if (k.t >= 1.0) continue;
            for (double eps : {1e-6, 1e-9, 1e-12}) EXPECT_NEAR(b.eval(k.t + eps), b.eval(k.t), 2.0 * eps + 1e-15);
        }
}

TEST(Barrier, ConstructionErrors) {
    EXPECT_THROW(Barrier({{0.0, 1.0, std::nullopt}, {0.5, 1.0, std::nullopt}, {0.5, 2.0, std::nullopt}},
                         Interpolation::constant),
                 BarrierError);
    EXPECT_THROW(Barrier({{0.0, 1.0, std::nullopt}, {0.6, 1.0, std::nullopt}, {0.5, 2.0, std::nullopt}},
                         Interpolation::constant),
                 BarrierError);
    EXPECT_THROW(Barrier({{0.1, 1.0, std::nullopt}, {1.0, 1.0, std::nullopt}}, Interpolation::linear),
                 BarrierError);
    EXPECT_THROW(Barrier({{0.0, std::nan(""), std::nullopt}, {1.0, 1.0, std::nullopt}}, Interpolation::linear),
                 BarrierError);
    // constant interpolation cannot carry a left value that disagrees with the previous knot
    EXPECT_THROW(Barrier({{0.0, 1.0, std::nullopt}, {0.5, 2.0, 1.5}}, Interpolation::constant, 1.0),
                 BarrierError);
}

TEST(Barrier, ValidateWithoutConstructing) {
    const std::vector<Knot> dup{{0.0, 1.0, std::nullopt}, {0.5, 1.0, std::nullopt}, {0.5, 2.0, std::nullopt}};
    const auto r = validate_regular(dup, Interpolation::constant);
    EXPECT_FALSE(r.ok);
    ASSERT_EQ(r.violations.size(), 1u);
    EXPECT_NE(r.violations[0].find("duplicate"), std::string::npos);
}

TEST(Barrier, RangeErrors) {
    const auto b = step_up();
    EXPECT_THROW(b.eval(-0.01), std::out_of_range);
    EXPECT_THROW(b.eval(1.01), std::out_of_range);
    EXPECT_THROW(b.eval_left(0.0), std::out_of_range);
}

TEST(Barrier, KnotTimesInOpenInterval) {
    const auto b = mixed_linear();
    EXPECT_EQ(b.knot_times_in(0.3, 0.8), std::vector<double>{0.6});
    EXPECT_EQ(b.knot_times_in(0.0, 1.0), (std::vector<double>{0.3, 0.6, 0.8}));
}

TEST(BarrierFile, RoundTrip) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const auto& b : {step_up(), mixed_linear(), Barrier::constant(-0.25, 1.0)}) {
        std::stringstream ss;
        write_barrier(ss, b);
        const auto back = read_barrier(ss);
        EXPECT_EQ(back.interpolation(), b.interpolation());
        for (int i = 0; i < 1000; ++i) {
            const double t = u(rng);
            EXPECT_EQ(back.eval(t), b.eval(t));
            if (t > 0.0) EXPECT_EQ(back.eval_left(t), b.eval_left(t));
        }
    }
}

TEST(BarrierFile, LeftValueOnlyAtJumps) {
    std::stringstream ss;
    write_barrier(ss, mixed_linear());
    std::string line;
    int three = 0;
    while (std::getline(ss, line))
        if (std::count(line.begin(), line.end(), ',') == 2) ++three;
    EXPECT_EQ(three, 2);
}

TEST(BarrierFile, ParseErrorsCarryLineNumbers) {
    std::stringstream bad("interpolation=linear\n0,1\n# comment\n0.5,abc\n");
    try {
        read_barrier(bad);
        FAIL();
    } catch (const BarrierError& e) {
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    }
    std::stringstream header("0,1\n");
    EXPECT_THROW(read_barrier(header), BarrierError);
    EXPECT_THROW(load_barrier("/nonexistent/barrier.txt"), ConfigError);
}
