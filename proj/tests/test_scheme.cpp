#include "qrbsde/error.hpp"
#include "qrbsde/scheme.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace qrbsde;
using testing_support::constant_obstacle;
using testing_support::custom_spec;
using testing_support::zero_driver;

TEST(Implicit, DriverFreeOfY) {
    const PicardResult r = solve_implicit(1.0, 0.1, [](double) { return 2.0; });
    EXPECT_DOUBLE_EQ(r.value, 1.2);
    EXPECT_EQ(r.iterations, 1);
}

TEST(Implicit, LinearFixedPoint) {
    // y = 1 + 0.5 * 0.5 y  ->  y = 4/3
    const PicardResult r = solve_implicit(1.0, 0.5, [](double y) { return 0.5 * y; });
    EXPECT_NEAR(r.value, 4.0 / 3.0, 1e-11);
    EXPECT_GT(r.iterations, 1);
    EXPECT_LE(r.iterations, kPicardMaxIterations);
}

TEST(Implicit, NonContractionFails) {
    EXPECT_THROW(solve_implicit(1.0, 1.0, [](double y) { return 2.0 * y; }), NumericError);
    EXPECT_THROW(solve_implicit(1.0, 0.1, [](double) { return std::nan(""); }), NumericError);
}

TEST(Reflect, Examples) {
    const std::vector<double> yt{0.2, -0.1, 0.5}, g{0.3, 0.0, 0.5};
    const ReflectionStep on = reflect_step(yt, g, true);
    EXPECT_EQ(on.values, (std::vector<double>{0.3, 0.0, 0.5}));
    EXPECT_NEAR(on.dk[0], 0.1, 1e-15);
    EXPECT_DOUBLE_EQ(on.dk[1], 0.1);
    EXPECT_EQ(on.dk[2], 0.0);
    const ReflectionStep off = reflect_step(yt, g, false);
    EXPECT_EQ(off.values, yt);
    EXPECT_EQ(off.dk, (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(ImplicitStep, ClampsToBound) {
    const ProblemSpec s = custom_spec(0.0, 1.0, 0.0, zero_driver(), constant_obstacle(0), 1.0);
    const std::vector<double> e{5.0, -5.0, 0.25}, z{0.0, 0.0, 0.0}, xs{0.0, 0.0, 0.0};
    const ImplicitStep st = implicit_y_step(e, z, 1, s, 0.0, xs, 0.1, 1.0);
    EXPECT_EQ(st.values, (std::vector<double>{1.0, -1.0, 0.25}));
}

TEST(ZProjection, ConstantBasisIsSampleMean) {
    const std::vector<double> xs{0.0, 1.0, 2.0, 3.0};
    const std::vector<double> dW{0.1, -0.2, 0.3, 0.05};
    const std::vector<double> y{1.0, 2.0, -1.0, 4.0};
    const Regressor reg(Basis::constant(), xs, 0.0);
    const ZProjection zp = z_projection_step(reg, xs, y, dW, 1, 0.5, std::nullopt);
    double expected = 0.0;
    for (std::size_t p = 0; p < 4; ++p) expected += y[p] * dW[p] / 0.5;
    expected /= 4.0;
    for (double v : zp.values) EXPECT_NEAR(v, expected, 1e-14);
    const ZProjection zc = z_projection_step(reg, xs, y, dW, 1, 0.5, Interval{-0.1, 0.1});
    for (double v : zc.values) EXPECT_LE(std::abs(v), 0.1);
}

namespace {

struct Simulated {
    TimeGrid grid;
    ReflectionSchedule schedule;
    PathBundle bundle;
};

Simulated simulate(const ProblemSpec& s, std::size_t N, std::size_t paths, std::uint64_t seed,
               ReflectionPolicy policy = ReflectionPolicy::all()) {
    auto [g, r] = make_grid(N, s.T, policy);
    PathBundle b = euler_simulate(s, g, sample_increments(g, paths, seed, s.m));
    return {g, r, std::move(b)};
}

}  // namespace

TEST(Solve, OneStepClippedPut) {
    // zero driver, x0 = strike: Y0 = E[clip(-sigma W_T, 0, cap)]
    const double sigma = 0.4, cap = 0.3;
    ProblemSpec s =
        custom_spec(0.0, sigma, 0.0, zero_driver(), [cap](double x) { return std::clamp(-x, 0.0, cap); }, cap);
    s.T = 0.5;  // one step needs L T < 1
    const Simulated st = simulate(s, 1, 200000, 5);
    const SchemeSolution sol =
        solve_backward(s, st.grid, st.schedule, st.bundle, BasisSpec::polynomial(3), TruncationRadius::user(1e9));
    const double expected = testing_support::clipped_put_mean(sigma * std::sqrt(0.5), cap);
    EXPECT_NEAR(sol.y0, expected, 4.0 * sol.y0_se + 1e-12);
    EXPECT_GT(sol.y0_se, 0.0);
}

TEST(Solve, ConstantObstacleIsConstantSolution) {
    const double c = 0.7;
    const ProblemSpec s = custom_spec(0.0, 0.3, 0.1, zero_driver(), constant_obstacle(c), c);
    const Simulated st = simulate(s, 8, 5000, 1);
    const SchemeSolution sol =
        solve_backward(s, st.grid, st.schedule, st.bundle, BasisSpec::polynomial(4), TruncationRadius::user(5.0));
    for (std::size_t p = 0; p < sol.paths; p += 97)
        for (std::size_t i = 0; i <= sol.steps; ++i) EXPECT_NEAR(sol.y(p, i), c, 1e-10);
    EXPECT_NEAR(sol.y0, c, 1e-10);
}

TEST(Solve, ZeroSolutionAutoRadiusFloor) {
    const ProblemSpec s = custom_spec(0.0, 0.3, 0.0, zero_driver(), constant_obstacle(0.0), 0.0);
    const Simulated st = simulate(s, 8, 2000, 1);
    const TruncationRadius r = estimate_Mz_auto(s, st.grid, st.schedule, st.bundle, BasisSpec::polynomial(3));
    EXPECT_DOUBLE_EQ(r.value, 0.1);
    EXPECT_EQ(r.provenance, RadiusProvenance::auto_estimated);
}

TEST(Solve, UserRadiusPassesThrough) {
    const ProblemSpec s = build_preset(kPresetPureQuadratic);
    const Simulated st = simulate(s, 4, 500, 1);
    const TruncationRadius r =
        resolve_radius(2.5, s, st.grid, st.schedule, st.bundle, BasisSpec::polynomial(3));
    EXPECT_DOUBLE_EQ(r.value, 2.5);
    EXPECT_EQ(r.provenance, RadiusProvenance::user_supplied);
}

TEST(Solve, InactiveTruncationIsBitIdentical) {
    const ProblemSpec s = build_preset(kPresetPureQuadratic);
    const Simulated st = simulate(s, 16, 4000, 3);
    const SchemeSolution a =
        solve_backward(s, st.grid, st.schedule, st.bundle, BasisSpec::polynomial(4), TruncationRadius::user(1e9));
    const SchemeSolution b =
        solve_backward(s, st.grid, st.schedule, st.bundle, BasisSpec::polynomial(4), TruncationRadius::user(1e12));
    EXPECT_EQ(a.y_bar, b.y_bar);
    EXPECT_EQ(a.z_bar, b.z_bar);
}

TEST(Solve, SkorokhodHoldsExactly) {
    for (const auto& name : preset_names()) {
        const ProblemSpec s = build_preset(name);
        const Simulated st = simulate(s, 16, 4000, 2, ReflectionPolicy::every(4));
        const SchemeSolution sol =
            solve_backward(s, st.grid, st.schedule, st.bundle, BasisSpec::polynomial(4), TruncationRadius::user(5.0));
        const SkorokhodCheck c = check_skorokhod(sol, s, st.schedule);
        EXPECT_TRUE(c.passed()) << name << " violations " << c.violations;
        for (std::size_t p = 0; p < sol.paths; p += 101)
            for (std::size_t i = 0; i <= sol.steps; ++i) EXPECT_LE(std::abs(sol.y(p, i)), sol.y_bound);
    }
}

TEST(Solve, DeterministicAcrossRuns) {
    const ProblemSpec s = build_preset(kPresetMixedQuadratic);
    const Simulated st = simulate(s, 8, 3000, 8);
    const SchemeSolution a =
        solve_backward(s, st.grid, st.schedule, st.bundle, BasisSpec::polynomial(4), TruncationRadius::user(3.0));
    const SchemeSolution b =
        solve_backward(s, st.grid, st.schedule, st.bundle, BasisSpec::polynomial(4), TruncationRadius::user(3.0));
    EXPECT_EQ(a.y_bar, b.y_bar);
    EXPECT_EQ(a.y0, b.y0);
}

TEST(Preconditions, ContractionRequired) {
    const ProblemSpec s = build_preset(kPresetLipschitz, {{"L", 40.0}});
    const TimeGrid g = uniform_grid(8, s.T);
    EXPECT_THROW(check_scheme_preconditions(s, g), ConfigError);
    EXPECT_NO_THROW(check_scheme_preconditions(build_preset(kPresetLipschitz), uniform_grid(8, 1.0)));
}
