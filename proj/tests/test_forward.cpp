#include "qrbsde/error.hpp"
#include "qrbsde/forward.hpp"
#include "qrbsde/parallel.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace qrbsde;
using testing_support::custom_spec;
using testing_support::zero_driver;

TEST(Grid, AllPolicy) {
    const auto [g, r] = make_grid(4, 1.0, ReflectionPolicy::all());
    const std::vector<double> expected{0.0, 0.25, 0.5, 0.75, 1.0};
    EXPECT_EQ(g.times, expected);
    EXPECT_EQ(r.indices(), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
    EXPECT_EQ(r.intervals(), 4u);
}

TEST(Grid, EveryK) {
    const auto [g, r] = make_grid(4, 1.0, ReflectionPolicy::every(2));
    EXPECT_EQ(r.indices(), (std::vector<std::size_t>{0, 2, 4}));
    EXPECT_DOUBLE_EQ(r.mesh(g), 0.5);
}

TEST(Grid, MinimalGrid) {
    const auto [g, r] = make_grid(1, 1.0, ReflectionPolicy::all());
    EXPECT_EQ(g.steps(), 1u);
    EXPECT_EQ(r.indices(), (std::vector<std::size_t>{0, 1}));
}

TEST(Grid, Errors) {
    EXPECT_THROW(make_grid(0, 1.0, ReflectionPolicy::all()), ConfigError);
    EXPECT_THROW(make_grid(4, 1.0, ReflectionPolicy::every(5)), ConfigError);
    EXPECT_THROW(make_grid(4, 1.0, ReflectionPolicy::at({0.3})), ConfigError);
    const auto [g, r] = make_grid(4, 1.0, ReflectionPolicy::at({0.5}));
    EXPECT_EQ(r.indices(), (std::vector<std::size_t>{0, 2, 4}));
}

TEST(Increments, MeanWithinClt) {
    const auto [g, r] = make_grid(2, 1.0, ReflectionPolicy::all());
    const PathBundle b = sample_increments(g, 100000, 7, 1);
    double s = 0.0;
    for (std::size_t p = 0; p < b.paths; ++p) s += b.increment(p, 0, 0);
    const double dt = g.dt(0);
    EXPECT_LE(std::abs(s / static_cast<double>(b.paths)), 4.0 * std::sqrt(dt / 100000.0));
}

TEST(Increments, DeterministicAcrossThreadCounts) {
    const auto [g, r] = make_grid(8, 1.0, ReflectionPolicy::all());
    set_thread_count(1);
    const PathBundle a = sample_increments(g, 5000, 11, 2);
    set_thread_count(8);
    const PathBundle b = sample_increments(g, 5000, 11, 2);
    set_thread_count(0);
    EXPECT_EQ(a.dW, b.dW);
    EXPECT_EQ(a.checksum(), b.checksum());
}

TEST(Increments, HeadMatchesDirectSample) {
    const auto [g, r] = make_grid(4, 1.0, ReflectionPolicy::all());
    const PathBundle big = sample_increments(g, 1000, 3, 1);
    const PathBundle small = sample_increments(g, 100, 3, 1);
    EXPECT_EQ(big.head(100).dW, small.dW);
}

TEST(Increments, ComponentsUncorrelated) {
    const auto [g, r] = make_grid(1, 1.0, ReflectionPolicy::all());
    const std::size_t P = 100000;
    const PathBundle b = sample_increments(g, P, 5, 2);
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (std::size_t p = 0; p < P; ++p) {
        const double a = b.increment(p, 0, 0), c = b.increment(p, 0, 1);
        sa += a;
        sb += c;
        saa += a * a;
        sbb += c * c;
        sab += a * c;
    }
    const double n = static_cast<double>(P);
    const double cov = sab / n - sa / n * sb / n;
    const double corr = cov / std::sqrt((saa / n - sa * sa / n / n) * (sbb / n - sb * sb / n / n));
    EXPECT_LE(std::abs(corr), 4.0 / std::sqrt(n));
}

TEST(Euler, PureBrownian) {
    const ProblemSpec s = custom_spec(0.2, 1.0, 0.0, zero_driver(), testing_support::constant_obstacle(0), 1.0);
    const auto [g, r] = make_grid(5, 1.0, ReflectionPolicy::all());
    const PathBundle b = euler_simulate(s, g, sample_increments(g, 50, 1, 1));
    for (std::size_t p = 0; p < b.paths; ++p) {
        double x = 0.2;
        for (std::size_t i = 0; i < 5; ++i) {
            EXPECT_EQ(b.euler(p, i), x);
            x += b.increment(p, i, 0);
        }
        EXPECT_EQ(b.euler(p, 5), x);
    }
}

TEST(Euler, ConstantDriftNoNoise) {
    const ProblemSpec s = custom_spec(1.0, 0.0, 0.7, zero_driver(), testing_support::constant_obstacle(0), 1.0);
    const auto [g, r] = make_grid(8, 2.0, ReflectionPolicy::all());
    const PathBundle b = euler_simulate(s, g, sample_increments(g, 4, 1, 1));
    for (std::size_t i = 0; i <= 8; ++i) EXPECT_NEAR(b.euler(2, i), 1.0 + 0.7 * g.times[i], 1e-14);
}

TEST(Euler, NonFiniteStateNamesPathAndStep) {
    ProblemSpec s = custom_spec(1.0, 0.3, 0.0, zero_driver(), testing_support::constant_obstacle(0), 1.0);
    s.drift = [](double t, double) { return t > 0.4 ? std::nan("") : 0.0; };
    const auto [g, r] = make_grid(4, 1.0, ReflectionPolicy::all());
    try {
        euler_simulate(s, g, sample_increments(g, 3, 1, 1));
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("path"), std::string::npos);
    }
}

TEST(Exact, P1EqualsEuler) {
    const ProblemSpec s = build_preset(kPresetPureQuadratic);
    const auto [g, r] = make_grid(16, 1.0, ReflectionPolicy::all());
    PathBundle b = exact_simulate(s, g, sample_increments(g, 200, 9, 1));
    b = euler_simulate(s, g, std::move(b));
    EXPECT_EQ(b.x_exact, b.x_euler);
    const MomentEstimate e = strong_error_estimate(b, b);
    EXPECT_EQ(e.mean, 0.0);
}

TEST(Exact, OrnsteinUhlenbeckOneStepMean) {
    // dX = 0.5 (1 - X) dt + 0.3 dW: E[X_dt | x] = x e^{-0.5 dt} + (1 - e^{-0.5 dt})
    const ProblemSpec s = build_preset(kPresetMixedQuadratic);
    const auto [g, r] = make_grid(1, 0.5, ReflectionPolicy::all());
    const std::size_t P = 200000;
    const PathBundle b = exact_simulate(s, g, sample_increments(g, P, 21, 1));
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
        sum += b.exact(p, 1);
        sum2 += b.exact(p, 1) * b.exact(p, 1);
    }
    const double mean = sum / static_cast<double>(P);
    const double var = sum2 / static_cast<double>(P) - mean * mean;
    const double e = std::exp(-0.5 * 0.5);
    const double expected_mean = 1.0 * e + (1.0 - e);
    const double expected_var = 0.09 * (1.0 - std::exp(-2.0 * 0.5 * 0.5)) / (2.0 * 0.5);
    EXPECT_NEAR(mean, expected_mean, 4.0 * std::sqrt(expected_var / static_cast<double>(P)));
    EXPECT_NEAR(var, expected_var, 4.0 * expected_var * std::sqrt(2.0 / static_cast<double>(P)));
}

TEST(Exact, LinearOdeNoNoise) {
    ProblemSpec s = custom_spec(2.0, 0.0, 0.0, zero_driver(), testing_support::constant_obstacle(0), 1.0);
    s.drift = [](double, double x) { return -x; };
    s.affine_drift = AffineDrift{0.0, -1.0};
    const auto [g, r] = make_grid(3, 1.5, ReflectionPolicy::all());
    const PathBundle b = exact_simulate(s, g, sample_increments(g, 2, 1, 1));
    EXPECT_NEAR(b.exact(1, 3), 2.0 * std::exp(-1.5), 1e-14);
}

TEST(Exact, NonAffineDriftRejected) {
    ProblemSpec s = build_preset(kPresetPureQuadratic);
    s.affine_drift.reset();
    const auto [g, r] = make_grid(2, 1.0, ReflectionPolicy::all());
    EXPECT_THROW(exact_simulate(s, g, sample_increments(g, 2, 1, 1)), ConfigError);
}

TEST(StrongError, ConstantDriftSinglePath) {
    const ProblemSpec s = custom_spec(0.0, 0.0, 1.0, zero_driver(), testing_support::constant_obstacle(0), 1.0);
    const auto [g, r] = make_grid(2, 1.0, ReflectionPolicy::all());
    PathBundle b = exact_simulate(s, g, sample_increments(g, 1, 1, 1));
    b = euler_simulate(s, g, std::move(b));
    EXPECT_EQ(strong_error_estimate(b, b).mean, 0.0);
}

TEST(StrongError, MismatchedShapes) {
    const ProblemSpec s = build_preset(kPresetMixedQuadratic);
    const auto [g4, r4] = make_grid(4, 1.0, ReflectionPolicy::all());
    const auto [g8, r8] = make_grid(8, 1.0, ReflectionPolicy::all());
    const PathBundle a = exact_simulate(s, g4, sample_increments(g4, 10, 1, 1));
    const PathBundle b = euler_simulate(s, g8, sample_increments(g8, 10, 1, 1));
    EXPECT_THROW(strong_error_estimate(a, b), ConfigError);
}

TEST(StrongError, OrnsteinUhlenbeckRate) {
    // additive noise: the Euler error is drift error only, so E sup|X - X^pi|^2 ~ |pi|^2
    const ProblemSpec s = build_preset(kPresetMixedQuadratic);
    std::vector<double> err;
    for (std::size_t N : {8, 16, 32, 64}) {
        const auto [g, r] = make_grid(N, 1.0, ReflectionPolicy::all());
        PathBundle b = exact_simulate(s, g, sample_increments(g, 20000, 3, 1));
        b = euler_simulate(s, g, std::move(b));
        err.push_back(strong_error_estimate(b, b).mean);
    }
    for (std::size_t k = 1; k < err.size(); ++k) EXPECT_GE(std::log2(err[k - 1] / err[k]), 1.0);
}

TEST(Moments, TerminalVarianceP1) {
    const ProblemSpec s = build_preset(kPresetPureQuadratic);
    const auto [g, r] = make_grid(4, 1.0, ReflectionPolicy::all());
    const std::size_t P = 50000;
    const PathBundle b = euler_simulate(s, g, sample_increments(g, P, 17, 1));
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
        sum += b.euler(p, 4);
        sum2 += b.euler(p, 4) * b.euler(p, 4);
    }
    const double n = static_cast<double>(P);
    const double var = (sum2 - sum * sum / n) / (n - 1.0);
    const double target = 0.09;
    EXPECT_NEAR(var, target, 5.0 * target * std::sqrt(2.0 / (n - 1.0)));
}

TEST(Paths, CsvColumns) {
    const ProblemSpec s = build_preset(kPresetPureQuadratic);
    const auto [g, r] = make_grid(2, 1.0, ReflectionPolicy::all());
    PathBundle b = euler_simulate(s, g, sample_increments(g, 2, 1, 1));
    std::ostringstream out;
    write_paths_csv(out, g, b);
    std::string header;
    std::istringstream in(out.str());
    std::getline(in, header);
    EXPECT_EQ(header, "path,step,t,dW_1,X_euler,X_exact");
    int lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    EXPECT_EQ(lines, 6);
}
