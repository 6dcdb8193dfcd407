#include "qrbsde/error.hpp"
#include "qrbsde/regress.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace qrbsde;

TEST(Basis, DegreeZeroIsConstant) {
    const std::vector<double> xs{0.1, 0.5, 2.0};
    const Basis b(BasisSpec::polynomial(0), xs);
    EXPECT_EQ(b.dimension(), 1u);
    EXPECT_EQ(b.features(7.0), std::vector<double>{1.0});
}

TEST(Basis, PiecewiseOneHot) {
    const std::vector<double> xs{0.1, 0.9};
    const Basis b(BasisSpec::piecewise(2, 0.0, 1.0), xs);
    EXPECT_EQ(b.features(0.75), (std::vector<double>{0.0, 1.0}));
    EXPECT_EQ(b.features(-5.0), (std::vector<double>{1.0, 0.0}));
    EXPECT_EQ(b.features(5.0), (std::vector<double>{0.0, 1.0}));
}

TEST(Basis, Standardization) {
    // mean 1, population sd 0.3
    const std::vector<double> xs{0.7, 1.3};
    const Basis b(BasisSpec::polynomial(2), xs);
    EXPECT_NEAR(b.center(), 1.0, 1e-15);
    EXPECT_NEAR(b.scale(), 0.3, 1e-15);
    const auto f = b.features(1.3);
    ASSERT_EQ(f.size(), 3u);
    for (double v : f) EXPECT_NEAR(v, 1.0, 1e-14);
}

TEST(Basis, DegenerateSample) {
    const std::vector<double> xs(10, 2.0);
    EXPECT_THROW(Basis(BasisSpec::polynomial(2), xs), NumericError);
    EXPECT_NO_THROW(Basis(BasisSpec::polynomial(0), xs));
}

TEST(Basis, SpecValidation) {
    EXPECT_THROW(BasisSpec::polynomial(13).validate(), ConfigError);
    EXPECT_THROW(BasisSpec::piecewise(4, 1.0, 0.0).validate(), ConfigError);
    EXPECT_THROW(BasisSpec::polynomial(3, -1.0).validate(), ConfigError);
}

TEST(Fit, ConstantIsMean) {
    const std::vector<double> xs{0.0, 1.0, 2.0}, ys{1.0, 2.0, 3.0};
    const RegressionFit f = fit_least_squares(Basis::constant(), xs, ys, 0.0);
    ASSERT_EQ(f.coefficients.size(), 1u);
    EXPECT_NEAR(f.coefficients[0], 2.0, 1e-15);
}

TEST(Fit, LinearDataInSpan) {
    std::vector<double> xs, ys;
    for (int k = 0; k < 50; ++k) {
        xs.push_back(0.1 * k - 1.0);
        ys.push_back(2.0 * xs.back());
    }
    const RegressionFit f = fit_least_squares(Basis(BasisSpec::polynomial(1), xs), xs, ys, 0.0);
    EXPECT_LE(f.rmse, 1e-10);
    EXPECT_NEAR(evaluate_fit(f, 3.0), 6.0, 1e-9);
}

TEST(Fit, PiecewiseCellMeans) {
    const std::vector<double> xs{0.1, 0.2, 0.3, 0.6, 0.9};
    const std::vector<double> ys{1.0, 2.0, 6.0, 4.0, 5.0};
    const Basis b(BasisSpec::piecewise(2, 0.0, 1.0), xs);
    const RegressionFit f = fit_least_squares(b, xs, ys, 0.0);
    EXPECT_NEAR(evaluate_fit(f, 0.25), 3.0, 1e-15);
    EXPECT_NEAR(evaluate_fit(f, 0.75), 4.5, 1e-15);
}

TEST(Fit, RankDeficiencyAtZeroRidge) {
    // two distinct states cannot determine a cubic
    std::vector<double> xs, ys;
    for (int k = 0; k < 20; ++k) {
        xs.push_back(k % 2 ? 1.0 : 0.0);
        ys.push_back(xs.back());
    }
    const Basis b(BasisSpec::polynomial(3), xs);
    try {
        fit_least_squares(b, xs, ys, 0.0);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("ridge"), std::string::npos);
    }
    EXPECT_NO_THROW(fit_least_squares(b, xs, ys, 1e-8));
}

TEST(Fit, ClampAndRaw) {
    const std::vector<double> xs{0.0, 1.0}, ys{2.0, 2.0};
    const RegressionFit f = fit_least_squares(Basis::constant(), xs, ys, 0.0);
    EXPECT_DOUBLE_EQ(evaluate_fit(f, 0.3, Interval{-0.5, 0.5}), 0.5);
    EXPECT_DOUBLE_EQ(evaluate_fit(f, 0.3), 2.0);
}

namespace {

std::pair<std::vector<double>, std::vector<double>> noisy_sample(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = 1.0 + 0.3 * g(rng);
        ys[i] = std::sin(3.0 * xs[i]) + 0.1 * g(rng);
    }
    return {xs, ys};
}

}  // namespace

TEST(Fit, ProjectionIsIdempotent) {
    auto [xs, ys] = noisy_sample(2000, 1);
    const Basis b(BasisSpec::polynomial(4), xs);
    const RegressionFit f = fit_least_squares(b, xs, ys, 0.0);
    std::vector<double> fitted(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) fitted[i] = evaluate_fit(f, xs[i]);
    const RegressionFit g = fit_least_squares(b, xs, fitted, 0.0);
    for (std::size_t k = 0; k < f.coefficients.size(); ++k)
        EXPECT_NEAR(g.coefficients[k], f.coefficients[k], 1e-10 * (1.0 + std::abs(f.coefficients[k])));
}

TEST(Fit, ClampNeverExceeded) {
    auto [xs, ys] = noisy_sample(500, 2);
    const RegressionFit f = fit_least_squares(Basis(BasisSpec::polynomial(6), xs), xs, ys, 1e-8);
    for (double x = -3.0; x <= 5.0; x += 0.01) {
        const double v = evaluate_fit(f, x, Interval{-0.4, 0.6});
        EXPECT_GE(v, -0.4);
        EXPECT_LE(v, 0.6);
    }
}

TEST(Fit, InvariantUnderReordering) {
    auto [xs, ys] = noisy_sample(3000, 3);
    std::vector<std::size_t> perm(xs.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(99));
    std::vector<double> xp(xs.size()), yp(xs.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        xp[i] = xs[perm[i]];
        yp[i] = ys[perm[i]];
    }
    const RegressionFit a = fit_least_squares(Basis(BasisSpec::polynomial(6), xs), xs, ys, 1e-8);
    const RegressionFit b = fit_least_squares(Basis(BasisSpec::polynomial(6), xp), xp, yp, 1e-8);
    for (double x = 0.2; x <= 1.8; x += 0.1) {
        const double va = evaluate_fit(a, x), vb = evaluate_fit(b, x);
        EXPECT_LE(std::abs(va - vb), 1e-8 * std::max(1.0, std::abs(va)));
    }
}

TEST(Fit, RegressorSharesFactorization) {
    auto [xs, ys] = noisy_sample(1000, 4);
    const Basis b(BasisSpec::polynomial(3), xs);
    const Regressor reg(b, xs, 0.0);
    const RegressionFit f1 = reg.fit(ys);
    const RegressionFit f2 = fit_least_squares(b, xs, ys, 0.0);
    for (std::size_t k = 0; k < f1.coefficients.size(); ++k)
        EXPECT_NEAR(f1.coefficients[k], f2.coefficients[k], 1e-12);
    EXPECT_GE(f1.condition_number, 1.0);
}
