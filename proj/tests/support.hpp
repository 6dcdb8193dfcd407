#pragma once

#include "qrbsde/model.hpp"

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace testing_support {

// Scalar spec with constant drift mu and volatility sigma, built on P1's
// plumbing with f and g replaced.
inline qrbsde::ProblemSpec custom_spec(double x0, double sigma, double mu, qrbsde::GeneratorFn f,
                                       qrbsde::ObstacleFn g, double M_g, double M_f = 0.0) {
    qrbsde::ProblemSpec s = qrbsde::build_preset(qrbsde::kPresetPureQuadratic);
    s.preset = "custom";
    s.overrides.clear();
    s.x0 = x0;
    s.drift = [mu](double, double) { return mu; };
    s.affine_drift = qrbsde::AffineDrift{mu, 0.0};
    s.volatility = [sigma](double) { return std::vector<double>{sigma}; };
    s.generator = std::move(f);
    s.obstacle = std::move(g);
    s.driver_kind = qrbsde::DriverKind::generic;
    s.obstacle_kind = qrbsde::ObstacleKind::custom;
    s.M_g = M_g;
    s.M_f = M_f;
    return s;
}

inline qrbsde::GeneratorFn zero_driver() {
    return [](double, double, double, std::span<const double>) { return 0.0; };
}

inline qrbsde::ObstacleFn constant_obstacle(double c) {
    return [c](double) { return c; };
}

inline double phi(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }
inline double Phi(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

// E[clip(-s G, 0, cap)] in closed form: s (phi(0) - phi(cap/s)) + cap Phi(-cap/s).
inline double clipped_put_mean(double s, double cap) {
    return s * (phi(0.0) - phi(cap / s)) + cap * Phi(-cap / s);
}

}  // namespace testing_support
