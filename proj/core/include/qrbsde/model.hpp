#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace qrbsde {

// Coefficients of the forward/backward system
//
//   X_t = x0 + int_0^t b(s, X_s) ds + int_0^t sigma(s) dW_s
//   Y_t = g(X_T) + int_t^T f(s, X_s, Y_s, Z_s) ds - int_t^T Z_s dW_s + K_T - K_t,
//   Y_t >= g(X_t),  int (Y_t - g(X_t)) dK_t = 0.
//
// sigma depends on time only; the interface has no x slot for it.
using DriftFn = std::function<double(double t, double x)>;
using VolatilityFn = std::function<std::vector<double>(double t)>;
using GeneratorFn = std::function<double(double t, double x, double y, std::span<const double> z)>;
using ObstacleFn = std::function<double(double x)>;

/// b(t, x) = level + slope * x with constant coefficients.
struct AffineDrift {
    double level = 0.0;
    double slope = 0.0;
};

enum class DriverKind {
    pure_quadratic,  // f = (alpha / 2) |z|^2 exactly
    generic,
};

enum class ObstacleKind {
    clip,       // clip(strike - x, 0, M_g)
    soft_clip,  // smooth version, log-sum-exp with sharpness 20
    custom,
};

using OverrideValue = std::variant<double, std::string>;
using Overrides = std::map<std::string, OverrideValue>;

/// Lipschitz constants of f_n = f(., ., ., h_n(.)) in (x, y, z).
struct TruncatedLipschitz {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

struct ProblemSpec {
    std::string preset;
    Overrides overrides;

    DriftFn drift;
    VolatilityFn volatility;
    GeneratorFn generator;
    ObstacleFn obstacle;

    std::optional<AffineDrift> affine_drift;
    DriverKind driver_kind = DriverKind::generic;
    ObstacleKind obstacle_kind = ObstacleKind::custom;

    double L = 1.0;
    double M_f = 0.0;
    double M_g = 0.0;
    double alpha = 1.0;
    double T = 1.0;
    double x0 = 0.0;
    std::size_t m = 1;

    // Set by truncate_generator. base_generator is the untruncated f.
    std::optional<double> truncation_radius;
    GeneratorFn base_generator;
    std::optional<TruncatedLipschitz> truncated_lipschitz;

    double b(double t, double x) const { return drift(t, x); }
    std::vector<double> sigma(double t) const { return volatility(t); }
    double f(double t, double x, double y, std::span<const double> z) const { return generator(t, x, y, z); }
    double g(double x) const { return obstacle(x); }
};

/// Throws ConfigError when a constant violates T > 0, L > 0, alpha > 0, M_g >= 0, M_f >= 0, m >= 1.
void check_constants(const ProblemSpec& spec);

inline constexpr const char* kPresetPureQuadratic = "P1-pure-quadratic";
inline constexpr const char* kPresetMixedQuadratic = "P2-mixed-quadratic";
inline constexpr const char* kPresetLipschitz = "P3-lipschitz";

std::vector<std::string> preset_names();

/// Instantiate a catalog preset. Known override keys: T, x0, L, M_f, M_g,
/// alpha, sigma, m, strike, drift_shift, obstacle ("clip" | "soft-clip").
ProblemSpec build_preset(const std::string& name, const Overrides& overrides = {});

/// Rebuild a spec from its preset and recorded overrides plus `extra`
/// (later keys win). Used to derive perturbed legs of an experiment.
ProblemSpec with_overrides(const ProblemSpec& spec, const Overrides& extra);

struct YBound {
    double M = 0.0;
};

/// M = exp(M_f T) (M_g + M_f T).
YBound y_bound(const ProblemSpec& spec);

enum class RadiusProvenance { user_supplied, auto_estimated };

struct TruncationRadius {
    double value = 0.0;
    RadiusProvenance provenance = RadiusProvenance::user_supplied;

    static TruncationRadius user(double value);
};

/// Radial profile of the truncation: rho(r) = n + 1 - exp(-(r - n)) for r > n.
double truncation_profile(double r, double n);

/// h_n(z): identity on |z| <= n, radially compressed outside with |h_n(z)| < n + 1.
std::vector<double> smooth_truncation(std::span<const double> z, double n);
void smooth_truncation_inplace(std::span<double> z, double n);
double smooth_truncation(double z, double n);

/// f_{M_z}(t, x, y, z) = f(t, x, y, h_{M_z}(z)). Always composes with the
/// untruncated generator, so re-truncating with the same radius is a no-op.
ProblemSpec truncate_generator(const ProblemSpec& spec, const TruncationRadius& radius);

// ---------------------------------------------------------------------------
// Assumption checking on a quasi-random sample cloud.

struct SampleCloud {
    std::size_t points = 4096;
    double x_lo = -4.0;
    double x_hi = 6.0;
    double y_abs = 2.0;
    double z_abs = 5.0;
    // t always covers [0, T].
};

/// Default cloud: x in x0 +- 5, y in +-(M + 1), z in +-5.
SampleCloud default_cloud(const ProblemSpec& spec, std::size_t points = 4096);

struct Witness {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    // second point of a pair (equal to the first for one-point checks)
    double t2 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;
    double z2 = 0.0;
};

struct InequalityCheck {
    std::string assumption;  // HX, HF, HT, H1, H2
    std::string name;
    double worst_ratio = 0.0;
    bool passed = true;
    Witness witness;
};

struct AssumptionReport {
    std::vector<InequalityCheck> checks;
    std::map<std::string, bool> passed;  // per assumption
    std::size_t cloud_points = 0;
    SampleCloud cloud;

    bool holds(const std::string& assumption) const;
    const InequalityCheck& check(const std::string& name) const;
};

inline constexpr double kAssumptionSlack = 1e-6;

AssumptionReport validate_assumptions(const ProblemSpec& spec, const SampleCloud& cloud);

}  // namespace qrbsde
