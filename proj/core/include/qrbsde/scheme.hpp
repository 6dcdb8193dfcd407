#pragma once

#include "qrbsde/forward.hpp"
#include "qrbsde/model.hpp"
#include "qrbsde/regress.hpp"

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace qrbsde {

inline constexpr double kPicardTolerance = 1e-12;
inline constexpr int kPicardMaxIterations = 50;

struct PicardResult {
    double value = 0.0;
    int iterations = 0;
};

/// Fixed point of y = e + dt * driver(y) by Picard iteration from y = e.
/// `iterations` counts updates up to the accepted iterate (1 for a y-free driver).
PicardResult solve_implicit(double e, double dt, const std::function<double(double)>& driver);

struct ZProjection {
    std::vector<double> values;  // [p][k]
    std::vector<RegressionFit> fits;
};

/// Regress y_next * dW_k / dt on the basis for each component k and evaluate
/// per path. `dW` is path-major [p][k]. When `control` is non-empty it is
/// subtracted from y_next first (a function of the current state, so the
/// conditional mean of the product is unchanged).
ZProjection z_projection_step(const Regressor& regressor, std::span<const double> xs, std::span<const double> y_next,
                              std::span<const double> dW, std::size_t dim, double dt, std::optional<Interval> clamp,
                              std::span<const double> control = {});

struct ImplicitStep {
    std::vector<double> values;
    std::vector<int> iterations;
};

/// Per path: y = e + dt f(t, x, y, z) with `spec`'s generator (already truncated
/// by the caller), then clamped to [-M, M].
ImplicitStep implicit_y_step(std::span<const double> e, std::span<const double> z, std::size_t dim,
                             const ProblemSpec& spec, double t, std::span<const double> xs, double dt, double M);

struct ReflectionStep {
    std::vector<double> values;
    std::vector<double> dk;
};

/// Y = max(y_tilde, g) at reflection times, y_tilde otherwise; dK = Y - y_tilde.
ReflectionStep reflect_step(std::span<const double> y_tilde, std::span<const double> obstacle, bool reflection_time);

enum class StateSource { euler, exact };

struct SolveOptions {
    StateSource states = StateSource::euler;
    bool z_control_variate = false;
};

struct StepDiagnostics {
    double y_condition = 1.0;
    double y_rmse = 0.0;
    double z_condition = 1.0;
    double z_rmse = 0.0;
    double max_abs_z = 0.0;
    double mean_dk = 0.0;
    std::size_t reflected_paths = 0;
};

struct SchemeSolution {
    std::size_t paths = 0;
    std::size_t steps = 0;
    std::size_t dim = 1;

    std::vector<double> x;        // [p][i], i <= N: states the scheme ran on
    std::vector<double> y_bar;    // [p][i], i <= N
    std::vector<double> y_tilde;  // [p][i], i <= N
    std::vector<double> z_bar;    // [p][i][k], i < N
    std::vector<double> dk;       // [p][i], i <= N

    std::vector<RegressionFit> y_fits;               // per step i < N
    std::vector<std::vector<RegressionFit>> z_fits;  // per step, per component
    std::vector<StepDiagnostics> diagnostics;        // per step i < N
    std::map<int, std::size_t> picard_histogram;

    double y0 = 0.0;       // fitted value at x0
    double y0_mean = 0.0;  // cross-path mean of Y_bar at t_0
    double y0_se = 0.0;
    TruncationRadius radius;
    double y_bound = 0.0;

    double state(std::size_t p, std::size_t i) const { return x[p * (steps + 1) + i]; }
    double y(std::size_t p, std::size_t i) const { return y_bar[p * (steps + 1) + i]; }
    double ytilde(std::size_t p, std::size_t i) const { return y_tilde[p * (steps + 1) + i]; }
    double z(std::size_t p, std::size_t i, std::size_t k) const { return z_bar[(p * steps + i) * dim + k]; }
    double z_norm(std::size_t p, std::size_t i) const;
    double dK(std::size_t p, std::size_t i) const { return dk[p * (steps + 1) + i]; }
    double k_total(std::size_t p) const;
    double max_abs_z() const;
};

/// Truncated backward scheme
///   Z_i = E_i[Y_{i+1} dW_i] / dt_i
///   Ytilde_i = E_i[Y_{i+1}] + dt_i f(t_i, X_i, Ytilde_i, h_{M_z}(Z_i))
///   Y_i = Ytilde_i + [g(X_i) - Ytilde_i]^+ 1{t_i in R}
/// from Y_N = g(X_N), with E_i estimated by cross-sectional regression.
SchemeSolution solve_backward(const ProblemSpec& spec, const TimeGrid& grid, const ReflectionSchedule& schedule,
                              const PathBundle& bundle, const BasisSpec& basis, const TruncationRadius& radius,
                              const SolveOptions& options = {});

/// Pilot run on a tenth of the paths with radius 1e9; M_z = max(0.1, 2 * max_i q_{0.999}|Z_i|).
TruncationRadius estimate_Mz_auto(const ProblemSpec& spec, const TimeGrid& grid, const ReflectionSchedule& schedule,
                                  const PathBundle& bundle, const BasisSpec& basis, const SolveOptions& options = {});

/// The user's radius when given, otherwise estimate_Mz_auto.
TruncationRadius resolve_radius(std::optional<double> user_value, const ProblemSpec& spec, const TimeGrid& grid,
                                const ReflectionSchedule& schedule, const PathBundle& bundle, const BasisSpec& basis,
                                const SolveOptions& options = {});

/// Checks the preconditions: N |pi| <= L and L |pi| < 1. Throws ConfigError.
void check_scheme_preconditions(const ProblemSpec& spec, const TimeGrid& grid);

struct SkorokhodCheck {
    bool nonnegative = true;         // dK >= 0
    bool zero_off_schedule = true;   // dK = 0 off R
    bool above_obstacle = true;      // Y >= g(X) on R
    bool complementary = true;       // dK (Y - g(X)) = 0 on R
    std::size_t violations = 0;

    bool passed() const { return nonnegative && zero_off_schedule && above_obstacle && complementary; }
};

/// Exact (zero-tolerance) discrete Skorokhod conditions on every path and step.
SkorokhodCheck check_skorokhod(const SchemeSolution& solution, const ProblemSpec& spec,
                               const ReflectionSchedule& schedule);

}  // namespace qrbsde
