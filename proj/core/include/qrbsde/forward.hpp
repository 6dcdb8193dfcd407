#pragma once

#include "qrbsde/model.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace qrbsde {

/// Uniform partition 0 = t_0 < ... < t_N = T.
struct TimeGrid {
    std::vector<double> times;

    std::size_t steps() const { return times.size() - 1; }
    double horizon() const { return times.back(); }
    double dt(std::size_t i) const { return times[i + 1] - times[i]; }
    double mesh() const;
};

/// Reflection times as a mask over grid indices 0..N. Always contains 0 and N.
struct ReflectionSchedule {
    std::vector<bool> active;

    bool contains(std::size_t i) const { return active[i]; }
    std::vector<std::size_t> indices() const;
    /// kappa: number of reflection intervals.
    std::size_t intervals() const;
    double mesh(const TimeGrid& grid) const;
};

struct ReflectionPolicy {
    enum class Kind { all, every_k, explicit_times };
    Kind kind = Kind::all;
    std::size_t k = 1;
    std::vector<double> times;

    static ReflectionPolicy all() { return {}; }
    static ReflectionPolicy every(std::size_t k) { return {Kind::every_k, k, {}}; }
    static ReflectionPolicy at(std::vector<double> times) { return {Kind::explicit_times, 1, std::move(times)}; }
};

TimeGrid uniform_grid(std::size_t N, double T);

/// Uniform grid plus reflection schedule. Errors: N == 0, k > N, explicit time off the grid.
std::pair<TimeGrid, ReflectionSchedule> make_grid(std::size_t N, double T, const ReflectionPolicy& policy);

/// Brownian increments and forward states on a grid, path-major.
struct PathBundle {
    std::size_t paths = 0;
    std::size_t steps = 0;
    std::size_t dim = 1;
    std::uint64_t seed = 0;

    std::vector<double> dW;       // [p][i][k], i < steps
    std::vector<double> x_euler;  // [p][i], i <= steps; empty until simulated
    std::vector<double> x_exact;  // [p][i], i <= steps; empty unless exact simulation ran

    std::span<const double> increments(std::size_t p, std::size_t i) const {
        return {dW.data() + (p * steps + i) * dim, dim};
    }
    double increment(std::size_t p, std::size_t i, std::size_t k) const { return dW[(p * steps + i) * dim + k]; }
    double euler(std::size_t p, std::size_t i) const { return x_euler[p * (steps + 1) + i]; }
    double exact(std::size_t p, std::size_t i) const { return x_exact[p * (steps + 1) + i]; }

    bool has_euler() const { return !x_euler.empty(); }
    bool has_exact() const { return !x_exact.empty(); }

    /// The first `count` paths. Counter-based sampling makes this identical
    /// to sampling `count` paths directly with the same seed.
    PathBundle head(std::size_t count) const;

    /// FNV-1a over the increment bytes.
    std::uint64_t checksum() const;
};

/// dW[p][i][k] = sqrt(dt_i) * N(0,1) keyed on (seed, p, i, k).
PathBundle sample_increments(const TimeGrid& grid, std::size_t paths, std::uint64_t seed, std::size_t dim);

/// X^pi_{i+1} = X^pi_i + b(t_i, X^pi_i) dt_i + sigma(t_i) . dW_i.
PathBundle euler_simulate(const ProblemSpec& spec, const TimeGrid& grid, PathBundle bundle);

/// Exact grid-time samples of the SDE for affine drift and time-constant sigma,
/// driven by the same increments (conditional on dW, the remaining Gaussian
/// part of the exact transition uses an independent stream).
PathBundle exact_simulate(const ProblemSpec& spec, const TimeGrid& grid, PathBundle bundle);

struct MomentEstimate {
    double mean = 0.0;
    double se = 0.0;
};

/// Monte Carlo estimate of E[max_i |a_{p,i} - b_{p,i}|^power] over rows of
/// length `points`.
MomentEstimate sup_power_moment(std::span<const double> a, std::span<const double> b, std::size_t points,
                                double power);

/// E[sup_i |X_{t_i} - X^pi_{t_i}|^2] from `exact.x_exact` and `euler.x_euler`.
MomentEstimate strong_error_estimate(const PathBundle& exact, const PathBundle& euler);

/// Columns: path, step, t, dW_1..dW_m, X_euler, X_exact.
void write_paths_csv(std::ostream& out, const TimeGrid& grid, const PathBundle& bundle);

}  // namespace qrbsde
