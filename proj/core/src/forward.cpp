#include "qrbsde/forward.hpp"

#include "qrbsde/error.hpp"
#include "qrbsde/parallel.hpp"
#include "qrbsde/philox.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <ostream>
#include <sstream>

namespace qrbsde {

double TimeGrid::mesh() const {
    double h = 0.0;
    for (std::size_t i = 0; i + 1 < times.size(); ++i) h = std::max(h, dt(i));
    return h;
}

std::vector<std::size_t> ReflectionSchedule::indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < active.size(); ++i)
        if (active[i]) out.push_back(i);
    return out;
}

std::size_t ReflectionSchedule::intervals() const { return indices().size() - 1; }

double ReflectionSchedule::mesh(const TimeGrid& grid) const {
    const auto idx = indices();
    double h = 0.0;
    for (std::size_t j = 0; j + 1 < idx.size(); ++j) h = std::max(h, grid.times[idx[j + 1]] - grid.times[idx[j]]);
    return h;
}

TimeGrid uniform_grid(std::size_t N, double T) {
    if (N == 0) throw ConfigError("grid needs at least one step");
    if (!(T > 0.0)) throw ConfigError("horizon T must be positive");
    TimeGrid g;
    g.times.resize(N + 1);
    for (std::size_t i = 0; i <= N; ++i) g.times[i] = T * static_cast<double>(i) / static_cast<double>(N);
    g.times[N] = T;
    return g;
}

std::pair<TimeGrid, ReflectionSchedule> make_grid(std::size_t N, double T, const ReflectionPolicy& policy) {
    TimeGrid grid = uniform_grid(N, T);
    ReflectionSchedule schedule;
    schedule.active.assign(N + 1, false);
    switch (policy.kind) {
    case ReflectionPolicy::Kind::all:
        schedule.active.assign(N + 1, true);
        break;
    case ReflectionPolicy::Kind::every_k:
        if (policy.k == 0 || policy.k > N) throw ConfigError("reflection stride k must be in [1, N]");
        for (std::size_t i = 0; i <= N; i += policy.k) schedule.active[i] = true;
        break;
    case ReflectionPolicy::Kind::explicit_times:
        for (double t : policy.times) {
            const double pos = t / T * static_cast<double>(N);
            const double idx = std::round(pos);
            if (idx < 0.0 || idx > static_cast<double>(N) || std::abs(pos - idx) > 1e-9) {
                std::ostringstream msg;
                msg << "reflection time " << t << " is not on the grid";
                throw ConfigError(msg.str());
            }
            schedule.active[static_cast<std::size_t>(idx)] = true;
        }
        break;
    }
    schedule.active.front() = true;
    schedule.active.back() = true;
    return {std::move(grid), std::move(schedule)};
}

PathBundle PathBundle::head(std::size_t count) const {
    count = std::min(count, paths);
    PathBundle out;
    out.paths = count;
    out.steps = steps;
    out.dim = dim;
    out.seed = seed;
    out.dW.assign(dW.begin(), dW.begin() + static_cast<std::ptrdiff_t>(count * steps * dim));
    if (has_euler())
        out.x_euler.assign(x_euler.begin(), x_euler.begin() + static_cast<std::ptrdiff_t>(count * (steps + 1)));
    if (has_exact())
        out.x_exact.assign(x_exact.begin(), x_exact.begin() + static_cast<std::ptrdiff_t>(count * (steps + 1)));
    return out;
}

std::uint64_t PathBundle::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (double v : dW) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xffu;
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

PathBundle sample_increments(const TimeGrid& grid, std::size_t paths, std::uint64_t seed, std::size_t dim) {
    if (paths == 0) throw ConfigError("path count must be positive");
    if (dim == 0) throw ConfigError("Brownian dimension must be positive");
    PathBundle b;
    b.paths = paths;
    b.steps = grid.steps();
    b.dim = dim;
    b.seed = seed;
    b.dW.resize(paths * b.steps * dim);
    const std::size_t N = b.steps;
    std::vector<double> sqrt_dt(N);
    for (std::size_t i = 0; i < N; ++i) sqrt_dt[i] = std::sqrt(grid.dt(i));
    parallel_for(paths, [&](std::size_t p) {
        double* row = b.dW.data() + p * N * dim;
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t k = 0; k < dim; k += 2) {
                const auto [z0, z1] = normal_pair(seed, p, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(k / 2));
                row[i * dim + k] = sqrt_dt[i] * z0;
                if (k + 1 < dim) row[i * dim + k + 1] = sqrt_dt[i] * z1;
            }
        }
    });
    return b;
}

namespace {

void check_bundle(const TimeGrid& grid, const PathBundle& bundle, const ProblemSpec& spec) {
    if (bundle.steps != grid.steps()) throw ConfigError("path bundle and time grid disagree on step count");
    if (bundle.dim != spec.m) throw ConfigError("path bundle dimension differs from the problem's m");
    if (bundle.dW.size() != bundle.paths * bundle.steps * bundle.dim) throw ConfigError("path bundle has no increments");
}

[[noreturn]] void non_finite(std::size_t p, std::size_t i) {
    std::ostringstream msg;
    msg << "non-finite forward state at path " << p << ", step " << i;
    throw NumericError(msg.str());
}

}  // namespace

PathBundle euler_simulate(const ProblemSpec& spec, const TimeGrid& grid, PathBundle bundle) {
    check_bundle(grid, bundle, spec);
    const std::size_t N = bundle.steps;
    const std::size_t m = bundle.dim;
    std::vector<std::vector<double>> vol(N);
    for (std::size_t i = 0; i < N; ++i) vol[i] = spec.sigma(grid.times[i]);

    bundle.x_euler.assign(bundle.paths * (N + 1), 0.0);
    std::vector<int> bad(bundle.paths, -1);
    parallel_for(bundle.paths, [&](std::size_t p) {
        double* x = bundle.x_euler.data() + p * (N + 1);
        x[0] = spec.x0;
        for (std::size_t i = 0; i < N; ++i) {
            double noise = 0.0;
            for (std::size_t k = 0; k < m; ++k) noise += vol[i][k] * bundle.increment(p, i, k);
            x[i + 1] = x[i] + spec.b(grid.times[i], x[i]) * grid.dt(i) + noise;
            if (!std::isfinite(x[i + 1]) && bad[p] < 0) bad[p] = static_cast<int>(i + 1);
        }
    });
    for (std::size_t p = 0; p < bundle.paths; ++p)
        if (bad[p] >= 0) non_finite(p, static_cast<std::size_t>(bad[p]));
    return bundle;
}

PathBundle exact_simulate(const ProblemSpec& spec, const TimeGrid& grid, PathBundle bundle) {
    check_bundle(grid, bundle, spec);
    if (!spec.affine_drift) throw ConfigError("exact simulation requires an affine drift");
    const std::size_t N = bundle.steps;
    const std::size_t m = bundle.dim;
    const std::vector<double> vol = spec.sigma(grid.times[0]);
    for (std::size_t i = 1; i <= N; ++i)
        if (spec.sigma(grid.times[i]) != vol) throw ConfigError("exact simulation requires a time-constant sigma");
    const double a = spec.affine_drift->level;
    const double c = spec.affine_drift->slope;

    // Per-step transition: X' = X e + (a/c)(e - 1) + sum_k sigma_k I_k, where
    // I_k = int e^{c(dt-u)} dW_k(u) = beta dW_k + s xi_k given dW_k.
    struct Step {
        double growth, shift, beta, resid_sd;
    };
    std::vector<Step> steps(N);
    for (std::size_t i = 0; i < N; ++i) {
        const double dt = grid.dt(i);
        if (c == 0.0) {
            steps[i] = {1.0, a * dt, 1.0, 0.0};
        } else {
            const double e = std::exp(c * dt);
            const double cov = std::expm1(c * dt) / c;
            const double var = std::expm1(2.0 * c * dt) / (2.0 * c);
            const double resid = std::max(0.0, var - cov * cov / dt);
            steps[i] = {e, a / c * std::expm1(c * dt), cov / dt, std::sqrt(resid)};
        }
    }

    bundle.x_exact.assign(bundle.paths * (N + 1), 0.0);
    std::vector<int> bad(bundle.paths, -1);
    parallel_for(bundle.paths, [&](std::size_t p) {
        double* x = bundle.x_exact.data() + p * (N + 1);
        x[0] = spec.x0;
        for (std::size_t i = 0; i < N; ++i) {
            const Step& s = steps[i];
            double noise = 0.0;
            if (c == 0.0) {
                for (std::size_t k = 0; k < m; ++k) noise += vol[k] * bundle.increment(p, i, k);
                x[i + 1] = x[i] + s.shift + noise;
            } else {
                for (std::size_t k = 0; k < m; ++k) {
                    const double xi = standard_normal(bundle.seed, p, static_cast<std::uint32_t>(i),
                                                      static_cast<std::uint32_t>(m + k + (m % 2)));
                    noise += vol[k] * (s.beta * bundle.increment(p, i, k) + s.resid_sd * xi);
                }
                x[i + 1] = x[i] * s.growth + s.shift + noise;
            }
            if (!std::isfinite(x[i + 1]) && bad[p] < 0) bad[p] = static_cast<int>(i + 1);
        }
    });
    for (std::size_t p = 0; p < bundle.paths; ++p)
        if (bad[p] >= 0) non_finite(p, static_cast<std::size_t>(bad[p]));
    return bundle;
}

MomentEstimate sup_power_moment(std::span<const double> a, std::span<const double> b, std::size_t points,
                                double power) {
    if (a.size() != b.size() || points == 0 || a.size() % points != 0)
        throw ConfigError("state arrays have mismatched shapes");
    const std::size_t paths = a.size() / points;
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t p = 0; p < paths; ++p) {
        double sup = 0.0;
        for (std::size_t i = 0; i < points; ++i) sup = std::max(sup, std::abs(a[p * points + i] - b[p * points + i]));
        const double v = std::pow(sup, power);
        sum += v;
        sum2 += v * v;
    }
    const double n = static_cast<double>(paths);
    const double mean = sum / n;
    const double var = paths > 1 ? std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0)) : 0.0;
    return {mean, std::sqrt(var / n)};
}

MomentEstimate strong_error_estimate(const PathBundle& exact, const PathBundle& euler) {
    if (!exact.has_exact() || !euler.has_euler()) throw ConfigError("strong error needs exact and Euler states");
    if (exact.paths != euler.paths || exact.steps != euler.steps || exact.seed != euler.seed)
        throw ConfigError("bundles have mismatched shapes or seeds");
    return sup_power_moment(exact.x_exact, euler.x_euler, exact.steps + 1, 2.0);
}

void write_paths_csv(std::ostream& out, const TimeGrid& grid, const PathBundle& bundle) {
    out << "path,step,t";
    for (std::size_t k = 0; k < bundle.dim; ++k) out << ",dW_" << (k + 1);
    out << ",X_euler,X_exact\n";
    out.precision(17);
    for (std::size_t p = 0; p < bundle.paths; ++p) {
        for (std::size_t i = 0; i <= bundle.steps; ++i) {
            out << p << ',' << i << ',' << grid.times[i];
            for (std::size_t k = 0; k < bundle.dim; ++k) {
                out << ',';
                if (i < bundle.steps) out << bundle.increment(p, i, k);
            }
            out << ',';
            if (bundle.has_euler()) out << bundle.euler(p, i);
            out << ',';
            if (bundle.has_exact()) out << bundle.exact(p, i);
            out << '\n';
        }
    }
}

}  // namespace qrbsde
