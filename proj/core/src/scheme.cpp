#include "qrbsde/scheme.hpp"

#include "qrbsde/error.hpp"
#include "qrbsde/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qrbsde {

PicardResult solve_implicit(double e, double dt, const std::function<double(double)>& driver) {
    double y = e;
    for (int k = 1; k <= kPicardMaxIterations; ++k) {
        const double fy = driver(y);
        if (!std::isfinite(fy)) throw NumericError("non-finite generator value in the implicit step");
        const double next = e + dt * fy;
        if (std::abs(next - y) <= kPicardTolerance) return {next, std::max(1, k - 1)};
        y = next;
    }
    throw NumericError("Picard iteration did not converge in 50 iterations (is L * dt < 1?)");
}

ZProjection z_projection_step(const Regressor& regressor, std::span<const double> xs, std::span<const double> y_next,
                              std::span<const double> dW, std::size_t dim, double dt, std::optional<Interval> clamp,
                              std::span<const double> control) {
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");
    const std::size_t n = y_next.size();
    if (dW.size() != n * dim || xs.size() != n) throw ConfigError("Z projection inputs have mismatched shapes");
    ZProjection out;
    out.values.assign(n * dim, 0.0);
    std::vector<double> target(n);
    for (std::size_t k = 0; k < dim; ++k) {
        for (std::size_t p = 0; p < n; ++p) {
            const double y = control.empty() ? y_next[p] : y_next[p] - control[p];
            target[p] = y * dW[p * dim + k] / dt;
            if (!std::isfinite(target[p])) throw NumericError("non-finite value entering the Z projection");
        }
        out.fits.push_back(regressor.fit(target));
        const RegressionFit& fit = out.fits.back();
        parallel_for(n, [&](std::size_t p) { out.values[p * dim + k] = evaluate_fit(fit, xs[p], clamp); });
    }
    return out;
}

ImplicitStep implicit_y_step(std::span<const double> e, std::span<const double> z, std::size_t dim,
                             const ProblemSpec& spec, double t, std::span<const double> xs, double dt, double M) {
    const std::size_t n = e.size();
    ImplicitStep out;
    out.values.resize(n);
    out.iterations.resize(n);
    std::vector<int> failed(n, 0);
    parallel_for(n, [&](std::size_t p) {
        const std::span<const double> zp = z.subspan(p * dim, dim);
        const double x = xs[p];
        try {
            const PicardResult r = solve_implicit(e[p], dt, [&](double y) { return spec.f(t, x, y, zp); });
            out.values[p] = std::clamp(r.value, -M, M);
            out.iterations[p] = r.iterations;
        } catch (const NumericError&) {
            failed[p] = 1;
        }
    });
    for (std::size_t p = 0; p < n; ++p) {
        if (failed[p]) {
            std::ostringstream msg;
            msg << "implicit step failed at path " << p << " (Picard non-convergence or non-finite generator)";
            throw NumericError(msg.str());
        }
    }
    return out;
}

ReflectionStep reflect_step(std::span<const double> y_tilde, std::span<const double> obstacle, bool reflection_time) {
    const std::size_t n = y_tilde.size();
    ReflectionStep out;
    out.values.assign(y_tilde.begin(), y_tilde.end());
    out.dk.assign(n, 0.0);
    if (!reflection_time) return out;
    for (std::size_t p = 0; p < n; ++p) {
        if (obstacle[p] > y_tilde[p]) {
            out.values[p] = obstacle[p];
            out.dk[p] = obstacle[p] - y_tilde[p];
        }
    }
    return out;
}

double SchemeSolution::z_norm(std::size_t p, std::size_t i) const {
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) s += z(p, i, k) * z(p, i, k);
    return std::sqrt(s);
}

double SchemeSolution::k_total(std::size_t p) const {
    double s = 0.0;
    for (std::size_t i = 0; i <= steps; ++i) s += dK(p, i);
    return s;
}

double SchemeSolution::max_abs_z() const {
    double m = 0.0;
    for (double v : z_bar) m = std::max(m, std::abs(v));
    return m;
}

void check_scheme_preconditions(const ProblemSpec& spec, const TimeGrid& grid) {
    const double mesh = grid.mesh();
    const double N = static_cast<double>(grid.steps());
    if (N * mesh > spec.L * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "N |pi| = " << N * mesh << " exceeds L = " << spec.L;
        throw ConfigError(msg.str());
    }
    if (spec.L * mesh >= 1.0) {
        std::ostringstream msg;
        msg << "L * dt = " << spec.L * mesh << " >= 1: the implicit y-step is not a contraction";
        throw ConfigError(msg.str());
    }
}

SchemeSolution solve_backward(const ProblemSpec& spec, const TimeGrid& grid, const ReflectionSchedule& schedule,
                              const PathBundle& bundle, const BasisSpec& basis, const TruncationRadius& radius,
                              const SolveOptions& options) {
    check_scheme_preconditions(spec, grid);
    basis.validate();
    if (schedule.active.size() != grid.times.size()) throw ConfigError("reflection schedule does not match the grid");
    if (bundle.steps != grid.steps() || bundle.dim != spec.m) throw ConfigError("path bundle does not match the grid");
    const bool exact = options.states == StateSource::exact;
    if (exact ? !bundle.has_exact() : !bundle.has_euler())
        throw ConfigError(exact ? "bundle has no exact states" : "bundle has no Euler states");

    const ProblemSpec truncated = truncate_generator(spec, radius);
    const std::size_t P = bundle.paths;
    const std::size_t N = grid.steps();
    const std::size_t m = bundle.dim;
    const double M = y_bound(spec).M;
    const Interval y_clamp{-M, M};
    const Interval z_clamp{-radius.value - 1.0, radius.value + 1.0};

    SchemeSolution sol;
    sol.paths = P;
    sol.steps = N;
    sol.dim = m;
    sol.radius = radius;
    sol.y_bound = M;
    sol.x = exact ? bundle.x_exact : bundle.x_euler;
    sol.y_bar.assign(P * (N + 1), 0.0);
    sol.y_tilde.assign(P * (N + 1), 0.0);
    sol.z_bar.assign(P * N * m, 0.0);
    sol.dk.assign(P * (N + 1), 0.0);
    sol.y_fits.resize(N);
    sol.z_fits.resize(N);
    sol.diagnostics.resize(N);

    const std::size_t stride = N + 1;
    for (std::size_t p = 0; p < P; ++p) {
        const double gT = spec.g(sol.x[p * stride + N]);
        sol.y_bar[p * stride + N] = gT;
        sol.y_tilde[p * stride + N] = gT;
    }

    std::vector<double> xs(P), y_next(P), dW(P * m), e(P), obstacle(P);
    for (std::size_t step = N; step-- > 0;) {
        const double t = grid.times[step];
        const double dt = grid.dt(step);
        for (std::size_t p = 0; p < P; ++p) {
            xs[p] = sol.x[p * stride + step];
            y_next[p] = sol.y_bar[p * stride + step + 1];
            for (std::size_t k = 0; k < m; ++k) dW[p * m + k] = bundle.increment(p, step, k);
        }

        const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
        const bool deterministic = step == 0 || *lo == *hi;
        Basis phi = deterministic ? Basis::constant() : Basis(basis, xs);
        const Regressor reg(std::move(phi), xs, deterministic ? 0.0 : basis.ridge);

        RegressionFit y_fit = reg.fit(y_next);
        y_fit.clamp = y_clamp;
        parallel_for(P, [&](std::size_t p) { e[p] = evaluate_fit(y_fit, xs[p], y_clamp); });

        ZProjection zp = z_projection_step(reg, xs, y_next, dW, m, dt, z_clamp,
                                           options.z_control_variate ? std::span<const double>(e) : std::span<const double>());
        for (auto& f : zp.fits) f.clamp = z_clamp;

        const ImplicitStep ys = implicit_y_step(e, zp.values, m, truncated, t, xs, dt, M);
        for (std::size_t p = 0; p < P; ++p) obstacle[p] = spec.g(xs[p]);
        const ReflectionStep refl = reflect_step(ys.values, obstacle, schedule.contains(step));

        StepDiagnostics& diag = sol.diagnostics[step];
        diag.y_condition = y_fit.condition_number;
        diag.y_rmse = y_fit.rmse;
        for (const auto& f : zp.fits) {
            diag.z_condition = std::max(diag.z_condition, f.condition_number);
            diag.z_rmse = std::max(diag.z_rmse, f.rmse);
        }
        double dk_sum = 0.0;
        for (std::size_t p = 0; p < P; ++p) {
            sol.y_tilde[p * stride + step] = ys.values[p];
            sol.y_bar[p * stride + step] = refl.values[p];
            sol.dk[p * stride + step] = refl.dk[p];
            dk_sum += refl.dk[p];
            if (refl.dk[p] > 0.0) ++diag.reflected_paths;
            double zn = 0.0;
            for (std::size_t k = 0; k < m; ++k) {
                const double v = zp.values[p * m + k];
                sol.z_bar[(p * N + step) * m + k] = v;
                zn += v * v;
            }
            diag.max_abs_z = std::max(diag.max_abs_z, std::sqrt(zn));
            ++sol.picard_histogram[ys.iterations[p]];
        }
        diag.mean_dk = dk_sum / static_cast<double>(P);
        sol.y_fits[step] = std::move(y_fit);
        sol.z_fits[step] = std::move(zp.fits);
    }

    // Y0: X_0 = x0 on every path, so the step-0 regression is the sample mean.
    sol.y0 = sol.y_bar[0];
    double sum = 0.0, s1 = 0.0, s2 = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
        sum += sol.y_bar[p * stride];
        const double v = sol.y_bar[p * stride + 1];
        s1 += v;
        s2 += v * v;
    }
    const double n = static_cast<double>(P);
    sol.y0_mean = sum / n;
    const double mean1 = s1 / n;
    const double var1 = P > 1 ? std::max(0.0, (s2 - n * mean1 * mean1) / (n - 1.0)) : 0.0;
    sol.y0_se = std::sqrt(var1 / n);
    return sol;
}

namespace {

double quantile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
    const auto k = std::min(idx, v.size() - 1);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
}

}  // namespace

TruncationRadius estimate_Mz_auto(const ProblemSpec& spec, const TimeGrid& grid, const ReflectionSchedule& schedule,
                                  const PathBundle& bundle, const BasisSpec& basis, const SolveOptions& options) {
    const std::size_t want = std::max(bundle.paths / 10, std::min(bundle.paths, 20 * basis.dimension()));
    const PathBundle pilot = bundle.head(want);
    SchemeSolution sol;
    try {
        sol = solve_backward(spec, grid, schedule, pilot, basis, TruncationRadius{1e9, RadiusProvenance::auto_estimated},
                             options);
    } catch (const Error& e) {
        throw NumericError(std::string("M_z pilot run failed: ") + e.what());
    }
    double worst = 0.0;
    std::vector<double> norms(sol.paths);
    for (std::size_t i = 0; i < sol.steps; ++i) {
        for (std::size_t p = 0; p < sol.paths; ++p) norms[p] = sol.z_norm(p, i);
        worst = std::max(worst, quantile(norms, 0.999));
    }
    return TruncationRadius{std::max(0.1, 2.0 * worst), RadiusProvenance::auto_estimated};
}

TruncationRadius resolve_radius(std::optional<double> user_value, const ProblemSpec& spec, const TimeGrid& grid,
                                const ReflectionSchedule& schedule, const PathBundle& bundle, const BasisSpec& basis,
                                const SolveOptions& options) {
    if (user_value) return TruncationRadius::user(*user_value);
    return estimate_Mz_auto(spec, grid, schedule, bundle, basis, options);
}

SkorokhodCheck check_skorokhod(const SchemeSolution& solution, const ProblemSpec& spec,
                               const ReflectionSchedule& schedule) {
    SkorokhodCheck c;
    for (std::size_t p = 0; p < solution.paths; ++p) {
        for (std::size_t i = 0; i <= solution.steps; ++i) {
            const double dk = solution.dK(p, i);
            bool ok = true;
            if (!(dk >= 0.0)) c.nonnegative = ok = false;
            if (!schedule.contains(i)) {
                if (dk != 0.0) c.zero_off_schedule = ok = false;
            } else {
                const double gap = solution.y(p, i) - spec.g(solution.state(p, i));
                if (!(gap >= 0.0)) c.above_obstacle = ok = false;
                if (dk * gap != 0.0) c.complementary = ok = false;
            }
            if (!ok) ++c.violations;
        }
    }
    return c;
}

}  // namespace qrbsde
