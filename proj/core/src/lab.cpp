#include "qrbsde/lab.hpp"

#include "qrbsde/error.hpp"
#include "qrbsde/parallel.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace qrbsde {

SlopeFit slope_fit(std::span<const double> h, std::span<const double> err) {
    if (h.size() != err.size()) throw ConfigError("slope_fit: h and err differ in length");
    const std::size_t n = h.size();
    if (n < 3) throw ConfigError("slope_fit needs at least 3 points");
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(h[i] > 0.0) || !(err[i] > 0.0)) {
            std::ostringstream msg;
            msg << "slope_fit: nonpositive value at point " << i << " (h = " << h[i] << ", err = " << err[i] << ")";
            throw ConfigError(msg.str());
        }
        lx[i] = std::log(h[i]);
        ly[i] = std::log(err[i]);
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (!(sxx > 0.0)) throw ConfigError("slope_fit: all h values are equal");
    SlopeFit fit;
    fit.points = n;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ly[i] - fit.intercept - fit.slope * lx[i];
        sse += r * r;
    }
    const double dof = static_cast<double>(n - 2);
    fit.std_error = std::sqrt(sse / dof / sxx);
    const boost::math::students_t dist(dof);
    const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
    fit.band_lo = fit.slope - t * fit.std_error;
    fit.band_hi = fit.slope + t * fit.std_error;
    return fit;
}

std::string to_string(ConvergenceEstimator e) { return e == ConvergenceEstimator::lsmc ? "lsmc" : "grid"; }

std::string to_string(OracleKind o) {
    switch (o) {
    case OracleKind::automatic: return "auto";
    case OracleKind::snell_cole_hopf: return "snell_cole_hopf";
    case OracleKind::exact_scheme: return "exact_scheme";
    }
    return "auto";
}

std::string to_string(Perturbation p) { return p == Perturbation::drift_shift ? "drift-shift" : "euler-vs-exact"; }

namespace {

MonotoneCubic y_slice(const GridSolution& sol, std::size_t i) {
    const std::size_t J = sol.size();
    std::vector<double> v(sol.y.begin() + static_cast<std::ptrdiff_t>(i * J),
                          sol.y.begin() + static_cast<std::ptrdiff_t>((i + 1) * J));
    return MonotoneCubic(sol.nodes.front(), sol.nodes[1] - sol.nodes[0], std::move(v));
}

MonotoneCubic z_slice(const GridSolution& sol, std::size_t i, std::size_t k) {
    const std::size_t J = sol.size();
    std::vector<double> v(J);
    for (std::size_t j = 0; j < J; ++j) v[j] = sol.node_z(i, j, k);
    return MonotoneCubic(sol.nodes.front(), sol.nodes[1] - sol.nodes[0], std::move(v));
}

OracleKind resolve_oracle(const ProblemSpec& spec, OracleKind kind) {
    if (kind == OracleKind::automatic)
        return spec.driver_kind == DriverKind::pure_quadratic ? OracleKind::snell_cole_hopf : OracleKind::exact_scheme;
    if (kind == OracleKind::snell_cole_hopf && spec.driver_kind != DriverKind::pure_quadratic)
        throw ConfigError("oracle mismatch: snell_cole_hopf needs the pure quadratic driver");
    return kind;
}

GridSolution solve_oracle(const ProblemSpec& spec, OracleKind kind, const TimeGrid& grid,
                          const ReflectionSchedule& schedule, const SpaceGrid& space, const TruncationRadius& radius) {
    return kind == OracleKind::snell_cole_hopf ? snell_cole_hopf(spec, grid, schedule, space)
                                               : exact_scheme_solve(spec, grid, schedule, space, radius);
}

// Radius for grid solutions when the configuration asks for auto: Z of the
// exact scheme is bounded by the data, so no truncation is applied.
TruncationRadius grid_radius(const McConfig& mc) {
    return mc.Mz ? TruncationRadius::user(*mc.Mz) : TruncationRadius{1e9, RadiusProvenance::auto_estimated};
}

PathBundle euler_sample(const ProblemSpec& spec, const TimeGrid& grid, std::size_t paths, std::uint64_t seed) {
    return euler_simulate(spec, grid, sample_increments(grid, paths, seed, spec.m));
}

std::optional<SlopeFit> try_fit(std::span<const double> h, std::span<const double> err,
                                std::vector<std::string>& warnings, const std::string& what) {
    try {
        return slope_fit(h, err);
    } catch (const ConfigError& e) {
        warnings.push_back(what + ": " + e.what());
        return std::nullopt;
    }
}

bool strictly_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1])) return false;
    return true;
}

// Fills y_sup_error and z_error of `row`, comparing the estimate on states
// X[p][i] (coarse grid, `stride` = N + 1) with reference slices at fine index
// i * ratio.
template <typename YEst, typename ZEst>
void compare_with_reference(ConvergenceRow& row, std::span<const double> states, std::size_t P, std::size_t N,
                            std::size_t dim, const TimeGrid& grid, const GridSolution& y_ref,
                            const GridSolution* z_ref, std::size_t ratio, const YEst& y_est, const ZEst& z_est) {
    const std::size_t stride = N + 1;
    double y_sup = 0.0;
    double z_sum = 0.0;
    std::vector<double> err(P);
    for (std::size_t i = 0; i <= N; ++i) {
        const MonotoneCubic yr = y_slice(y_ref, i * ratio);
        parallel_for(P, [&](std::size_t p) {
            const double d = y_est(i, p) - yr(states[p * stride + i]);
            err[p] = d * d;
        });
        double s = 0.0;
        for (double e : err) s += e;
        y_sup = std::max(y_sup, std::sqrt(s / static_cast<double>(P)));
        if (i == N || z_ref == nullptr) continue;
        for (std::size_t k = 0; k < dim; ++k) {
            const MonotoneCubic zr = z_slice(*z_ref, i * ratio, k);
            parallel_for(P, [&](std::size_t p) {
                const double d = z_est(i, p, k) - zr(states[p * stride + i]);
                err[p] = d * d;
            });
            double sz = 0.0;
            for (double e : err) sz += e;
            z_sum += sz / static_cast<double>(P) * grid.dt(i);
        }
    }
    row.y_sup_error = y_sup;
    row.z_error = z_sum;
}

}  // namespace

ConvergenceReport run_convergence(const ProblemSpec& spec, const std::vector<std::size_t>& N_list,
                                  const McConfig& mc, const OracleOptions& oracle, ConvergenceEstimator estimator) {
    if (N_list.size() < 4) throw ConfigError("run_convergence needs at least 4 grid sizes");
    for (std::size_t i = 1; i < N_list.size(); ++i)
        if (N_list[i] <= N_list[i - 1]) throw ConfigError("run_convergence: N values must be strictly increasing");
    const OracleKind y_kind = resolve_oracle(spec, oracle.kind);

    ConvergenceReport report;
    report.experiment = "convergence";
    report.estimator = to_string(estimator);
    report.reference = to_string(y_kind);
    report.reference_N = 2 * N_list.back();
    for (std::size_t N : N_list)
        if (report.reference_N % N != 0) throw ConfigError("run_convergence: every N must divide 2 max(N)");

    const TruncationRadius oracle_radius = grid_radius(mc);
    const auto [ref_grid, ref_schedule] = make_grid(report.reference_N, spec.T, ReflectionPolicy::all());
    const SpaceGrid ref_space = make_space_grid(spec, ref_grid, oracle.space);
    const GridSolution z_ref = exact_scheme_solve(spec, ref_grid, ref_schedule, ref_space, oracle_radius);
    const GridSolution y_ref = y_kind == OracleKind::exact_scheme
                                   ? z_ref
                                   : solve_oracle(spec, y_kind, ref_grid, ref_schedule, ref_space, oracle_radius);
    report.y0_reference = y_ref.y0(spec.x0);
    for (const auto& w : ref_space.warnings) report.warnings.push_back("reference grid: " + w);

    for (std::size_t N : N_list) {
        const auto [grid, schedule] = make_grid(N, spec.T, ReflectionPolicy::all());
        const std::size_t ratio = report.reference_N / N;
        ConvergenceRow row;
        row.N = N;
        row.h = grid.mesh();
        row.y0_reference = report.y0_reference;
        if (estimator == ConvergenceEstimator::lsmc) {
            const PathBundle bundle = euler_sample(spec, grid, mc.paths, mc.seed);
            SolveOptions opts;
            opts.z_control_variate = mc.z_control_variate;
            const TruncationRadius radius = resolve_radius(mc.Mz, spec, grid, schedule, bundle, mc.basis, opts);
            const SchemeSolution sol = solve_backward(spec, grid, schedule, bundle, mc.basis, radius, opts);
            report.skorokhod_passed = report.skorokhod_passed && check_skorokhod(sol, spec, schedule).passed();
            row.y0 = sol.y0;
            row.y0_se = sol.y0_se;
            compare_with_reference(
                row, sol.x, sol.paths, N, spec.m, grid, y_ref, &z_ref, ratio,
                [&](std::size_t i, std::size_t p) { return sol.y(p, i); },
                [&](std::size_t i, std::size_t p, std::size_t k) { return sol.z(p, i, k); });
        } else {
            const SpaceGrid space = make_space_grid(spec, grid, oracle.space);
            const GridSolution est = exact_scheme_solve(spec, grid, schedule, space, oracle_radius);
            row.y0 = est.y0(spec.x0);
            const PathBundle sample = euler_sample(spec, grid, oracle.eval_paths, oracle.eval_seed);
            std::vector<MonotoneCubic> ys(N + 1), zs(N * spec.m);
            for (std::size_t i = 0; i <= N; ++i) ys[i] = y_slice(est, i);
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t k = 0; k < spec.m; ++k) zs[i * spec.m + k] = z_slice(est, i, k);
            compare_with_reference(
                row, sample.x_euler, sample.paths, N, spec.m, grid, y_ref, &z_ref, ratio,
                [&](std::size_t i, std::size_t p) { return ys[i](sample.euler(p, i)); },
                [&](std::size_t i, std::size_t p, std::size_t k) { return zs[i * spec.m + k](sample.euler(p, i)); });
        }
        row.y0_error = std::abs(row.y0 - row.y0_reference);
        report.rows.push_back(row);
    }

    std::vector<double> h, ey, es, ez;
    for (const auto& r : report.rows) {
        h.push_back(r.h);
        ey.push_back(r.y0_error);
        es.push_back(r.y_sup_error);
        ez.push_back(r.z_error);
    }
    // rows are ascending in N, so errors should decrease along them
    report.y0_error_monotone = strictly_decreasing(ey);
    report.z_error_monotone = strictly_decreasing(ez);
    for (const auto& r : report.rows) {
        const double floor = estimator == ConvergenceEstimator::lsmc ? 2.0 * r.y0_se : 1e-12;
        if (r.y0_error <= floor) report.floor_limited = true;
    }
    if (report.floor_limited) report.warnings.push_back("floor-limited: some Y0 errors are at the noise floor");
    report.y0_slope = try_fit(h, ey, report.warnings, "Y0 slope");
    report.y_sup_slope = try_fit(h, es, report.warnings, "sup-Y slope");
    report.z_slope = try_fit(h, ez, report.warnings, "Z slope");
    return report;
}

ConvergenceReport run_discrete_reflection_sweep(const ProblemSpec& spec, std::size_t N,
                                                const std::vector<std::size_t>& kappa_list,
                                                const OracleOptions& oracle) {
    if (kappa_list.empty()) throw ConfigError("reflection sweep needs kappa values");
    std::vector<std::size_t> kappas = kappa_list;
    std::sort(kappas.begin(), kappas.end());
    kappas.erase(std::unique(kappas.begin(), kappas.end()), kappas.end());
    for (std::size_t k : kappas) {
        if (k == 0 || N % k != 0) {
            std::ostringstream msg;
            msg << "reflection sweep: kappa = " << k << " does not divide N = " << N;
            throw ConfigError(msg.str());
        }
    }
    const OracleKind kind = resolve_oracle(spec, oracle.kind);
    const TruncationRadius radius{1e9, RadiusProvenance::auto_estimated};

    ConvergenceReport report;
    report.experiment = "reflection-sweep";
    report.estimator = "grid";
    report.reference = to_string(kind);
    report.reference_N = N;

    const auto [grid, full] = make_grid(N, spec.T, ReflectionPolicy::all());
    const SpaceGrid space = make_space_grid(spec, grid, oracle.space);
    for (const auto& w : space.warnings) report.warnings.push_back(w);
    const GridSolution ref = solve_oracle(spec, kind, grid, full, space, radius);
    report.y0_reference = ref.y0(spec.x0);
    const PathBundle sample = euler_sample(spec, grid, oracle.eval_paths, oracle.eval_seed);

    std::vector<GridSolution> sols;
    for (std::size_t k : kappas) {
        const auto [g, schedule] = make_grid(N, spec.T, ReflectionPolicy::every(N / k));
        sols.push_back(solve_oracle(spec, kind, g, schedule, space, radius));
        const GridSolution& s = sols.back();
        ConvergenceRow row;
        row.N = k;
        row.h = schedule.mesh(g);
        row.y0 = s.y0(spec.x0);
        row.y0_reference = report.y0_reference;
        row.y0_error = std::abs(row.y0 - row.y0_reference);
        std::vector<MonotoneCubic> ys(N + 1), zs;
        for (std::size_t i = 0; i <= N; ++i) ys[i] = y_slice(s, i);
        const bool with_z = !s.z.empty() && !ref.z.empty();
        if (with_z) {
            zs.resize(N * spec.m);
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t kk = 0; kk < spec.m; ++kk) zs[i * spec.m + kk] = z_slice(s, i, kk);
        }
        compare_with_reference(
            row, sample.x_euler, sample.paths, N, spec.m, grid, ref, with_z ? &ref : nullptr, 1,
            [&](std::size_t i, std::size_t p) { return ys[i](sample.euler(p, i)); },
            [&](std::size_t i, std::size_t p, std::size_t kk) { return zs[i * spec.m + kk](sample.euler(p, i)); });
        report.rows.push_back(row);
    }

    // Y0 nondecreasing under refinement of R
    report.y0_monotone = true;
    for (std::size_t i = 1; i < report.rows.size(); ++i)
        if (report.rows[i].y0 < report.rows[i - 1].y0 - 1e-10) report.y0_monotone = false;
    // nodewise order for nested schedules, including R = pi
    report.nodewise_monotone = true;
    auto ordered = [](const GridSolution& coarse, const GridSolution& fine) {
        for (std::size_t n = 0; n < coarse.y.size(); ++n)
            if (coarse.y[n] > fine.y[n] + 1e-10) return false;
        return true;
    };
    for (std::size_t a = 0; a < kappas.size(); ++a) {
        if (!ordered(sols[a], ref)) report.nodewise_monotone = false;
        for (std::size_t b = a + 1; b < kappas.size(); ++b)
            if (kappas[b] % kappas[a] == 0 && !ordered(sols[a], sols[b])) report.nodewise_monotone = false;
    }

    std::vector<double> h, ey, es, ez;
    bool with_z = false;
    for (const auto& r : report.rows) {
        // kappa = N reproduces the reference
        if (r.y0_error <= 0.0) continue;
        h.push_back(r.h);
        ey.push_back(r.y0_error);
        es.push_back(r.y_sup_error);
        ez.push_back(r.z_error);
        with_z = with_z || r.z_error > 0.0;
    }
    std::vector<double> ey_all;
    for (const auto& r : report.rows) ey_all.push_back(r.y0_error);
    report.y0_error_monotone = std::is_sorted(ey_all.rbegin(), ey_all.rend()) && strictly_decreasing(ey);
    report.y0_slope = try_fit(h, ey, report.warnings, "Y0 gap slope");
    report.y_sup_slope = try_fit(h, es, report.warnings, "sup-Y gap slope");
    if (with_z) {
        report.z_error_monotone = strictly_decreasing(ez);
        report.z_slope = try_fit(h, ez, report.warnings, "Z gap slope");
    }
    return report;
}

namespace {

struct LegDeltas {
    double dx_proxy = 0.0;
    double D_Y = 0.0;
    double D_Z = 0.0;
    double D_K = 0.0;
};

LegDeltas leg_deltas(const SchemeSolution& a, const SchemeSolution& b, const TimeGrid& grid) {
    if (a.paths != b.paths || a.steps != b.steps || a.dim != b.dim)
        throw ConfigError("stability legs have mismatched grids");
    const std::size_t P = a.paths, N = a.steps, m = a.dim;
    std::vector<double> sx(P), sy(P), sz(P), sk(P);
    parallel_for(P, [&](std::size_t p) {
        double mx = 0.0, my = 0.0, z = 0.0;
        for (std::size_t i = 0; i <= N; ++i) {
            mx = std::max(mx, std::abs(a.state(p, i) - b.state(p, i)));
            my = std::max(my, std::abs(a.y(p, i) - b.y(p, i)));
            if (i == N) continue;
            for (std::size_t k = 0; k < m; ++k) {
                const double d = a.z(p, i, k) - b.z(p, i, k);
                z += d * d * grid.dt(i);
            }
        }
        const double dk = a.k_total(p) - b.k_total(p);
        sx[p] = mx * mx * mx * mx;
        sy[p] = my * my;
        sz[p] = z;
        sk[p] = dk * dk;
    });
    LegDeltas d;
    for (std::size_t p = 0; p < P; ++p) {
        d.dx_proxy += sx[p];
        d.D_Y += sy[p];
        d.D_Z += sz[p];
        d.D_K += sk[p];
    }
    const double n = static_cast<double>(P);
    d.dx_proxy = std::pow(d.dx_proxy / n, 0.25);
    d.D_Y /= n;
    d.D_Z /= n;
    d.D_K /= n;
    return d;
}

double drift_shift_of(const ProblemSpec& spec) {
    const auto it = spec.overrides.find("drift_shift");
    if (it == spec.overrides.end()) return 0.0;
    if (const double* v = std::get_if<double>(&it->second)) return *v;
    throw ConfigError("drift_shift override must be a number");
}

void fill_row(StabilityRow& row, const LegDeltas& d) {
    row.dx_proxy = d.dx_proxy;
    row.D_Y = d.D_Y;
    row.D_Z = d.D_Z;
    row.D_K = d.D_K;
    if (d.dx_proxy > 0.0) {
        row.ratio_Y = d.D_Y / d.dx_proxy;
        row.ratio_Z = d.D_Z / d.dx_proxy;
        row.ratio_K = d.D_K / d.dx_proxy;
    }
}

}  // namespace

StabilityReport run_stability(const ProblemSpec& spec, Perturbation kind, const std::vector<double>& eps_list,
                              const std::vector<std::size_t>& N_list, const McConfig& mc) {
    StabilityReport report;
    report.perturbation = to_string(kind);
    report.paths = mc.paths;
    report.seed = mc.seed;
    SolveOptions base_opts;
    base_opts.states = StateSource::exact;
    base_opts.z_control_variate = mc.z_control_variate;

    if (kind == Perturbation::drift_shift) {
        if (!spec.affine_drift) throw ConfigError("drift-shift stability needs an affine drift preset");
        if (N_list.size() != 1) throw ConfigError("drift-shift stability uses a single grid size");
        if (eps_list.empty()) throw ConfigError("drift-shift stability needs epsilon values");
        for (std::size_t i = 1; i < eps_list.size(); ++i)
            if (!(eps_list[i] < eps_list[i - 1])) throw ConfigError("epsilon values must be decreasing");
        const auto [grid, schedule] = make_grid(N_list.front(), spec.T, ReflectionPolicy::all());
        const PathBundle increments = sample_increments(grid, mc.paths, mc.seed, spec.m);
        const PathBundle base_paths = exact_simulate(spec, grid, increments);
        const TruncationRadius radius = resolve_radius(mc.Mz, spec, grid, schedule, base_paths, mc.basis, base_opts);
        const SchemeSolution base = solve_backward(spec, grid, schedule, base_paths, mc.basis, radius, base_opts);
        report.skorokhod_passed = check_skorokhod(base, spec, schedule).passed();
        const double shift0 = drift_shift_of(spec);
        for (double eps : eps_list) {
            const ProblemSpec shifted = with_overrides(spec, {{"drift_shift", shift0 + eps}});
            const PathBundle paths = exact_simulate(shifted, grid, increments);
            if (paths.checksum() != base_paths.checksum())
                throw NumericError("stability legs do not share their Brownian increments");
            const SchemeSolution sol = solve_backward(shifted, grid, schedule, paths, mc.basis, radius, base_opts);
            report.skorokhod_passed = report.skorokhod_passed && check_skorokhod(sol, shifted, schedule).passed();
            StabilityRow row;
            row.level = eps;
            row.N = grid.steps();
            row.y0_base = base.y0;
            row.y0_perturbed = sol.y0;
            row.checksum = paths.checksum();
            fill_row(row, leg_deltas(sol, base, grid));
            report.rows.push_back(row);
        }
    } else {
        if (N_list.size() < 3) throw ConfigError("euler-vs-exact stability needs at least 3 grid sizes");
        if (!spec.affine_drift) throw ConfigError("euler-vs-exact stability needs exact simulation (affine drift)");
        SolveOptions euler_opts = base_opts;
        euler_opts.states = StateSource::euler;
        for (std::size_t N : N_list) {
            const auto [grid, schedule] = make_grid(N, spec.T, ReflectionPolicy::all());
            PathBundle paths = exact_simulate(spec, grid, sample_increments(grid, mc.paths, mc.seed, spec.m));
            paths = euler_simulate(spec, grid, std::move(paths));
            const TruncationRadius radius = resolve_radius(mc.Mz, spec, grid, schedule, paths, mc.basis, base_opts);
            const SchemeSolution exact = solve_backward(spec, grid, schedule, paths, mc.basis, radius, base_opts);
            const SchemeSolution euler = solve_backward(spec, grid, schedule, paths, mc.basis, radius, euler_opts);
            report.skorokhod_passed = report.skorokhod_passed && check_skorokhod(exact, spec, schedule).passed() &&
                                      check_skorokhod(euler, spec, schedule).passed();
            StabilityRow row;
            row.level = grid.mesh();
            row.N = N;
            row.y0_base = exact.y0;
            row.y0_perturbed = euler.y0;
            row.checksum = paths.checksum();
            fill_row(row, leg_deltas(euler, exact, grid));
            report.rows.push_back(row);
        }
    }

    std::vector<double> level, dx, dy, dz, dk;
    for (const auto& r : report.rows) {
        level.push_back(r.level);
        dx.push_back(r.dx_proxy);
        dy.push_back(r.D_Y);
        dz.push_back(r.D_Z);
        dk.push_back(r.D_K);
    }
    report.D_monotone = strictly_decreasing(dy) && strictly_decreasing(dz) && strictly_decreasing(dk);
    if (!report.rows.empty()) {
        report.first_ratio_Y = report.rows.front().ratio_Y;
        for (const auto& r : report.rows) report.max_ratio_Y = std::max(report.max_ratio_Y, r.ratio_Y);
        report.ratio_bounded = report.max_ratio_Y <= 2.0 * report.first_ratio_Y;
    }
    const auto& x_axis = kind == Perturbation::drift_shift ? dx : level;
    if (report.rows.size() >= 3) {
        report.dx_slope = try_fit(level, dx, report.warnings, "dX proxy slope");
        report.y_slope = try_fit(x_axis, dy, report.warnings, "D_Y slope");
        report.z_slope = try_fit(x_axis, dz, report.warnings, "D_Z slope");
        report.k_slope = try_fit(x_axis, dk, report.warnings, "D_K slope");
    }
    return report;
}

double bmo_bound(const ProblemSpec& spec) {
    const double M = y_bound(spec).M;
    const double a = spec.alpha;
    return std::exp(4.0 * a * M) / (a * a) * (1.0 + 2.0 * a * spec.M_f * (1.0 + M) * spec.T);
}

namespace {

// type-7 sample quantile
double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

MomentEstimate power_mean(const std::vector<double>& v, double p) {
    const double n = static_cast<double>(v.size());
    double s = 0.0, s2 = 0.0;
    for (double x : v) {
        const double w = std::pow(x, p);
        s += w;
        s2 += w * w;
    }
    const double mean = s / n;
    const double var = std::max(0.0, s2 / n - mean * mean);
    return {mean, std::sqrt(var / std::max(1.0, n - 1.0))};
}

}  // namespace

DiagnosticsReport diagnose_solution(const ProblemSpec& spec, const TimeGrid& grid, const ReflectionSchedule& schedule,
                                    const SchemeSolution& sol, const BasisSpec& basis) {
    DiagnosticsReport rep;
    rep.bound = bmo_bound(spec);
    rep.y0 = sol.y0;
    rep.y0_se = sol.y0_se;
    rep.max_abs_z = sol.max_abs_z();
    rep.skorokhod_passed = check_skorokhod(sol, spec, schedule).passed();
    const std::size_t P = sol.paths, N = sol.steps;

    // tail[p] = sum_{j >= i} |Z_j|^2 dt, built backward
    std::vector<double> tail(P, 0.0), xs(P), fitted(P);
    rep.tail_sum_q99.assign(N, 0.0);
    for (std::size_t i = N; i-- > 0;) {
        const double dt = grid.dt(i);
        for (std::size_t p = 0; p < P; ++p) {
            tail[p] += sol.z_norm(p, i) * sol.z_norm(p, i) * dt;
            xs[p] = sol.state(p, i);
        }
        const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
        const bool deterministic = i == 0 || *lo == *hi;
        Basis phi = deterministic ? Basis::constant() : Basis(basis, xs);
        const Regressor reg(std::move(phi), xs, deterministic ? 0.0 : basis.ridge);
        const RegressionFit fit = reg.fit(tail);
        parallel_for(P, [&](std::size_t p) { fitted[p] = evaluate_fit(fit, xs[p]); });
        rep.tail_sum_q99[i] = quantile(fitted, 0.99);
    }
    for (std::size_t i = 0; i < N; ++i) {
        if (rep.tail_sum_q99[i] > rep.tail_sum_max || i == 0) {
            rep.tail_sum_max = rep.tail_sum_q99[i];
            rep.tail_sum_argmax = i;
        }
    }
    rep.passed = rep.tail_sum_max <= rep.bound;

    std::vector<double> energy(P), k_total(P);
    for (std::size_t p = 0; p < P; ++p) {
        double e = 0.0;
        for (std::size_t i = 0; i < N; ++i) e += sol.z_norm(p, i) * sol.z_norm(p, i) * grid.dt(i);
        energy[p] = e;
        k_total[p] = sol.k_total(p);
    }
    for (double p : {1.0, 2.0, 4.0}) {
        const MomentEstimate ze = power_mean(energy, p);
        const MomentEstimate kt = power_mean(k_total, p);
        rep.moments.push_back({p, ze.mean, ze.se, kt.mean, kt.se});
    }
    return rep;
}

DiagnosticsReport run_diagnostics(const ProblemSpec& spec, const TimeGrid& grid, const ReflectionSchedule& schedule,
                                  const McConfig& mc) {
    const PathBundle bundle = euler_sample(spec, grid, mc.paths, mc.seed);
    SolveOptions opts;
    opts.z_control_variate = mc.z_control_variate;
    const TruncationRadius radius = resolve_radius(mc.Mz, spec, grid, schedule, bundle, mc.basis, opts);
    const SchemeSolution sol = solve_backward(spec, grid, schedule, bundle, mc.basis, radius, opts);
    return diagnose_solution(spec, grid, schedule, sol, mc.basis);
}

void write_convergence_csv(std::ostream& out, const ConvergenceReport& report) {
    out.precision(17);
    out << (report.experiment == "reflection-sweep" ? "kappa" : "N")
        << ",h,y0,y0_se,y0_reference,y0_error,y_sup_error,z_error\n";
    for (const auto& r : report.rows)
        out << r.N << ',' << r.h << ',' << r.y0 << ',' << r.y0_se << ',' << r.y0_reference << ',' << r.y0_error
            << ',' << r.y_sup_error << ',' << r.z_error << '\n';
}

void write_stability_csv(std::ostream& out, const StabilityReport& report) {
    out.precision(17);
    out << "level,N,dx_proxy,D_Y,D_Z,D_K,ratio_Y,ratio_Z,ratio_K,y0_base,y0_perturbed,checksum\n";
    for (const auto& r : report.rows)
        out << r.level << ',' << r.N << ',' << r.dx_proxy << ',' << r.D_Y << ',' << r.D_Z << ',' << r.D_K << ','
            << r.ratio_Y << ',' << r.ratio_Z << ',' << r.ratio_K << ',' << r.y0_base << ',' << r.y0_perturbed << ','
            << r.checksum << '\n';
}

void write_diagnostics_csv(std::ostream& out, const DiagnosticsReport& report) {
    out.precision(17);
    out << "step,tail_sum_q99,bound\n";
    for (std::size_t i = 0; i < report.tail_sum_q99.size(); ++i)
        out << i << ',' << report.tail_sum_q99[i] << ',' << report.bound << '\n';
}

void write_plot_csv(std::ostream& out, const ConvergenceReport& report) {
    out.precision(17);
    out << "quantity,h,err,fit\n";
    auto block = [&](const char* name, const std::optional<SlopeFit>& fit, auto member) {
        for (const auto& r : report.rows) {
            const double e = r.*member;
            out << name << ',' << r.h << ',' << e << ',';
            if (fit) out << std::exp(fit->intercept + fit->slope * std::log(r.h));
            out << '\n';
        }
    };
    block("y0_error", report.y0_slope, &ConvergenceRow::y0_error);
    block("y_sup_error", report.y_sup_slope, &ConvergenceRow::y_sup_error);
    block("z_error", report.z_slope, &ConvergenceRow::z_error);
}

nlohmann::json to_json(const SlopeFit& fit) {
    return {{"slope", fit.slope},       {"intercept", fit.intercept}, {"std_error", fit.std_error},
            {"band_lo", fit.band_lo},   {"band_hi", fit.band_hi},     {"points", fit.points}};
}

namespace {

nlohmann::json optional_fit(const std::optional<SlopeFit>& fit) { return fit ? to_json(*fit) : nlohmann::json(); }

}  // namespace

nlohmann::json to_json(const ConvergenceReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
        rows.push_back({{r.experiment == "reflection-sweep" ? "kappa" : "N", row.N},
                        {"h", row.h},
                        {"y0", row.y0},
                        {"y0_se", row.y0_se},
                        {"y0_reference", row.y0_reference},
                        {"y0_error", row.y0_error},
                        {"y_sup_error", row.y_sup_error},
                        {"z_error", row.z_error}});
    return {{"experiment", r.experiment},
            {"estimator", r.estimator},
            {"reference", r.reference},
            {"reference_N", r.reference_N},
            {"y0_reference", r.y0_reference},
            {"rows", rows},
            {"y0_slope", optional_fit(r.y0_slope)},
            {"y_sup_slope", optional_fit(r.y_sup_slope)},
            {"z_slope", optional_fit(r.z_slope)},
            {"y0_error_monotone", r.y0_error_monotone},
            {"z_error_monotone", r.z_error_monotone},
            {"y0_monotone", r.y0_monotone},
            {"nodewise_monotone", r.nodewise_monotone},
            {"floor_limited", r.floor_limited},
            {"skorokhod_passed", r.skorokhod_passed},
            {"warnings", r.warnings}};
}

nlohmann::json to_json(const StabilityReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"level", row.level},       {"N", row.N},
                        {"dx_proxy", row.dx_proxy}, {"D_Y", row.D_Y},
                        {"D_Z", row.D_Z},           {"D_K", row.D_K},
                        {"ratio_Y", row.ratio_Y},   {"ratio_Z", row.ratio_Z},
                        {"ratio_K", row.ratio_K},   {"y0_base", row.y0_base},
                        {"y0_perturbed", row.y0_perturbed}, {"checksum", row.checksum}});
    return {{"perturbation", r.perturbation},
            {"dx_proxy_name", "(E sup_i |dX_i|^4)^(1/4) on the time grid"},
            {"paths", r.paths},
            {"seed", r.seed},
            {"rows", rows},
            {"dx_slope", optional_fit(r.dx_slope)},
            {"y_slope", optional_fit(r.y_slope)},
            {"z_slope", optional_fit(r.z_slope)},
            {"k_slope", optional_fit(r.k_slope)},
            {"D_monotone", r.D_monotone},
            {"max_ratio_Y", r.max_ratio_Y},
            {"first_ratio_Y", r.first_ratio_Y},
            {"ratio_bounded", r.ratio_bounded},
            {"skorokhod_passed", r.skorokhod_passed},
            {"warnings", r.warnings}};
}

nlohmann::json to_json(const DiagnosticsReport& r) {
    nlohmann::json moments = nlohmann::json::array();
    for (const auto& m : r.moments)
        moments.push_back({{"p", m.p},
                           {"z_energy", m.z_energy},
                           {"z_energy_se", m.z_energy_se},
                           {"k_total", m.k_total},
                           {"k_total_se", m.k_total_se}});
    return {{"tail_sum_max", r.tail_sum_max},
            {"tail_sum_argmax", r.tail_sum_argmax},
            {"bound", r.bound},
            {"passed", r.passed},
            {"moments", moments},
            {"y0", r.y0},
            {"y0_se", r.y0_se},
            {"max_abs_z", r.max_abs_z},
            {"skorokhod_passed", r.skorokhod_passed}};
}

}  // namespace qrbsde
