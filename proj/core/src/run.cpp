#include "qrbsde/run.hpp"

#include "qrbsde/error.hpp"
#include "qrbsde/forward.hpp"
#include "qrbsde/lab.hpp"
#include "qrbsde/oracle.hpp"
#include "qrbsde/parallel.hpp"
#include "qrbsde/scheme.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#ifndef QRBSDE_VERSION
#define QRBSDE_VERSION "0.0.0"
#endif

namespace qrbsde {

using nlohmann::json;
namespace fs = std::filesystem;

const char* version() { return QRBSDE_VERSION; }

fs::path default_output_dir(const RunConfig& config) {
    const char* root = std::getenv("QRBSDE_OUT");
    const fs::path base = (root && *root) ? fs::path(root) : fs::path("qrbsde-runs");
    return base / (to_string(config.experiment.kind) + "-" + config_hash(config).substr(0, 8));
}

namespace {

using Clock = std::chrono::steady_clock;

class Recorder {
public:
    explicit Recorder(fs::path dir) : dir_(std::move(dir)) {}

    template <typename F>
    auto stage(const std::string& name, F&& body) {
        const auto t0 = Clock::now();
        auto finish = [&] {
            stages_.push_back(
                {{"name", name}, {"seconds", std::chrono::duration<double>(Clock::now() - t0).count()}});
        };
        try {
            if constexpr (std::is_void_v<decltype(body())>) {
                body();
                finish();
            } else {
                auto r = body();
                finish();
                return r;
            }
        } catch (const ConfigError& e) {
            finish();
            throw ConfigError("stage '" + name + "': " + e.what());
        } catch (const NumericError& e) {
            finish();
            throw NumericError("stage '" + name + "': " + e.what());
        }
    }

    void write(const std::string& file, const std::function<void(std::ostream&)>& body) {
        std::ofstream out(dir_ / file);
        if (!out) throw ConfigError("cannot write " + (dir_ / file).string());
        body(out);
        outputs_.push_back(file);
    }

    void note(const std::string& file) { outputs_.push_back(file); }

    const json& stages() const { return stages_; }
    const std::vector<std::string>& outputs() const { return outputs_; }

private:
    fs::path dir_;
    json stages_ = json::array();
    std::vector<std::string> outputs_;
};

void flag(json& flags, const std::string& name, bool value) { flags[name] = value; }

bool slope_at_least(const std::optional<SlopeFit>& fit, double threshold) {
    return fit.has_value() && fit->slope >= threshold;
}

json schedule_json(const ReflectionSchedule& s, const TimeGrid& g) {
    return {{"intervals", s.intervals()}, {"mesh", s.mesh(g)}};
}

PathBundle simulate(const ProblemSpec& spec, const TimeGrid& grid, const McConfig& mc) {
    return euler_simulate(spec, grid, sample_increments(grid, mc.paths, mc.seed, spec.m));
}

json solution_json(const SchemeSolution& sol, const SkorokhodCheck& sk) {
    double k_sum = 0.0, k_max = 0.0;
    std::size_t reflected = 0;
    for (std::size_t p = 0; p < sol.paths; ++p) {
        const double k = sol.k_total(p);
        k_sum += k;
        k_max = std::max(k_max, k);
        if (k > 0.0) ++reflected;
    }
    json picard = json::object();
    for (const auto& [it, n] : sol.picard_histogram) picard[std::to_string(it)] = n;
    return {{"y0", sol.y0},
            {"y0_mean", sol.y0_mean},
            {"y0_se", sol.y0_se},
            {"max_abs_z", sol.max_abs_z()},
            {"y_bound", sol.y_bound},
            {"radius",
             {{"value", sol.radius.value},
              {"provenance",
               sol.radius.provenance == RadiusProvenance::user_supplied ? "user_supplied" : "auto_estimated"}}},
            {"k_total",
             {{"mean", k_sum / static_cast<double>(sol.paths)},
              {"max", k_max},
              {"reflected_path_fraction", static_cast<double>(reflected) / static_cast<double>(sol.paths)}}},
            {"picard_iterations", picard},
            {"skorokhod",
             {{"nonnegative", sk.nonnegative},
              {"zero_off_schedule", sk.zero_off_schedule},
              {"above_obstacle", sk.above_obstacle},
              {"complementary", sk.complementary},
              {"violations", sk.violations}}}};
}

void write_steps_csv(std::ostream& out, const SchemeSolution& sol, const TimeGrid& grid) {
    out.precision(17);
    out << "step,t,y_mean,y_sd,z_mean,max_abs_z,mean_dk,reflected_paths,y_condition,z_condition,y_rmse,z_rmse\n";
    for (std::size_t i = 0; i < sol.steps; ++i) {
        double s = 0.0, s2 = 0.0, zs = 0.0;
        for (std::size_t p = 0; p < sol.paths; ++p) {
            s += sol.y(p, i);
            s2 += sol.y(p, i) * sol.y(p, i);
            zs += sol.z(p, i, 0);
        }
        const double n = static_cast<double>(sol.paths);
        const double mean = s / n;
        const StepDiagnostics& d = sol.diagnostics[i];
        out << i << ',' << grid.times[i] << ',' << mean << ',' << std::sqrt(std::max(0.0, s2 / n - mean * mean)) << ','
            << zs / n << ',' << d.max_abs_z << ',' << d.mean_dk << ',' << d.reflected_paths << ',' << d.y_condition
            << ',' << d.z_condition << ',' << d.y_rmse << ',' << d.z_rmse << '\n';
    }
}

struct Outcome {
    json results;
    json flags = json::object();
};

Outcome run_solve(const RunConfig& c, const ProblemSpec& spec, Recorder& rec) {
    const auto [grid, schedule] =
        rec.stage("grid", [&] { return make_grid(c.grid.N, spec.T, c.grid.reflection); });
    const PathBundle bundle = rec.stage("simulate", [&] { return simulate(spec, grid, c.mc); });
    SolveOptions opts;
    opts.z_control_variate = c.mc.z_control_variate;
    const TruncationRadius radius = rec.stage(
        "truncation", [&] { return resolve_radius(c.mc.Mz, spec, grid, schedule, bundle, c.mc.basis, opts); });
    const SchemeSolution sol = rec.stage(
        "solve", [&] { return solve_backward(spec, grid, schedule, bundle, c.mc.basis, radius, opts); });
    const SkorokhodCheck sk = check_skorokhod(sol, spec, schedule);
    Outcome o;
    o.results = solution_json(sol, sk);
    o.results["schedule"] = schedule_json(schedule, grid);
    o.results["bundle_checksum"] = bundle.checksum();
    flag(o.flags, "skorokhod", sk.passed());
    if (c.output.csv) rec.write("steps.csv", [&](std::ostream& out) { write_steps_csv(out, sol, grid); });
    if (c.output.dump_paths) rec.write("paths.csv", [&](std::ostream& out) { write_paths_csv(out, grid, bundle); });
    return o;
}

Outcome run_converge(const RunConfig& c, const ProblemSpec& spec, Recorder& rec) {
    OracleOptions oracle = c.oracle;
    oracle.kind = c.experiment.oracle;
    const ConvergenceReport r = rec.stage("converge", [&] {
        return run_convergence(spec, c.experiment.N_list, c.mc, oracle, c.experiment.estimator);
    });
    const double min = c.experiment.min_slope.value_or(0.2);
    Outcome o;
    o.results = to_json(r);
    flag(o.flags, "y0_error_monotone", r.y0_error_monotone);
    flag(o.flags, "y0_slope", slope_at_least(r.y0_slope, min));
    flag(o.flags, "z_slope", slope_at_least(r.z_slope, min));
    flag(o.flags, "skorokhod", r.skorokhod_passed);
    o.results["min_slope"] = min;
    if (c.output.csv) {
        rec.write("convergence.csv", [&](std::ostream& out) { write_convergence_csv(out, r); });
        rec.write("convergence_plot.csv", [&](std::ostream& out) { write_plot_csv(out, r); });
    }
    return o;
}

Outcome run_sweep(const RunConfig& c, const ProblemSpec& spec, Recorder& rec) {
    OracleOptions oracle = c.oracle;
    oracle.kind = c.experiment.oracle;
    const ConvergenceReport r = rec.stage("reflection-sweep", [&] {
        return run_discrete_reflection_sweep(spec, c.grid.N, c.experiment.kappa_list, oracle);
    });
    const double min = c.experiment.min_slope.value_or(0.25);
    Outcome o;
    o.results = to_json(r);
    o.results["min_slope"] = min;
    flag(o.flags, "y0_monotone", r.y0_monotone);
    flag(o.flags, "y0_slope", slope_at_least(r.y0_slope, min));
    if (c.output.csv) {
        rec.write("reflection_sweep.csv", [&](std::ostream& out) { write_convergence_csv(out, r); });
        rec.write("reflection_sweep_plot.csv", [&](std::ostream& out) { write_plot_csv(out, r); });
    }
    return o;
}

Outcome run_stab(const RunConfig& c, const ProblemSpec& spec, Recorder& rec) {
    const Perturbation kind = c.experiment.perturbation;
    const StabilityReport r = rec.stage("stability", [&] {
        return kind == Perturbation::drift_shift
                   ? run_stability(spec, kind, c.experiment.eps_list, {c.grid.N}, c.mc)
                   : run_stability(spec, kind, {}, c.experiment.N_list, c.mc);
    });
    Outcome o;
    o.results = to_json(r);
    if (kind == Perturbation::drift_shift) {
        flag(o.flags, "D_monotone", r.D_monotone);
        flag(o.flags, "ratio_bounded", r.ratio_bounded);
    } else {
        const double min = c.experiment.min_slope.value_or(0.45);
        o.results["min_slope"] = min;
        flag(o.flags, "dx_slope", slope_at_least(r.dx_slope, min));
        flag(o.flags, "y_slope", slope_at_least(r.y_slope, min));
    }
    flag(o.flags, "skorokhod", r.skorokhod_passed);
    if (c.output.csv) rec.write("stability.csv", [&](std::ostream& out) { write_stability_csv(out, r); });
    return o;
}

Outcome run_diagnose(const RunConfig& c, const ProblemSpec& spec, Recorder& rec) {
    const auto [grid, schedule] =
        rec.stage("grid", [&] { return make_grid(c.grid.N, spec.T, c.grid.reflection); });
    const PathBundle bundle = rec.stage("simulate", [&] { return simulate(spec, grid, c.mc); });
    SolveOptions opts;
    opts.z_control_variate = c.mc.z_control_variate;
    const TruncationRadius radius = rec.stage(
        "truncation", [&] { return resolve_radius(c.mc.Mz, spec, grid, schedule, bundle, c.mc.basis, opts); });
    const SchemeSolution sol = rec.stage(
        "solve", [&] { return solve_backward(spec, grid, schedule, bundle, c.mc.basis, radius, opts); });
    const DiagnosticsReport r =
        rec.stage("diagnose", [&] { return diagnose_solution(spec, grid, schedule, sol, c.mc.basis); });
    Outcome o;
    o.results = to_json(r);
    flag(o.flags, "bound", r.passed);
    flag(o.flags, "skorokhod", r.skorokhod_passed);
    if (c.output.csv) rec.write("diagnostics.csv", [&](std::ostream& out) { write_diagnostics_csv(out, r); });
    if (c.output.dump_paths) rec.write("paths.csv", [&](std::ostream& out) { write_paths_csv(out, grid, bundle); });
    return o;
}

Outcome run_oracle(const RunConfig& c, const ProblemSpec& spec, Recorder& rec) {
    const auto [grid, schedule] =
        rec.stage("grid", [&] { return make_grid(c.grid.N, spec.T, c.grid.reflection); });
    const TruncationRadius radius =
        c.mc.Mz ? TruncationRadius::user(*c.mc.Mz) : TruncationRadius{1e9, RadiusProvenance::auto_estimated};
    Outcome o;
    if (c.experiment.method == OracleMethod::brute_force) {
        const double y0 = rec.stage("brute-force", [&] {
            return brute_force_tiny(spec, grid, schedule, c.experiment.brute_force_order, radius);
        });
        o.results = {{"method", "brute_force"}, {"order", c.experiment.brute_force_order}, {"y0", y0}};
        flag(o.flags, "finite", std::isfinite(y0));
        return o;
    }
    const SpaceGrid space = make_space_grid(spec, grid, c.oracle.space);
    const GridSolution sol = rec.stage("oracle", [&] {
        return c.experiment.method == OracleMethod::snell_cole_hopf
                   ? snell_cole_hopf(spec, grid, schedule, space)
                   : exact_scheme_solve(spec, grid, schedule, space, radius);
    });
    // GridSolution invariants; the Snell oracle goes through exp/log, hence the tolerance
    constexpr double tol = 1e-12;
    bool terminal = true, above = true, dk_nonneg = true;
    const std::size_t N = sol.steps();
    for (std::size_t j = 0; j < sol.size(); ++j) {
        const double gj = spec.g(sol.nodes[j]);
        if (sol.node_y(N, j) != gj) terminal = false;
        for (std::size_t i = 0; i <= N; ++i) {
            if (schedule.contains(i) && sol.node_y(i, j) < gj - tol) above = false;
            if (sol.node_dk(i, j) < -tol) dk_nonneg = false;
        }
    }
    o.results = {{"method", c.experiment.method == OracleMethod::snell_cole_hopf ? "snell_cole_hopf" : "exact_scheme"},
                 {"y0", sol.y0(spec.x0)},
                 {"nodes", sol.size()},
                 {"x_range", {sol.nodes.front(), sol.nodes.back()}},
                 {"interpolation", sol.interpolation},
                 {"warnings", sol.warnings}};
    flag(o.flags, "terminal_equals_g", terminal);
    flag(o.flags, "above_obstacle", above);
    flag(o.flags, "dk_nonnegative", dk_nonneg);
    if (c.output.csv) rec.write("grid.csv", [&](std::ostream& out) { write_grid_csv(out, sol); });
    return o;
}

Outcome run_validate(const ProblemSpec& spec, Recorder& rec) {
    const AssumptionReport r =
        rec.stage("validate", [&] { return validate_assumptions(spec, default_cloud(spec)); });
    Outcome o;
    json checks = json::array();
    for (const auto& ch : r.checks) {
        const Witness& w = ch.witness;
        checks.push_back({{"assumption", ch.assumption},
                          {"name", ch.name},
                          {"worst_ratio", ch.worst_ratio},
                          {"passed", ch.passed},
                          {"witness", {w.t, w.x, w.y, w.z, w.t2, w.x2, w.y2, w.z2}}});
    }
    json holds = json::object();
    for (const auto& [name, ok] : r.passed) holds[name] = ok;
    o.results = {{"cloud_points", r.cloud_points}, {"assumptions", holds}, {"checks", checks}};
    // H1 and H2 are reported but only needed for the rate experiments
    for (const char* a : {"HX", "HF", "HT"}) flag(o.flags, a, r.holds(a));
    return o;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    out << j.dump(2) << '\n';
}

}  // namespace

RunResult run(const RunConfig& config, const fs::path& out_dir) {
    RunResult result;
    result.out_dir = out_dir;
    const auto t0 = Clock::now();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        result.exit_code = kExitConfig;
        result.error = "cannot create output directory " + out_dir.string() + ": " + ec.message();
        return result;
    }
    Recorder rec(out_dir);
    const std::string hash = config_hash(config);
    std::string status = "ok";

    try {
        const ProblemSpec spec = rec.stage("config", [&] {
            validate_config(config);
            return config.spec();
        });
        Outcome o;
        switch (config.experiment.kind) {
        case ExperimentKind::solve: o = run_solve(config, spec, rec); break;
        case ExperimentKind::converge: o = run_converge(config, spec, rec); break;
        case ExperimentKind::reflection_sweep: o = run_sweep(config, spec, rec); break;
        case ExperimentKind::stability: o = run_stab(config, spec, rec); break;
        case ExperimentKind::diagnose: o = run_diagnose(config, spec, rec); break;
        case ExperimentKind::oracle: o = run_oracle(config, spec, rec); break;
        case ExperimentKind::validate: o = run_validate(spec, rec); break;
        }
        bool passed = true;
        for (const auto& [name, v] : o.flags.items()) passed = passed && v.get<bool>();
        result.summary = {{"schema_version", kSchemaVersion},
                          {"experiment", to_string(config.experiment.kind)},
                          {"config_hash", hash},
                          {"problem", to_json(spec)},
                          {"config", to_json(config)},
                          {"results", o.results},
                          {"pass_flags", o.flags},
                          {"passed", passed}};
        result.summary["config"]["output"].erase("dir");
        if (config.output.json) {
            write_json(out_dir / "summary.json", result.summary);
            rec.note("summary.json");
        }
        if (!passed) {
            result.exit_code = kExitFlags;
            status = "flags-failed";
        }
    } catch (const ConfigError& e) {
        result.exit_code = kExitConfig;
        result.error = e.what();
        status = "failed";
    } catch (const NumericError& e) {
        result.exit_code = kExitNumeric;
        result.error = e.what();
        status = "failed";
    }

    std::vector<std::string> outputs = rec.outputs();
    outputs.push_back("manifest.json");

    result.manifest = {{"schema_version", kSchemaVersion},
                       {"config_hash", hash},
                       {"version", version()},
                       {"status", status},
                       {"exit_code", result.exit_code},
                       {"wall_clock_seconds", std::chrono::duration<double>(Clock::now() - t0).count()},
                       {"stages", rec.stages()},
                       {"threads", thread_count()},
                       {"seeds", {{"mc", config.mc.seed}, {"oracle_eval", config.oracle.eval_seed}}},
                       {"outputs", outputs}};
    if (!result.error.empty()) result.manifest["error"] = result.error;
    write_json(out_dir / "manifest.json", result.manifest);
    return result;
}

}  // namespace qrbsde
