// Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "qrbsde/config.hpp"
#include "qrbsde/lab.hpp"
#include "qrbsde/model.hpp"
#include "qrbsde/oracle.hpp"
#include "qrbsde/parallel.hpp"
#include "qrbsde/run.hpp"
#include "qrbsde/scheme.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace qrbsde;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool passed = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* title, double budget_seconds, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (budget_seconds > 0.0 && secs > budget_seconds) {
        o.passed = false;
        o.detail += " [over the " + std::to_string(static_cast<int>(budget_seconds)) + " s budget]";
    }
    if (!o.passed) ++failures;
    std::printf("%s criterion %d (%s): %s (%.1f s)\n", o.passed ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

const TruncationRadius kWide = TruncationRadius::user(1e9);

double snell_y0(const ProblemSpec& s, std::size_t N) {
    const auto [g, r] = make_grid(N, s.T, ReflectionPolicy::all());
    return snell_cole_hopf(s, g, r, make_space_grid(s, g)).y0(s.x0);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// every output file except the manifest, which records wall-clock time and thread count
std::string outputs_of(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().filename() != "manifest.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string all;
    for (const auto& f : files) all += f.filename().string() + "\n" + slurp(f);
    return all;
}

}  // namespace

int main() {
    const ProblemSpec p1 = build_preset(kPresetPureQuadratic);
    const ProblemSpec p2 = build_preset(kPresetMixedQuadratic);

    criterion(1, "oracle cross-agreement", 60.0, [&] {
        std::vector<double> gaps;
        for (std::size_t N : {64u, 128u, 256u}) {
            const auto [g, r] = make_grid(N, p1.T, ReflectionPolicy::all());
            const SpaceGrid sp = make_space_grid(p1, g);
            const double a = exact_scheme_solve(p1, g, r, sp, kWide).y0(p1.x0);
            const double b = snell_cole_hopf(p1, g, r, sp).y0(p1.x0);
            gaps.push_back(std::abs(a - b));
        }
        const bool ok = gaps[0] <= 1e-3 && gaps[1] < gaps[0] && gaps[2] < gaps[1];
        return Outcome{ok, "gaps " + fmt("%.3e", gaps[0]) + ", " + fmt("%.3e", gaps[1]) + ", " +
                               fmt("%.3e", gaps[2])};
    });

    criterion(2, "scheme vs oracle", 120.0, [&] {
        const auto [g, r] = make_grid(64, p1.T, ReflectionPolicy::all());
        const PathBundle b = euler_simulate(p1, g, sample_increments(g, 50000, 42, 1));
        const BasisSpec basis = BasisSpec::polynomial(6);
        const TruncationRadius radius = resolve_radius(std::nullopt, p1, g, r, b, basis);
        const SchemeSolution sol = solve_backward(p1, g, r, b, basis, radius);
        const double ref = snell_y0(p1, 64);
        const double err = std::abs(sol.y0 - ref);
        const double tol = std::max(3.0 * sol.y0_se, 0.01);
        return Outcome{err <= tol, "Y0 " + fmt("%.6f", sol.y0) + " vs " + fmt("%.6f", ref) + ", error " +
                                       fmt("%.6f", err) + " <= " + fmt("%.6f", tol)};
    });

    criterion(3, "convergence rate", 600.0, [&] {
        const ConvergenceReport rep = run_convergence(p1, {8, 16, 32, 64, 128}, McConfig{}, OracleOptions{});
        const bool ok = rep.y0_slope && rep.z_slope && rep.y0_slope->slope >= 0.2 && rep.z_slope->slope >= 0.2 &&
                        rep.y0_error_monotone;
        std::string d = "estimator " + rep.estimator;
        if (rep.y0_slope) d += ", Y0 slope " + fmt("%.3f", rep.y0_slope->slope);
        if (rep.z_slope) d += ", Z slope " + fmt("%.3f", rep.z_slope->slope);
        d += rep.y0_error_monotone ? ", monotone" : ", not monotone";
        return Outcome{ok, d};
    });

    criterion(4, "discrete reflection rate", 120.0, [&] {
        OracleOptions o;
        o.kind = OracleKind::snell_cole_hopf;
        const ConvergenceReport rep = run_discrete_reflection_sweep(p1, 256, {4, 8, 16, 32, 64}, o);
        const bool ok = rep.y0_slope && rep.y0_slope->slope >= 0.25 && rep.y0_monotone;
        std::string d = rep.y0_slope ? "gap slope " + fmt("%.3f", rep.y0_slope->slope) : "no slope";
        d += rep.y0_monotone ? ", Y0 nondecreasing" : ", Y0 not monotone";
        return Outcome{ok, d};
    });

    criterion(5, "drift-shift stability", 600.0, [&] {
        const StabilityReport rep =
            run_stability(p2, Perturbation::drift_shift, {0.4, 0.2, 0.1, 0.05}, {64}, McConfig{});
        const bool ok = rep.D_monotone && rep.ratio_bounded;
        return Outcome{ok, std::string(rep.D_monotone ? "D monotone" : "D not monotone") + ", max ratio " +
                               fmt("%.4f", rep.max_ratio_Y) + " vs first " + fmt("%.4f", rep.first_ratio_Y)};
    });

    criterion(6, "Euler-perturbation stability", 600.0, [&] {
        const StabilityReport rep = run_stability(p2, Perturbation::euler_vs_exact, {}, {8, 16, 32, 64}, McConfig{});
        const bool ok = rep.dx_slope && rep.y_slope && rep.dx_slope->slope >= 0.45 && rep.y_slope->slope >= 0.45;
        std::string d;
        if (rep.dx_slope) d += "proxy slope " + fmt("%.3f", rep.dx_slope->slope);
        if (rep.y_slope) d += ", D_Y slope " + fmt("%.3f", rep.y_slope->slope);
        return Outcome{ok, d};
    });

    criterion(7, "a priori bound", 120.0, [&] {
        bool ok = true;
        std::string d;
        for (const auto& name : preset_names()) {
            const ProblemSpec s = build_preset(name);
            const auto [g, r] = make_grid(64, s.T, ReflectionPolicy::all());
            const DiagnosticsReport rep = run_diagnostics(s, g, r, McConfig{});
            ok = ok && rep.passed && rep.tail_sum_max <= rep.bound;
            if (name == kPresetPureQuadratic) ok = ok && rep.tail_sum_max <= 7.390;
            d += (d.empty() ? "" : "; ") + name + " " + fmt("%.4f", rep.tail_sum_max) + " <= " + fmt("%.4f", rep.bound);
        }
        return Outcome{ok, d};
    });

    criterion(8, "truncation contract", 60.0, [&] {
        std::mt19937_64 rng(8);
        std::uniform_real_distribution<double> u(-6.0, 6.0), un(0.1, 4.0);
        bool ok = true;
        for (int k = 0; k < 100000 && ok; ++k) {
            const double n = un(rng), a = u(rng), b = u(rng);
            const double ha = smooth_truncation(a, n), hb = smooth_truncation(b, n);
            if (std::abs(a) <= n && ha != a) ok = false;
            if (std::abs(ha) > n + 1.0) ok = false;
            if (std::abs(ha - hb) > std::abs(a - b) * (1.0 + 1e-12)) ok = false;
        }
        std::string d = ok ? "h_n properties hold on 1e5 pairs" : "h_n property violated";
        const auto [g, r] = make_grid(32, p1.T, ReflectionPolicy::all());
        const PathBundle b = euler_simulate(p1, g, sample_increments(g, 20000, 42, 1));
        const BasisSpec basis = BasisSpec::polynomial(6);
        const double zmax = solve_backward(p1, g, r, b, basis, kWide).max_abs_z();
        const double R = zmax + 1.5;
        const SchemeSolution a = solve_backward(p1, g, r, b, basis, TruncationRadius::user(R));
        const SchemeSolution c = solve_backward(p1, g, r, b, basis, TruncationRadius::user(10.0 * R));
        const bool same = a.y_bar == c.y_bar && a.z_bar == c.z_bar && a.dk == c.dk;
        d += same ? ", radius R and 10R bit-identical (R = " + fmt("%.3f", R) + ")" : ", radius R and 10R differ";
        return Outcome{ok && same, d};
    });

    criterion(9, "discrete Skorokhod conditions", 0.0, [&] {
        bool ok = true;
        std::size_t solves = 0;
        for (const auto& name : preset_names()) {
            const ProblemSpec s = build_preset(name);
            for (auto policy : {ReflectionPolicy::all(), ReflectionPolicy::every(4), ReflectionPolicy::at({0.5})}) {
                const auto [g, r] = make_grid(32, s.T, policy);
                PathBundle b = exact_simulate(s, g, sample_increments(g, 10000, 9, s.m));
                b = euler_simulate(s, g, std::move(b));
                for (StateSource src : {StateSource::euler, StateSource::exact}) {
                    SolveOptions opts;
                    opts.states = src;
                    const BasisSpec basis = BasisSpec::polynomial(5);
                    const TruncationRadius radius = resolve_radius(std::nullopt, s, g, r, b, basis, opts);
                    const SchemeSolution sol = solve_backward(s, g, r, b, basis, radius, opts);
                    ok = ok && check_skorokhod(sol, s, r).passed();
                    ++solves;
                }
            }
        }
        return Outcome{ok, std::to_string(solves) + " solves checked with zero tolerance"};
    });

    criterion(10, "determinism across thread counts", 0.0, [&] {
        const char* configs[] = {
            R"({"grid": {"N": 16}, "mc": {"paths": 5000, "basis": {"degree": 4}}, "output": {"dump_paths": true}})",
            R"({"problem": {"preset": "P2-mixed-quadratic"}, "experiment": {"kind": "converge", "N_list": [4, 8, 16, 32]},
                "oracle": {"nodes": 201, "eval_paths": 2000}})",
            R"({"problem": {"preset": "P2-mixed-quadratic"}, "experiment": {"kind": "stability", "eps_list": [0.2, 0.1, 0.05]},
                "grid": {"N": 16}, "mc": {"paths": 5000, "basis": {"degree": 4}}})",
            R"({"experiment": {"kind": "oracle"}, "grid": {"N": 16}})",
        };
        const fs::path root = fs::temp_directory_path() / "qrbsde-acceptance-determinism";
        bool ok = true;
        int k = 0;
        for (const char* text : configs) {
            const RunConfig c = parse_config(text);
            std::string outputs[2];
            int t = 0;
            for (int threads : {1, 8}) {
                set_thread_count(threads);
                const fs::path dir = root / (std::to_string(k) + "-" + std::to_string(threads));
                fs::remove_all(dir);
                const RunResult res = run(c, dir);
                if (res.exit_code == kExitConfig || res.exit_code == kExitNumeric) ok = false;
                outputs[t++] = outputs_of(dir);
            }
            ok = ok && !outputs[0].empty() && outputs[0] == outputs[1];
            ++k;
        }
        set_thread_count(0);
        fs::remove_all(root);
        return Outcome{ok, std::to_string(k) + " configs compared at 1 and 8 threads"};
    });

    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
