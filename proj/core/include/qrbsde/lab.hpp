#pragma once

#include "qrbsde/forward.hpp"
#include "qrbsde/model.hpp"
#include "qrbsde/oracle.hpp"
#include "qrbsde/regress.hpp"
#include "qrbsde/scheme.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace qrbsde {

/// OLS of log(err) on log(h) with a two-sided 95% Student-t band for the slope.
struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double std_error = 0.0;
    double band_lo = 0.0;
    double band_hi = 0.0;
    std::size_t points = 0;
};

/// Errors: fewer than 3 points, size mismatch, any value <= 0.
SlopeFit slope_fit(std::span<const double> h, std::span<const double> err);

struct McConfig {
    std::size_t paths = 50000;
    std::uint64_t seed = 42;
    BasisSpec basis;
    std::optional<double> Mz;  // empty: auto
    bool z_control_variate = false;
};

enum class ConvergenceEstimator {
    lsmc,  // solve_backward on simulated paths
    grid,  // exact_scheme_solve: time discretization only
};

enum class OracleKind {
    automatic,  // Snell/Cole-Hopf for the pure quadratic driver, exact scheme otherwise
    snell_cole_hopf,
    exact_scheme,
};

std::string to_string(ConvergenceEstimator e);
std::string to_string(OracleKind o);

struct ConvergenceRow {
    std::size_t N = 0;      // or kappa in a reflection sweep
    double h = 0.0;         // |pi| or |R|
    double y0 = 0.0;        // estimate on this cell
    double y0_se = 0.0;     // Monte Carlo SE, 0 for grid estimates
    double y0_reference = 0.0;
    double y0_error = 0.0;  // |y0 - y0_reference|
    double y_sup_error = 0.0;  // max_i ||Y_i - y_ref(t_i, X_i)||_{L2(sample)}
    double z_error = 0.0;      // sum_i ||Z_i - z_ref(t_i, X_i)||^2 dt
};

struct ConvergenceReport {
    std::string experiment;  // "convergence" | "reflection-sweep"
    std::string estimator;
    std::string reference;  // oracle used for Y
    std::size_t reference_N = 0;
    double y0_reference = 0.0;
    std::vector<ConvergenceRow> rows;
    std::optional<SlopeFit> y0_slope;
    std::optional<SlopeFit> y_sup_slope;
    std::optional<SlopeFit> z_slope;
    bool y0_error_monotone = false;  // decreasing along rows
    bool z_error_monotone = false;
    bool y0_monotone = false;        // reflection sweep: Y0 nondecreasing along rows, 1e-10
    bool nodewise_monotone = false;  // reflection sweep: nested schedules ordered at every node
    bool floor_limited = false;
    bool skorokhod_passed = true;
    std::vector<std::string> warnings;
};

struct OracleOptions {
    OracleKind kind = OracleKind::automatic;
    SpaceGridOptions space;
    // Euler sample on which grid solutions are compared in L2
    std::size_t eval_paths = 20000;
    std::uint64_t eval_seed = 42;
};

/// Solves with R = pi for each N (ascending, >= 4 entries) and compares with
/// oracle references at 2 max(N).
ConvergenceReport run_convergence(const ProblemSpec& spec, const std::vector<std::size_t>& N_list,
                                  const McConfig& mc, const OracleOptions& oracle,
                                  ConvergenceEstimator estimator = ConvergenceEstimator::grid);

/// Fixed N, R = every (N / kappa)-th grid time. Rows in ascending kappa; the
/// reference is R = pi on the same grid. Errors: kappa not dividing N.
ConvergenceReport run_discrete_reflection_sweep(const ProblemSpec& spec, std::size_t N,
                                                const std::vector<std::size_t>& kappa_list,
                                                const OracleOptions& oracle);

enum class Perturbation { drift_shift, euler_vs_exact };

std::string to_string(Perturbation p);

struct StabilityRow {
    double level = 0.0;  // epsilon, or |pi|
    std::size_t N = 0;
    double dx_proxy = 0.0;  // (E sup_i |dX|^4)^(1/4)
    double D_Y = 0.0;       // E sup_i |dY|^2
    double D_Z = 0.0;       // E sum_i |dZ|^2 dt
    double D_K = 0.0;       // E |dK_T|^2
    double ratio_Y = 0.0;   // D / dx_proxy
    double ratio_Z = 0.0;
    double ratio_K = 0.0;
    double y0_base = 0.0;
    double y0_perturbed = 0.0;
    std::uint64_t checksum = 0;  // increments shared by both legs
};

struct StabilityReport {
    std::string perturbation;
    std::size_t paths = 0;
    std::uint64_t seed = 0;
    std::vector<StabilityRow> rows;
    std::optional<SlopeFit> dx_slope;  // log dx_proxy vs log level
    std::optional<SlopeFit> y_slope;   // log D_Y vs log dx_proxy (drift shift) or log |pi| (euler)
    std::optional<SlopeFit> z_slope;
    std::optional<SlopeFit> k_slope;
    bool D_monotone = false;  // D_Y, D_Z, D_K all decrease along rows
    double max_ratio_Y = 0.0;
    double first_ratio_Y = 0.0;
    bool ratio_bounded = false;  // max ratio <= 2 x ratio at the first (largest) level
    bool skorokhod_passed = true;
    std::vector<std::string> warnings;
};

/// drift_shift: levels are epsilon values (decreasing), the grid has `N`
/// steps and both legs use exact simulation on the same increments.
/// euler_vs_exact: levels are ignored and N_list gives the grids; the legs
/// are Euler and exact states on the same increments.
StabilityReport run_stability(const ProblemSpec& spec, Perturbation kind, const std::vector<double>& eps_list,
                              const std::vector<std::size_t>& N_list, const McConfig& mc);

struct MomentRow {
    double p = 1.0;
    double z_energy = 0.0;  // E[(sum |Z|^2 dt)^p]
    double z_energy_se = 0.0;
    double k_total = 0.0;  // E[K_T^p]
    double k_total_se = 0.0;
};

struct DiagnosticsReport {
    double tail_sum_max = 0.0;  // max_i of the 99th percentile of E_i[sum_{j>=i} |Z_j|^2 dt]
    std::size_t tail_sum_argmax = 0;
    std::vector<double> tail_sum_q99;  // per step
    double bound = 0.0;                // exp(4 alpha M) / alpha^2 [1 + 2 alpha M_f (1 + M) T]
    bool passed = false;
    std::vector<MomentRow> moments;
    double y0 = 0.0;
    double y0_se = 0.0;
    double max_abs_z = 0.0;
    bool skorokhod_passed = true;
};

/// The a priori BMO bound from spec constants only.
double bmo_bound(const ProblemSpec& spec);

DiagnosticsReport run_diagnostics(const ProblemSpec& spec, const TimeGrid& grid, const ReflectionSchedule& schedule,
                                  const McConfig& mc);

/// Same, from an existing solution.
DiagnosticsReport diagnose_solution(const ProblemSpec& spec, const TimeGrid& grid, const ReflectionSchedule& schedule,
                                    const SchemeSolution& solution, const BasisSpec& basis);

// Output. Column sets are fixed; see docs/outputs.md.
void write_convergence_csv(std::ostream& out, const ConvergenceReport& report);
void write_stability_csv(std::ostream& out, const StabilityReport& report);
void write_diagnostics_csv(std::ostream& out, const DiagnosticsReport& report);
/// h, err, fit: one block per fitted quantity.
void write_plot_csv(std::ostream& out, const ConvergenceReport& report);

nlohmann::json to_json(const SlopeFit& fit);
nlohmann::json to_json(const ConvergenceReport& report);
nlohmann::json to_json(const StabilityReport& report);
nlohmann::json to_json(const DiagnosticsReport& report);

}  // namespace qrbsde
