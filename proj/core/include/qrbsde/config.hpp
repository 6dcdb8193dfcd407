#pragma once

#include "qrbsde/forward.hpp"
#include "qrbsde/lab.hpp"
#include "qrbsde/model.hpp"
#include "qrbsde/oracle.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qrbsde {

inline constexpr int kSchemaVersion = 1;

enum class ExperimentKind { solve, converge, reflection_sweep, stability, diagnose, oracle, validate };

std::string to_string(ExperimentKind kind);
/// Accepts the subcommand spellings (reflect-sweep is an alias of reflection-sweep).
ExperimentKind parse_experiment_kind(const std::string& name);

enum class OracleMethod { exact_scheme, snell_cole_hopf, brute_force };

struct ProblemConfig {
    std::string preset = kPresetPureQuadratic;
    Overrides overrides;
};

struct GridConfig {
    std::size_t N = 64;
    std::optional<double> T;  // overrides the preset horizon
    ReflectionPolicy reflection;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::solve;
    // converge
    std::vector<std::size_t> N_list{8, 16, 32, 64, 128};
    ConvergenceEstimator estimator = ConvergenceEstimator::grid;
    OracleKind oracle = OracleKind::automatic;
    // reflection-sweep
    std::vector<std::size_t> kappa_list{4, 8, 16, 32, 64};
    // stability
    Perturbation perturbation = Perturbation::drift_shift;
    std::vector<double> eps_list{0.4, 0.2, 0.1, 0.05};
    // oracle
    OracleMethod method = OracleMethod::exact_scheme;
    std::size_t brute_force_order = 5;
    // pass threshold on fitted slopes; experiment-specific default when empty
    std::optional<double> min_slope;
};

struct OutputConfig {
    std::optional<std::string> dir;
    bool json = true;
    bool csv = true;
    bool dump_paths = false;
};

struct RunConfig {
    ProblemConfig problem;
    GridConfig grid;
    McConfig mc;
    OracleOptions oracle;
    ExperimentConfig experiment;
    OutputConfig output;

    ProblemSpec spec() const;
};

/// Strict parse of a JSON document: unknown keys and type mismatches are
/// ConfigErrors naming the JSON pointer. Defaults: N = 64, paths = 50000,
/// seed = 42, polynomial degree 6, reflection at every grid time, M_z auto.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Precondition gate: L T / N < 1 (the implicit step is a contraction) and
/// paths >= 10 x basis dimension.
void validate_config(const RunConfig& config);

/// Canonical form: every field, defaults filled in, keys sorted.
nlohmann::json to_json(const RunConfig& config);

/// FNV-1a of the canonical dump; stable under key reordering of the input.
std::string config_hash(const RunConfig& config);

/// Preset, overrides and the resulting constants.
nlohmann::json to_json(const ProblemSpec& spec);
/// Inverse of to_json(ProblemSpec): rebuilds from preset and overrides.
ProblemSpec spec_from_json(const nlohmann::json& j);

}  // namespace qrbsde
