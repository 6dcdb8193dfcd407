#pragma once

#include "qrbsde/config.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace qrbsde {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitFlags = 4;

const char* version();

/// $QRBSDE_OUT (or ./qrbsde-runs) / <experiment>-<config hash prefix>.
std::filesystem::path default_output_dir(const RunConfig& config);

struct RunResult {
    int exit_code = kExitOk;
    std::filesystem::path out_dir;
    nlohmann::json summary;   // what went to summary.json
    nlohmann::json manifest;  // what went to manifest.json
    std::string error;        // stage-qualified message when exit_code is 2 or 3
};

/// Dispatches on config.experiment.kind and writes summary.json, CSV tables
/// and manifest.json into `out_dir`. Module errors are caught, recorded in a
/// "failed" manifest and mapped to exit codes 2 (config) and 3 (numeric);
/// a false pass flag gives 4.
RunResult run(const RunConfig& config, const std::filesystem::path& out_dir);

}  // namespace qrbsde
