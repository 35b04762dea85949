#pragma once

#include <string>
#include <vector>

#include "fedsim/config.hpp"

namespace fedsim {

inline constexpr const char* kVersion = "fedsim 0.1.0";
inline constexpr int kSummarySchemaVersion = 1;

struct HarnessOptions {
    std::string out_dir = "out";
    std::size_t threads = 1;  // must not affect any output byte
    bool quiet = false;
};

struct ResultManifest {
    std::string spec_hash;
    std::vector<std::string> csv_paths;
    std::string summary_path;
    double wall_clock_seconds = 0.0;  // in-memory only; never persisted
    std::string version = kVersion;
    bool passed = false;
};

// Executes one experiment. Throws ConfigError / DivergenceError; on
// divergence, partial outputs are kept next to a `.partial` marker.
ResultManifest run_experiment(const ExperimentSpec& spec, const HarnessOptions& opts);

// Cartesian product over the spec's grid axes; failed cells are recorded and
// the sweep continues. `all_passed` is false if any cell failed or missed an
// asserted check.
struct SweepResult {
    std::vector<ResultManifest> cells;
    std::string table_path;
    bool all_passed = false;
};

SweepResult sweep_experiment(const ExperimentSpec& spec, const HarnessOptions& opts);

}  // namespace fedsim
