#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/fedsgd.hpp"

namespace fedsim {

enum class ExperimentMode { train, staleness, lemma1, theorem, sweep };

// One experiment description, parsed from a flat key-value file:
//
//   # comment
//   name = demo
//   mode = train            (train | staleness | lemma1 | theorem | sweep)
//   model = quadratic       (quadratic | logistic)
//   K = 10   N = 2   H = 1   T = 100   d = 2   n_per_client = 20
//   lambda = 0.0
//   noise_std = 0.1
//   partition = iid         (iid | label_skew)
//   staleness = emergent    (emergent | synthetic)
//   eta_rule = theorem      (theorem | fixed; fixed requires eta = <value>)
//   seed = 1
//   seeds = 1               (replicates for averaged modes)
//   warm_start = false
//   history_window = 200
//   replicates = 2000       (lemma1 only: M)
//   t_max = 20              (lemma1 only)
//   tv_threshold = 0.01     (staleness only)
//   tv_truncate = 100       (staleness only)
//   grad_threshold = 1e-4   (sweep rounds-to-threshold metric)
//   grid.N = 5,20,80        (sweep/theorem axes; one level of lists, no nesting)
//   grid.T = 100,400
//   grid.H = 1
//   grid.seed = 1,2,3
//
// One `key = value` per line, duplicate and unknown keys rejected.
struct ExperimentSpec {
    std::string name = "experiment";
    ExperimentMode mode = ExperimentMode::train;
    RunConfig run;
    std::size_t seeds = 1;
    std::size_t replicates = 2000;
    std::size_t t_max = 20;
    double tv_threshold = 0.01;
    std::uint64_t tv_truncate = 100;
    double grad_threshold = 1e-4;
    std::vector<std::size_t> grid_n;
    std::vector<std::size_t> grid_t;
    std::vector<std::size_t> grid_h;
    std::vector<std::uint64_t> grid_seed;

    void validate() const;  // semantic checks beyond the grammar
};

ExperimentSpec parse_spec(const std::string& text);
ExperimentSpec load_spec(const std::string& path);

// Canonical one-line-per-key rendering; identical specs hash identically.
std::string canonical_spec(const ExperimentSpec& spec);
std::string spec_hash(const ExperimentSpec& spec);  // hex FNV-1a 64

}  // namespace fedsim
