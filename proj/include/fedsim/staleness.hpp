#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedsim/rng.hpp"

namespace fedsim {

enum class StalenessMode { emergent, synthetic };

// K clients, N selected per round. beta = 1 - N/K drives both the geometric
// staleness law and the implicit-momentum coefficient.
struct SelectionPlan {
    std::size_t total_clients = 0;
    std::size_t per_round = 0;
    StalenessMode mode = StalenessMode::emergent;

    double beta() const {
        return 1.0 - static_cast<double>(per_round) / static_cast<double>(total_clients);
    }
    void validate() const;
};

// Uniform over all C(K, N) subsets, without replacement. Returned sorted.
std::vector<std::uint32_t> sample_clients(const SelectionPlan& plan, Rng& rng);

// P(tau = l) = beta^l (1 - beta)
double geometric_pmf(double beta, std::uint64_t l);

// Inverse-CDF geometric draw on one uniform variate.
std::uint64_t sample_geometric(double beta, Rng& rng);

// One i.i.d. staleness vector for all K clients (synthetic mode).
std::vector<std::uint64_t> sample_synthetic_staleness(const SelectionPlan& plan, Rng& rng);

// Rounds since each client's gradient was refreshed (emergent mode).
struct StalenessTracker {
    std::vector<std::uint64_t> tau;

    explicit StalenessTracker(std::size_t num_clients) : tau(num_clients, 0) {}

    // tau[k] <- 0 for selected, tau[k]+1 otherwise.
    void advance(const std::vector<std::uint32_t>& selected);
};

// 0.5 * sum |p - q| over l in [0, truncate], with mass beyond the cutoff
// pooled into one overflow bin on both sides.
double staleness_tv_distance(const std::vector<std::uint64_t>& samples, double beta,
                             std::uint64_t truncate);

}  // namespace fedsim
