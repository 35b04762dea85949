#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "fedsim/loss_models.hpp"
#include "fedsim/staleness.hpp"
#include "fedsim/vec.hpp"

namespace fedsim {

enum class EtaRule { fixed, theorem };

struct RunConfig {
    std::size_t num_clients = 10;      // K
    std::size_t per_round = 2;         // N
    std::size_t local_steps = 1;       // H
    std::size_t rounds = 100;          // T
    std::size_t dim = 2;               // d
    std::size_t n_per_client = 20;
    LossModel model;
    Partition partition = Partition::iid;
    double noise_std = 0.1;
    StalenessMode staleness = StalenessMode::emergent;
    double eta = 0.0;                  // used when eta_rule == fixed
    EtaRule eta_rule = EtaRule::theorem;  // theorem: eta = 1/sqrt(L T)
    std::uint64_t seed = 1;
    bool warm_start = false;           // round 0 refreshes every client
    std::size_t history_window = 200;  // synthetic-mode w history depth
    bool record_w = false;
    // When false, f(w^t) and the true gradient are not evaluated per round
    // (telemetry only; the trajectory itself is unchanged). Used by long
    // staleness-law runs where the full-dataset pass would dominate.
    bool telemetry = true;
    ParamVector w0;                    // empty -> zero vector

    SelectionPlan plan() const {
        return {num_clients, per_round, staleness};
    }
    double beta() const { return plan().beta(); }
    void validate() const;
};

struct ClientState {
    const DatasetShard* shard = nullptr;
    ParamVector last_gradient;     // g_k as the server holds it
    std::uint64_t staleness = 0;
    std::size_t computed_round = 0;  // round at which last_gradient was computed
    bool ever_computed = false;
};

struct ServerState {
    ParamVector w;
    std::size_t round = 0;
    ParamVector g_agg;
};

struct RoundRecord {
    std::size_t t = 0;
    double f_w = 0.0;              // f(w^t), before the update
    double grad_norm_sq = 0.0;     // ||grad f(w^t)||^2
    ParamVector true_grad;
    ParamVector g_agg;
    ParamVector delta_w;           // w^{t+1} - w^t, equal to -eta * g_agg
    std::optional<ParamVector> w_snapshot;
    std::vector<std::uint32_t> selected;
    std::vector<std::uint64_t> staleness;
    double coherence = 0.0;        // filled by the analysis pass
};

struct TrainResult {
    std::vector<RoundRecord> records;
    ParamVector w_final;
    double eta_used = 0.0;
    double smoothness = 0.0;       // L used by the theorem step-size rule
    std::size_t clamped_draws = 0; // synthetic draws clipped to the history window
    bool diverged = false;
    std::size_t diverged_round = 0;
};

// One H-sample stochastic gradient at the broadcast w (all samples evaluated
// at the same w; a size-H minibatch, not local SGD steps).
ParamVector local_gradient_estimate(const LossModel& model, const DatasetShard& shard,
                                    const ParamVector& w, std::size_t local_steps,
                                    Rng& rng);

// sum_k weights[k] * gradients[k]
ParamVector aggregate(const std::vector<ParamVector>& gradients,
                      const std::vector<double>& weights);

// w - eta * g, with divergence detection.
ParamVector server_update(const ParamVector& w, const ParamVector& g, double eta);

// Full training loop over an externally supplied dataset; run_seed drives the
// selection/sampling/staleness randomness (dataset randomness is separate).
TrainResult run_training(const RunConfig& config, const FederatedDataset& data,
                         std::uint64_t run_seed);

// Convenience: generates the dataset from config.seed and trains with the
// same seed for the run randomness.
TrainResult run_training(const RunConfig& config);

// Incremental driver used by run_training and the analysis suite.
class Trainer {
public:
    Trainer(const RunConfig& config, const FederatedDataset& data,
            std::uint64_t run_seed);

    RoundRecord step();  // executes round `round()`, returns its record
    const ServerState& server() const { return server_; }
    const std::vector<ClientState>& clients() const { return clients_; }
    const StalenessTracker& tracker() const { return tracker_; }
    std::size_t round() const { return server_.round; }
    double eta() const { return eta_; }
    double smoothness() const { return smoothness_; }
    std::size_t clamped_draws() const { return clamped_; }

private:
    const RunConfig config_;
    const FederatedDataset& data_;
    std::uint64_t run_seed_;
    double eta_ = 0.0;
    double smoothness_ = 0.0;
    ServerState server_;
    std::vector<ClientState> clients_;
    StalenessTracker tracker_;
    std::deque<ParamVector> history_;  // w^{t - window + 1} .. w^t (synthetic mode)
    std::size_t clamped_ = 0;
};

}  // namespace fedsim
