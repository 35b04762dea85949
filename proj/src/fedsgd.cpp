#include "fedsim/fedsgd.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/errors.hpp"

namespace fedsim {

namespace {
constexpr double kDivergenceNorm = 1e12;
}

void RunConfig::validate() const {
    plan().validate();
    if (local_steps < 1) throw ConfigError("H must be >= 1");
    if (dim < 1) throw ConfigError("d must be >= 1");
    if (n_per_client < 1) throw ConfigError("n_per_client must be >= 1");
    if (eta_rule == EtaRule::fixed && !(eta > 0.0))
        throw ConfigError("eta must be > 0 under the fixed step-size rule");
    if (!w0.empty() && w0.size() != dim)
        throw ConfigError("w0 dimension does not match d");
    if (history_window < 1) throw ConfigError("history_window must be >= 1");
}

ParamVector local_gradient_estimate(const LossModel& model, const DatasetShard& shard,
                                    const ParamVector& w, std::size_t local_steps,
                                    Rng& rng) {
    if (shard.size() == 0) throw ConfigError("local_gradient_estimate: empty shard");
    if (local_steps < 1) throw ConfigError("local_gradient_estimate: H must be >= 1");
    ParamVector g(w.size(), 0.0);
    const double coef = 1.0 / static_cast<double>(local_steps);
    for (std::size_t s = 0; s < local_steps; ++s) {
        const std::size_t i = rng.uniform_int(shard.size());
        point_grad_accum(model, w, shard.x(i), shard.y(i), coef, g);
    }
    return g;
}

ParamVector aggregate(const std::vector<ParamVector>& gradients,
                      const std::vector<double>& weights) {
    if (gradients.empty() || gradients.size() != weights.size())
        throw ShapeError("aggregate: gradient/weight count mismatch");
    ParamVector out(gradients.front().size(), 0.0);
    for (std::size_t k = 0; k < gradients.size(); ++k) {
        check_same_dim(gradients[k].size(), out.size(), "aggregate");
        axpy(weights[k], gradients[k], out);
    }
    return out;
}

ParamVector server_update(const ParamVector& w, const ParamVector& g, double eta) {
    check_same_dim(w.size(), g.size(), "server_update");
    // scale-then-add, matching the trainer's rounding path so that replaying
    // recorded aggregates reproduces the trajectory bit-exactly
    ParamVector delta = g;
    scale(-eta, delta);
    ParamVector out = w;
    axpy(1.0, delta, out);
    if (!all_finite(out))
        throw NumericError("server_update produced a non-finite parameter");
    return out;
}

Trainer::Trainer(const RunConfig& config, const FederatedDataset& data,
                 std::uint64_t run_seed)
    : config_(config), data_(data), run_seed_(run_seed),
      tracker_(config.num_clients) {
    config_.validate();
    data_.validate();
    if (data_.num_clients() != config_.num_clients)
        throw ConfigError("dataset client count does not match K");
    if (data_.dim != config_.dim)
        throw ConfigError("dataset dimension does not match d");

    if (config_.eta_rule == EtaRule::theorem) {
        smoothness_ = smoothness_constant(config_.model, data_);
        if (!(smoothness_ > 0.0))
            throw NumericError("smoothness constant is zero; theorem step size undefined");
        const double T = static_cast<double>(std::max<std::size_t>(config_.rounds, 1));
        eta_ = 1.0 / std::sqrt(smoothness_ * T);
    } else {
        eta_ = config_.eta;
    }

    server_.w = config_.w0.empty() ? ParamVector(config_.dim, 0.0) : config_.w0;
    server_.g_agg.assign(config_.dim, 0.0);
    clients_.resize(config_.num_clients);
    for (std::size_t k = 0; k < clients_.size(); ++k) {
        clients_[k].shard = &data_.shards[k];
        clients_[k].last_gradient.assign(config_.dim, 0.0);
    }
    if (config_.staleness == StalenessMode::synthetic)
        history_.push_back(server_.w);
}

RoundRecord Trainer::step() {
    const std::size_t t = server_.round;
    RoundRecord rec;
    rec.t = t;
    if (config_.telemetry) {
        rec.f_w = global_loss(config_.model, data_, server_.w);
        rec.true_grad = global_grad(config_.model, data_, server_.w);
        rec.grad_norm_sq = norm_sq(rec.true_grad);
    }
    if (config_.record_w) rec.w_snapshot = server_.w;

    if (config_.staleness == StalenessMode::emergent) {
        if (config_.warm_start && t == 0) {
            rec.selected.resize(config_.num_clients);
            for (std::size_t k = 0; k < config_.num_clients; ++k)
                rec.selected[k] = static_cast<std::uint32_t>(k);
        } else {
            Rng rng = make_stream(run_seed_, stream::kSelection, t);
            rec.selected = sample_clients(config_.plan(), rng);
        }
        for (std::uint32_t k : rec.selected) {
            Rng rng = make_stream(run_seed_, stream::kLocalSample, t, k);
            clients_[k].last_gradient = local_gradient_estimate(
                config_.model, *clients_[k].shard, server_.w, config_.local_steps, rng);
            clients_[k].computed_round = t;
            clients_[k].ever_computed = true;
        }
        std::vector<ParamVector> held;
        held.reserve(clients_.size());
        for (const ClientState& c : clients_) held.push_back(c.last_gradient);
        server_.g_agg = aggregate(held, data_.weights);
        tracker_.advance(rec.selected);
        for (std::size_t k = 0; k < clients_.size(); ++k)
            clients_[k].staleness = tracker_.tau[k];
        rec.staleness = tracker_.tau;
    } else {
        Rng srng = make_stream(run_seed_, stream::kSyntheticStaleness, t);
        rec.staleness = sample_synthetic_staleness(config_.plan(), srng);
        const std::size_t floor =
            (t + 1 > history_.size()) ? t + 1 - history_.size() : 0;
        std::vector<ParamVector> grads;
        grads.reserve(config_.num_clients);
        for (std::size_t k = 0; k < config_.num_clients; ++k) {
            const std::uint64_t tau = rec.staleness[k];
            std::size_t s = (tau > t) ? 0 : t - static_cast<std::size_t>(tau);
            if (s < floor) {
                s = floor;
                ++clamped_;
            }
            const ParamVector& w_hist = history_[s - floor];
            Rng rng = make_stream(run_seed_, stream::kLocalSample, t, k);
            grads.push_back(local_gradient_estimate(
                config_.model, data_.shards[k], w_hist, config_.local_steps, rng));
        }
        server_.g_agg = aggregate(grads, data_.weights);
    }

    rec.g_agg = server_.g_agg;
    rec.delta_w = server_.g_agg;
    scale(-eta_, rec.delta_w);
    ParamVector w_next = server_.w;
    axpy(1.0, rec.delta_w, w_next);
    if (!all_finite(w_next) || norm(w_next) > kDivergenceNorm)
        throw DivergenceError(t, "parameter vector non-finite or exceeding 1e12");

    server_.w = std::move(w_next);
    server_.round = t + 1;
    if (config_.staleness == StalenessMode::synthetic) {
        history_.push_back(server_.w);
        while (history_.size() > config_.history_window) history_.pop_front();
    }
    return rec;
}

TrainResult run_training(const RunConfig& config, const FederatedDataset& data,
                         std::uint64_t run_seed) {
    Trainer trainer(config, data, run_seed);
    TrainResult result;
    result.eta_used = trainer.eta();
    result.smoothness = trainer.smoothness();
    result.records.reserve(config.rounds);
    for (std::size_t t = 0; t < config.rounds; ++t) {
        try {
            result.records.push_back(trainer.step());
        } catch (const DivergenceError& e) {
            result.diverged = true;
            result.diverged_round = e.round;
            break;
        }
    }
    result.w_final = trainer.server().w;
    result.clamped_draws = trainer.clamped_draws();
    return result;
}

TrainResult run_training(const RunConfig& config) {
    GeneratedData gen = generate_dataset(config.model, config.num_clients,
                                         config.n_per_client, config.dim,
                                         config.partition, config.noise_std,
                                         config.seed);
    return run_training(config, gen.data, config.seed);
}

}  // namespace fedsim
