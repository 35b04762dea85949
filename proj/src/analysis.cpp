#include "fedsim/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>

#include "fedsim/errors.hpp"
#include "fedsim/parallel.hpp"

namespace fedsim {

namespace {

MomentumReport momentum_residual_core(const RunConfig& config,
                                      const FederatedDataset& data,
                                      std::size_t replicates, std::size_t t_max) {
    if (replicates < 1) throw ConfigError("lemma check: M must be >= 1");
    if (t_max < 1) throw ConfigError("lemma check: t_max must be >= 1");

    RunConfig cfg = config;
    cfg.rounds = t_max + 1;

    const std::size_t d = cfg.dim;
    const double beta = cfg.beta();

    MomentumReport report;
    report.replicates = replicates;
    report.beta = beta;
    report.dim = d;
    report.insufficient_replicates = replicates < 100;
    report.residual.assign(t_max, ParamVector(d, 0.0));
    report.std_error.assign(t_max, ParamVector(d, 0.0));

    std::vector<ParamVector> sum(t_max, ParamVector(d, 0.0));
    std::vector<ParamVector> sum_sq(t_max, ParamVector(d, 0.0));
    double eta = 0.0;

    for (std::size_t m = 0; m < replicates; ++m) {
        TrainResult run = run_training(cfg, data, replicate_seed(cfg.seed, m));
        if (run.diverged)
            throw DivergenceError(run.diverged_round, "lemma replicate diverged");
        eta = run.eta_used;
        for (std::size_t t = 1; t <= t_max; ++t) {
            const RoundRecord& cur = run.records[t];
            const RoundRecord& prev = run.records[t - 1];
            for (std::size_t j = 0; j < d; ++j) {
                const double z = cur.delta_w[j] - beta * prev.delta_w[j] +
                                 (1.0 - beta) * eta * cur.true_grad[j];
                sum[t - 1][j] += z;
                sum_sq[t - 1][j] += z * z;
            }
        }
    }

    report.eta = eta;
    const double M = static_cast<double>(replicates);
    bool pass = true;
    for (std::size_t t = 0; t < t_max; ++t) {
        for (std::size_t j = 0; j < d; ++j) {
            const double mean = sum[t][j] / M;
            double var = 0.0;
            if (replicates > 1)
                var = std::max(0.0, (sum_sq[t][j] - sum[t][j] * sum[t][j] / M) / (M - 1.0));
            const double se = std::sqrt(var / M);
            report.residual[t][j] = mean;
            report.std_error[t][j] = se;
            report.max_abs_residual = std::max(report.max_abs_residual, std::abs(mean));
            const double ratio =
                se > 0.0 ? std::abs(mean) / se
                         : (std::abs(mean) <= 1e-10 ? 0.0
                                                    : std::numeric_limits<double>::infinity());
            report.max_sigma_ratio = std::max(report.max_sigma_ratio, ratio);
            if (std::abs(mean) > std::max(4.0 * se, 1e-10)) pass = false;
        }
    }
    report.pass = pass;
    return report;
}

}  // namespace

MomentumReport verify_lemma1(const RunConfig& config, const FederatedDataset& data,
                             std::size_t replicates, std::size_t t_max) {
    if (config.staleness != StalenessMode::synthetic)
        throw ConfigError(
            "verify_lemma1 requires synthetic staleness mode; "
            "use momentum_residual_diagnostic for emergent-mode residuals");
    return momentum_residual_core(config, data, replicates, t_max);
}

MomentumReport momentum_residual_diagnostic(const RunConfig& config,
                                            const FederatedDataset& data,
                                            std::size_t replicates, std::size_t t_max) {
    return momentum_residual_core(config, data, replicates, t_max);
}

double gradient_coherence(const std::vector<ParamVector>& grad_history,
                          std::size_t t, double epsilon_guard,
                          std::size_t* skipped) {
    if (t >= grad_history.size())
        throw ConfigError("gradient_coherence: t beyond history");
    const ParamVector& cur = grad_history[t];
    double mu = std::numeric_limits<double>::infinity();
    std::size_t local_skipped = 0;
    bool any = false;
    for (std::size_t s = 0; s <= t; ++s) {
        const double denom = norm_sq(grad_history[s]);
        if (denom < epsilon_guard) {
            ++local_skipped;
            continue;
        }
        mu = std::min(mu, dot(grad_history[s], cur) / denom);
        any = true;
    }
    if (skipped) *skipped += local_skipped;
    if (!any)
        throw NumericError("gradient_coherence: every round below the norm guard");
    return mu;
}

CoherenceSeries coherence_series(const std::vector<ParamVector>& grad_history,
                                 double epsilon_guard) {
    CoherenceSeries out;
    out.epsilon_guard = epsilon_guard;
    out.mu.reserve(grad_history.size());
    // stores the running infimum of the per-round coherence, which is the
    // quantity the convergence bound needs and is non-increasing by
    // construction
    double running = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < grad_history.size(); ++t) {
        running = std::min(
            running, gradient_coherence(grad_history, t, epsilon_guard, &out.skipped));
        out.mu.push_back(running);
    }
    out.mu_min = out.mu.empty() ? 0.0 : out.mu.back();
    return out;
}

double theorem_bound(double smoothness, double f0, double fstar, double sigma2,
                     double mu, double beta, std::size_t rounds) {
    if (!(smoothness > 0.0)) throw ConfigError("theorem_bound: L must be > 0");
    if (rounds < 1) throw ConfigError("theorem_bound: T must be >= 1");
    const double denom = 1.0 - (1.0 - mu) * beta;
    if (denom <= 0.0)
        throw NumericError(
            "theorem_bound inapplicable: 1 - (1-mu)*beta <= 0 "
            "(coherence too poor for this staleness level)");
    return 2.0 * std::sqrt(smoothness) * (f0 - fstar + sigma2) /
           (denom * std::sqrt(static_cast<double>(rounds)));
}

bool theorem_large_t_ok(double smoothness, double mu, double beta, std::size_t rounds) {
    const double denom = 1.0 - (1.0 - mu) * beta;
    return denom * std::sqrt(static_cast<double>(rounds) / smoothness) >= 2.0;
}

double min_grad_norm(const std::vector<RoundRecord>& records) {
    if (records.empty()) throw ConfigError("min_grad_norm: no records");
    double best = records.front().grad_norm_sq;
    for (const RoundRecord& r : records) best = std::min(best, r.grad_norm_sq);
    return best;
}

double min_avg_grad_norm(const std::vector<std::vector<RoundRecord>>& runs) {
    if (runs.empty()) throw ConfigError("min_avg_grad_norm: no runs");
    std::size_t rounds = runs.front().size();
    for (const auto& run : runs) rounds = std::min(rounds, run.size());
    if (rounds == 0) throw ConfigError("min_avg_grad_norm: empty run");
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < rounds; ++t) {
        double mean = 0.0;
        for (const auto& run : runs) mean += run[t].grad_norm_sq;
        mean /= static_cast<double>(runs.size());
        best = std::min(best, mean);
    }
    return best;
}

std::vector<BoundReport> check_theorem(const TheoremCheckConfig& check,
                                       const FederatedDataset& data) {
    const RunConfig& base = check.base;
    if (base.model.kind != LossKind::quadratic || !(base.model.lambda > 0.0))
        throw ConfigError("check_theorem: quadratic model with lambda > 0 required");
    if (base.staleness != StalenessMode::emergent)
        throw ConfigError("check_theorem: emergent staleness mode required");
    if (check.grid_n.empty() || check.grid_t.empty())
        throw ConfigError("check_theorem: empty grid axis");
    if (check.seeds < 1) throw ConfigError("check_theorem: seeds must be >= 1");

    const ParamVector w_star = quadratic_minimizer(base.model, data);
    const double fstar = global_loss(base.model, data, w_star);

    std::vector<BoundReport> reports;
    for (std::size_t N : check.grid_n) {
        for (std::size_t T : check.grid_t) {
            RunConfig cfg = base;
            cfg.per_round = N;
            cfg.rounds = T;
            cfg.eta_rule = EtaRule::theorem;

            std::vector<TrainResult> runs(check.seeds);
            parallel_for(check.seeds, check.threads, [&](std::size_t s) {
                runs[s] = run_training(cfg, data, replicate_seed(cfg.seed, s));
            });

            BoundReport rep;
            rep.per_round = N;
            rep.rounds = T;
            rep.beta = cfg.beta();
            rep.smoothness = runs[0].smoothness;
            rep.f0 = runs[0].records.empty() ? 0.0 : runs[0].records[0].f_w;
            rep.fstar = fstar;

            std::vector<std::vector<RoundRecord>> record_views;
            record_views.reserve(runs.size());
            bool any_diverged = false;
            for (auto& run : runs) {
                any_diverged |= run.diverged;
                record_views.push_back(std::move(run.records));
            }
            if (any_diverged)
                throw DivergenceError(T, "theorem-check replicate diverged");

            rep.measured_min_grad_norm_sq = min_avg_grad_norm(record_views);

            // coherence from the seed-averaged true-gradient trajectory
            std::vector<ParamVector> mean_grads(T, ParamVector(cfg.dim, 0.0));
            for (const auto& run : record_views)
                for (std::size_t t = 0; t < T; ++t)
                    axpy(1.0 / static_cast<double>(check.seeds), run[t].true_grad,
                         mean_grads[t]);
            rep.mu_raw = coherence_series(mean_grads).mu_min;
            rep.hypothesis_violated = !(rep.mu_raw > 0.0);
            rep.mu = rep.hypothesis_violated ? check.mu_floor : rep.mu_raw;

            // sigma^2 estimated at w0
            const ParamVector w0 =
                cfg.w0.empty() ? ParamVector(cfg.dim, 0.0) : cfg.w0;
            Sigma2Estimate at_w0 =
                estimate_sigma2(cfg.model, data, w0, cfg.local_steps,
                                check.sigma_draws, replicate_seed(cfg.seed, 0xabc));
            rep.sigma2 = at_w0.value;
            rep.sigma2_std_error = at_w0.std_error;

            rep.validity = theorem_large_t_ok(rep.smoothness, rep.mu, rep.beta, T);
            rep.checked = rep.validity && !rep.hypothesis_violated;
            rep.bound = theorem_bound(rep.smoothness, rep.f0, rep.fstar,
                                      rep.sigma2, rep.mu, rep.beta, T);
            rep.satisfied = rep.measured_min_grad_norm_sq <= rep.bound;
            reports.push_back(std::move(rep));
        }
    }
    return reports;
}

}  // namespace fedsim
