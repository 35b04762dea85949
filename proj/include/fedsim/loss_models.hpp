#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/rng.hpp"
#include "fedsim/vec.hpp"

namespace fedsim {

enum class LossKind { quadratic, logistic };

// Per-point loss with an optional ridge term (lambda defaults to 0):
//   quadratic: 1/2 (<x,w> - y)^2 + lambda/2 ||w||^2
//   logistic:  log(1 + exp(-y <x,w>)) + lambda/2 ||w||^2, labels in {-1,+1}
struct LossModel {
    LossKind kind = LossKind::quadratic;
    double lambda = 0.0;
};

// One client's shard, stored row-major for contiguous dot/axpy access.
struct DatasetShard {
    std::size_t owner = 0;  // client index, 0-based
    std::size_t dim = 0;
    std::vector<double> features;  // size() * dim
    std::vector<double> labels;

    std::size_t size() const { return labels.size(); }
    std::span<const double> x(std::size_t i) const {
        return {features.data() + i * dim, dim};
    }
    double y(std::size_t i) const { return labels[i]; }
};

struct FederatedDataset {
    std::vector<DatasetShard> shards;
    std::vector<double> weights;  // p_k = n_k / n
    std::size_t total = 0;
    std::size_t dim = 0;

    std::size_t num_clients() const { return shards.size(); }
    void validate() const;  // throws ConfigError on broken invariants
};

enum class Partition { iid, label_skew };

struct GeneratedData {
    FederatedDataset data;
    ParamVector w_star;  // planted parameter
};

GeneratedData generate_dataset(const LossModel& model, std::size_t num_clients,
                               std::size_t n_per_client, std::size_t dim,
                               Partition partition, double noise_std,
                               std::uint64_t seed);

double point_loss(const LossModel& model, const ParamVector& w,
                  std::span<const double> x, double y);

ParamVector point_grad(const LossModel& model, const ParamVector& w,
                       std::span<const double> x, double y);

// Adds coef * grad of the data-dependent part into out, and the matching
// regularizer contribution. Used by the sampling loops to avoid temporaries.
void point_grad_accum(const LossModel& model, const ParamVector& w,
                      std::span<const double> x, double y, double coef,
                      ParamVector& out);

double local_loss(const LossModel& model, const DatasetShard& shard,
                  const ParamVector& w);
ParamVector local_grad(const LossModel& model, const DatasetShard& shard,
                       const ParamVector& w);

double global_loss(const LossModel& model, const FederatedDataset& fed,
                   const ParamVector& w);
ParamVector global_grad(const LossModel& model, const FederatedDataset& fed,
                        const ParamVector& w);

// Smoothness constant valid for every local gradient:
//   quadratic: max_k lambda_max((1/n_k) X_k^T X_k) + lambda
//   logistic:  max_k 1/4 lambda_max((1/n_k) X_k^T X_k) + lambda
// lambda_max by power iteration (rel. tol 1e-8, at most 10000 steps).
double smoothness_constant(const LossModel& model, const FederatedDataset& fed);

struct Sigma2Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

// Empirical E||sum_k p_k g_k - grad f(w)||^2 with H-sample client gradients,
// averaged over `draws` independent resamplings. exhaustive=true replaces
// sampling with a full pass (a zero-variance oracle, not part of training).
Sigma2Estimate estimate_sigma2(const LossModel& model, const FederatedDataset& fed,
                               const ParamVector& w, std::size_t batch_size,
                               std::size_t draws, std::uint64_t seed,
                               bool exhaustive = false);

// Closed-form ridge minimizer (X^T X / n + lambda I)^{-1} X^T y / n for the
// quadratic model. Requires lambda > 0 or a full-rank design.
ParamVector quadratic_minimizer(const LossModel& model, const FederatedDataset& fed);

}  // namespace fedsim
