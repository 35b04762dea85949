#include "fedsim/loss_models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsim/errors.hpp"

namespace fedsim {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double softplus(double z) {
    if (z > 0.0) return z + std::log1p(std::exp(-z));
    return std::log1p(std::exp(z));
}

}  // namespace

void FederatedDataset::validate() const {
    if (shards.empty()) throw ConfigError("dataset has no shards");
    if (weights.size() != shards.size())
        throw ConfigError("weight/shard count mismatch");
    std::size_t n = 0;
    double wsum = 0.0;
    for (std::size_t k = 0; k < shards.size(); ++k) {
        if (shards[k].size() == 0)
            throw ConfigError("empty shard for client " + std::to_string(k));
        if (shards[k].dim != dim) throw ConfigError("shard dimension mismatch");
        n += shards[k].size();
        wsum += weights[k];
    }
    if (n != total) throw ConfigError("total point count mismatch");
    if (std::abs(wsum - 1.0) > 1e-12)
        throw ConfigError("shard weights do not sum to 1");
}

GeneratedData generate_dataset(const LossModel& model, std::size_t num_clients,
                               std::size_t n_per_client, std::size_t dim,
                               Partition partition, double noise_std,
                               std::uint64_t seed) {
    if (num_clients < 1 || n_per_client < 1 || dim < 1)
        throw ConfigError("generate_dataset: K, n_per_client and d must be >= 1");
    if (noise_std < 0.0) throw ConfigError("generate_dataset: noise_std must be >= 0");
    if (partition == Partition::label_skew && model.kind == LossKind::quadratic)
        throw ConfigError("generate_dataset: label_skew requires the logistic model");
    if (model.kind == LossKind::logistic && noise_std > 0.5)
        throw ConfigError("generate_dataset: logistic flip probability (noise_std) must be <= 0.5");

    GeneratedData out;
    out.w_star.resize(dim);
    Rng wrng = make_stream(seed, stream::kDataGen, ~std::uint64_t{0});
    for (double& v : out.w_star) v = wrng.normal();

    out.data.dim = dim;
    out.data.total = num_clients * n_per_client;
    out.data.shards.resize(num_clients);
    out.data.weights.assign(num_clients, 1.0 / static_cast<double>(num_clients));

    for (std::size_t k = 0; k < num_clients; ++k) {
        DatasetShard& shard = out.data.shards[k];
        shard.owner = k;
        shard.dim = dim;
        shard.features.resize(n_per_client * dim);
        shard.labels.resize(n_per_client);
        Rng rng = make_stream(seed, stream::kDataGen, k);
        // Shards with even index over-represent +1, odd over-represent -1.
        const double preferred = (k % 2 == 0) ? 1.0 : -1.0;

        for (std::size_t i = 0; i < n_per_client; ++i) {
            double* row = shard.features.data() + i * dim;
            const bool want_preferred =
                partition == Partition::label_skew && rng.uniform() < 0.8;
            const bool want_other =
                partition == Partition::label_skew && !want_preferred;
            for (int attempt = 0;; ++attempt) {
                for (std::size_t j = 0; j < dim; ++j) row[j] = rng.normal();
                const double margin =
                    simd::dot(row, out.w_star.data(), dim);
                if (model.kind == LossKind::quadratic) {
                    shard.labels[i] = margin + noise_std * rng.normal();
                    break;
                }
                const double clean = margin >= 0.0 ? 1.0 : -1.0;
                if ((want_preferred && clean != preferred) ||
                    (want_other && clean == preferred)) {
                    if (attempt < 1000) continue;
                }
                shard.labels[i] =
                    (rng.uniform() < noise_std) ? -clean : clean;
                break;
            }
        }
    }
    out.data.validate();
    return out;
}

double point_loss(const LossModel& model, const ParamVector& w,
                  std::span<const double> x, double y) {
    check_same_dim(w.size(), x.size(), "point_loss");
    const double margin = dot(w, x);
    const double reg = 0.5 * model.lambda * norm_sq(w);
    if (model.kind == LossKind::quadratic) {
        const double r = margin - y;
        return 0.5 * r * r + reg;
    }
    return softplus(-y * margin) + reg;
}

void point_grad_accum(const LossModel& model, const ParamVector& w,
                      std::span<const double> x, double y, double coef,
                      ParamVector& out) {
    check_same_dim(w.size(), x.size(), "point_grad");
    check_same_dim(w.size(), out.size(), "point_grad");
    const double margin = dot(w, x);
    double c;
    if (model.kind == LossKind::quadratic) {
        c = margin - y;
    } else {
        c = -y * sigmoid(-y * margin);
    }
    axpy(coef * c, x, out);
    if (model.lambda != 0.0) axpy(coef * model.lambda, w, out);
}

ParamVector point_grad(const LossModel& model, const ParamVector& w,
                       std::span<const double> x, double y) {
    ParamVector g(w.size(), 0.0);
    point_grad_accum(model, w, x, y, 1.0, g);
    return g;
}

double local_loss(const LossModel& model, const DatasetShard& shard,
                  const ParamVector& w) {
    if (shard.size() == 0) throw ConfigError("local_loss: empty shard");
    double acc = 0.0;
    for (std::size_t i = 0; i < shard.size(); ++i)
        acc += point_loss(model, w, shard.x(i), shard.y(i));
    return acc / static_cast<double>(shard.size());
}

ParamVector local_grad(const LossModel& model, const DatasetShard& shard,
                       const ParamVector& w) {
    if (shard.size() == 0) throw ConfigError("local_grad: empty shard");
    ParamVector g(w.size(), 0.0);
    const double inv = 1.0 / static_cast<double>(shard.size());
    for (std::size_t i = 0; i < shard.size(); ++i)
        point_grad_accum(model, w, shard.x(i), shard.y(i), inv, g);
    return g;
}

double global_loss(const LossModel& model, const FederatedDataset& fed,
                   const ParamVector& w) {
    if (fed.weights.size() != fed.shards.size())
        throw ConfigError("global_loss: weight/shard count mismatch");
    double acc = 0.0;
    for (std::size_t k = 0; k < fed.shards.size(); ++k)
        acc += fed.weights[k] * local_loss(model, fed.shards[k], w);
    return acc;
}

ParamVector global_grad(const LossModel& model, const FederatedDataset& fed,
                        const ParamVector& w) {
    if (fed.weights.size() != fed.shards.size())
        throw ConfigError("global_grad: weight/shard count mismatch");
    ParamVector g(w.size(), 0.0);
    for (std::size_t k = 0; k < fed.shards.size(); ++k) {
        const DatasetShard& shard = fed.shards[k];
        const double coef = fed.weights[k] / static_cast<double>(shard.size());
        for (std::size_t i = 0; i < shard.size(); ++i)
            point_grad_accum(model, w, shard.x(i), shard.y(i), coef, g);
    }
    return g;
}

namespace {

// lambda_max of (1/n_k) X^T X by power iteration.
double shard_spectral_max(const DatasetShard& shard) {
    const std::size_t d = shard.dim;
    const std::size_t n = shard.size();
    ParamVector v(d), u(n), av(d);
    Rng rng = make_stream(0x5eed, stream::kPowerIteration, shard.owner);
    for (double& x : v) x = rng.normal();
    double vn = norm(v);
    for (double& x : v) x /= vn;

    double prev = 0.0;
    for (int iter = 0; iter < 10000; ++iter) {
        for (std::size_t i = 0; i < n; ++i) u[i] = dot(shard.x(i), v);
        std::fill(av.begin(), av.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) axpy(u[i], shard.x(i), av);
        const double invn = 1.0 / static_cast<double>(n);
        scale(invn, av);
        const double lambda = dot(v, av);  // Rayleigh quotient
        const double an = norm(av);
        if (an == 0.0) return 0.0;  // X v in null space of a zero matrix
        for (std::size_t j = 0; j < d; ++j) v[j] = av[j] / an;
        if (iter > 0 && std::abs(lambda - prev) <= 1e-8 * std::max(1.0, std::abs(lambda)))
            return lambda;
        prev = lambda;
    }
    throw NumericError("power iteration did not converge within 10000 steps");
}

}  // namespace

double smoothness_constant(const LossModel& model, const FederatedDataset& fed) {
    double worst = 0.0;
    for (const DatasetShard& shard : fed.shards)
        worst = std::max(worst, shard_spectral_max(shard));
    if (model.kind == LossKind::logistic) worst *= 0.25;
    return worst + model.lambda;
}

Sigma2Estimate estimate_sigma2(const LossModel& model, const FederatedDataset& fed,
                               const ParamVector& w, std::size_t batch_size,
                               std::size_t draws, std::uint64_t seed,
                               bool exhaustive) {
    if (draws < 2) throw ConfigError("estimate_sigma2: draws must be >= 2");
    const ParamVector truth = global_grad(model, fed, w);
    const std::size_t K = fed.num_clients();
    double sum = 0.0, sum_sq = 0.0;
    ParamVector g(w.size());
    for (std::size_t j = 0; j < draws; ++j) {
        std::fill(g.begin(), g.end(), 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            const DatasetShard& shard = fed.shards[k];
            if (exhaustive) {
                const double coef = fed.weights[k] / static_cast<double>(shard.size());
                for (std::size_t i = 0; i < shard.size(); ++i)
                    point_grad_accum(model, w, shard.x(i), shard.y(i), coef, g);
            } else {
                Rng rng = make_stream(seed, stream::kSigmaEstimate, j, k);
                const double coef = fed.weights[k] / static_cast<double>(batch_size);
                for (std::size_t s = 0; s < batch_size; ++s) {
                    const std::size_t i = rng.uniform_int(shard.size());
                    point_grad_accum(model, w, shard.x(i), shard.y(i), coef, g);
                }
            }
        }
        axpy(-1.0, truth, g);
        const double v = norm_sq(g);
        sum += v;
        sum_sq += v * v;
    }
    const double nd = static_cast<double>(draws);
    Sigma2Estimate est;
    est.value = sum / nd;
    const double var = std::max(0.0, (sum_sq - sum * sum / nd) / (nd - 1.0));
    est.std_error = std::sqrt(var / nd);
    return est;
}

ParamVector quadratic_minimizer(const LossModel& model, const FederatedDataset& fed) {
    if (model.kind != LossKind::quadratic)
        throw ConfigError("quadratic_minimizer: quadratic model required");
    const std::size_t d = fed.dim;
    const double invn = 1.0 / static_cast<double>(fed.total);
    std::vector<double> A(d * d, 0.0);
    ParamVector b(d, 0.0);
    for (const DatasetShard& shard : fed.shards) {
        for (std::size_t i = 0; i < shard.size(); ++i) {
            auto x = shard.x(i);
            for (std::size_t r = 0; r < d; ++r) {
                const double xr = x[r] * invn;
                for (std::size_t c = r; c < d; ++c) A[r * d + c] += xr * x[c];
                b[r] += xr * shard.y(i);
            }
        }
    }
    for (std::size_t r = 0; r < d; ++r) {
        A[r * d + r] += model.lambda;
        for (std::size_t c = 0; c < r; ++c) A[r * d + c] = A[c * d + r];
    }
    // Cholesky solve; A is SPD for lambda > 0 (or full-rank X).
    for (std::size_t j = 0; j < d; ++j) {
        double diag = A[j * d + j];
        for (std::size_t k = 0; k < j; ++k) diag -= A[j * d + k] * A[j * d + k];
        if (diag <= 0.0)
            throw NumericError("quadratic_minimizer: normal matrix not positive definite");
        diag = std::sqrt(diag);
        A[j * d + j] = diag;
        for (std::size_t i = j + 1; i < d; ++i) {
            double v = A[i * d + j];
            for (std::size_t k = 0; k < j; ++k) v -= A[i * d + k] * A[j * d + k];
            A[i * d + j] = v / diag;
        }
    }
    ParamVector y(d);
    for (std::size_t i = 0; i < d; ++i) {
        double v = b[i];
        for (std::size_t k = 0; k < i; ++k) v -= A[i * d + k] * y[k];
        y[i] = v / A[i * d + i];
    }
    ParamVector w(d);
    for (std::size_t ii = d; ii-- > 0;) {
        double v = y[ii];
        for (std::size_t k = ii + 1; k < d; ++k) v -= A[k * d + ii] * w[k];
        w[ii] = v / A[ii * d + ii];
    }
    return w;
}

}  // namespace fedsim
