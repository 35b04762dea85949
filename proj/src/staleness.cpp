#include "fedsim/staleness.hpp"

#include <cmath>
#include <numeric>

#include "fedsim/errors.hpp"

namespace fedsim {

void SelectionPlan::validate() const {
    if (total_clients < 1) throw ConfigError("K must be >= 1");
    if (per_round < 1 || per_round > total_clients)
        throw ConfigError("N must satisfy 1 <= N <= K");
}

std::vector<std::uint32_t> sample_clients(const SelectionPlan& plan, Rng& rng) {
    plan.validate();
    const std::size_t K = plan.total_clients;
    const std::size_t N = plan.per_round;
    std::vector<std::uint32_t> pool(K);
    std::iota(pool.begin(), pool.end(), 0u);
    // partial Fisher-Yates: first N entries are a uniform N-subset
    for (std::size_t i = 0; i < N; ++i) {
        const std::size_t j = i + rng.uniform_int(K - i);
        std::swap(pool[i], pool[j]);
    }
    std::vector<std::uint32_t> selected(pool.begin(), pool.begin() + N);
    std::sort(selected.begin(), selected.end());
    return selected;
}

double geometric_pmf(double beta, std::uint64_t l) {
    if (beta < 0.0 || beta >= 1.0)
        throw ConfigError("geometric_pmf: beta must be in [0, 1)");
    return std::pow(beta, static_cast<double>(l)) * (1.0 - beta);
}

std::uint64_t sample_geometric(double beta, Rng& rng) {
    if (beta < 0.0 || beta >= 1.0)
        throw ConfigError("sample_geometric: beta must be in [0, 1)");
    const double u = rng.uniform();
    if (beta == 0.0) return 0;
    // P(tau >= l) = beta^l; invert the CDF at u
    const double v = std::log1p(-u) / std::log(beta);
    if (!(v < 9.0e18)) return 9000000000000000000ULL;  // vanishing-probability tail
    return static_cast<std::uint64_t>(v);
}

std::vector<std::uint64_t> sample_synthetic_staleness(const SelectionPlan& plan, Rng& rng) {
    plan.validate();
    const double beta = plan.beta();
    std::vector<std::uint64_t> tau(plan.total_clients);
    for (auto& t : tau) t = sample_geometric(beta, rng);
    return tau;
}

void StalenessTracker::advance(const std::vector<std::uint32_t>& selected) {
    for (auto& t : tau) ++t;
    for (std::uint32_t k : selected) {
        if (k >= tau.size()) throw NumericError("staleness: client index out of range");
        tau[k] = 0;
    }
}

double staleness_tv_distance(const std::vector<std::uint64_t>& samples, double beta,
                             std::uint64_t truncate) {
    std::vector<double> counts(truncate + 1, 0.0);
    double overflow = 0.0;
    for (std::uint64_t s : samples) {
        if (s <= truncate)
            counts[s] += 1.0;
        else
            overflow += 1.0;
    }
    const double n = static_cast<double>(samples.size());
    double tv = 0.0, theor_tail = 1.0;
    for (std::uint64_t l = 0; l <= truncate; ++l) {
        const double p = geometric_pmf(beta, l);
        theor_tail -= p;
        tv += std::abs(counts[l] / n - p);
    }
    tv += std::abs(overflow / n - theor_tail);
    return 0.5 * tv;
}

}  // namespace fedsim
