#include <doctest.h>

#include <cmath>
#include <set>

#include "fedsim/errors.hpp"
#include "fedsim/staleness.hpp"
#include "oracles.hpp"

using namespace fedsim;

TEST_CASE("full participation always selects everyone") {
    SelectionPlan plan{5, 5, StalenessMode::emergent};
    Rng rng = make_stream(1, stream::kTest);
    for (int round = 0; round < 20; ++round) {
        auto s = sample_clients(plan, rng);
        CHECK(s == std::vector<std::uint32_t>{0, 1, 2, 3, 4});
    }
}

TEST_CASE("selection returns N distinct sorted members") {
    SelectionPlan plan{10, 3, StalenessMode::emergent};
    Rng rng = make_stream(2, stream::kTest);
    for (int round = 0; round < 200; ++round) {
        auto s = sample_clients(plan, rng);
        CHECK(s.size() == 3);
        CHECK(std::set<std::uint32_t>(s.begin(), s.end()).size() == 3);
        CHECK(std::is_sorted(s.begin(), s.end()));
        for (auto k : s) CHECK(k < 10);
    }
}

TEST_CASE("selection frequencies are uniform") {
    SelectionPlan plan{10, 1, StalenessMode::emergent};
    const std::size_t draws = 100000;
    std::vector<double> counts(10, 0.0);
    for (std::size_t r = 0; r < draws; ++r) {
        Rng rng = make_stream(3, stream::kTest, r);
        counts[sample_clients(plan, rng)[0]] += 1.0;
    }
    std::vector<double> expected(10, draws / 10.0);
    for (double c : counts)
        CHECK(std::abs(c / draws - 0.1) <= 0.01);
    // chi-square with 9 dof: critical value 27.88 at p = 0.001
    CHECK(oracle::chi_square(counts, expected) < 27.88);
}

TEST_CASE("N greater than K is rejected") {
    SelectionPlan plan{3, 4, StalenessMode::emergent};
    Rng rng = make_stream(4, stream::kTest);
    CHECK_THROWS_AS(sample_clients(plan, rng), ConfigError);
    SelectionPlan zero{3, 0, StalenessMode::emergent};
    CHECK_THROWS_AS(sample_clients(zero, rng), ConfigError);
}

TEST_CASE("geometric pmf values") {
    CHECK(geometric_pmf(0.9, 0) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(geometric_pmf(0.5, 2) == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(geometric_pmf(0.0, 0) == 1.0);
    CHECK(geometric_pmf(0.0, 5) == 0.0);
    CHECK_THROWS_AS(geometric_pmf(1.0, 0), ConfigError);
    CHECK_THROWS_AS(geometric_pmf(-0.1, 0), ConfigError);
}

TEST_CASE("geometric pmf partial sums match the closed-form tail") {
    for (double beta : {0.1, 0.5, 0.9, 0.99}) {
        double sum = 0.0;
        for (std::uint64_t l = 0; l <= 200; ++l) sum += geometric_pmf(beta, l);
        CHECK(sum == doctest::Approx(1.0 - std::pow(beta, 201.0)).epsilon(1e-12));
    }
}

TEST_CASE("staleness tracker resets selected and increments the rest") {
    StalenessTracker tracker(4);
    tracker.tau = {5, 2, 0, 7};
    tracker.advance({0});
    CHECK(tracker.tau == std::vector<std::uint64_t>{0, 3, 1, 8});
    CHECK_THROWS_AS(tracker.advance({9}), NumericError);
}

TEST_CASE("synthetic staleness at beta=0 is all zeros") {
    SelectionPlan plan{8, 8, StalenessMode::synthetic};
    Rng rng = make_stream(5, stream::kTest);
    auto tau = sample_synthetic_staleness(plan, rng);
    for (auto t : tau) CHECK(t == 0);
}

TEST_CASE("synthetic staleness mean matches beta/(1-beta)") {
    const double beta = 0.5;
    Rng rng = make_stream(6, stream::kTest);
    double sum = 0.0;
    const std::size_t n = 1000000;
    for (std::size_t i = 0; i < n; ++i)
        sum += static_cast<double>(sample_geometric(beta, rng));
    CHECK(std::abs(sum / n - 1.0) <= 0.01);
}

TEST_CASE("synthetic staleness zero-probability matches the pmf") {
    const double beta = 0.9;
    Rng rng = make_stream(7, stream::kTest);
    std::size_t zeros = 0;
    const std::size_t n = 1000000;
    for (std::size_t i = 0; i < n; ++i) zeros += sample_geometric(beta, rng) == 0;
    CHECK(std::abs(static_cast<double>(zeros) / n - 0.1) <= 0.005);
}

TEST_CASE("synthetic draws are independent across rounds") {
    // lag-1 autocorrelation of one client's staleness over 1e5 rounds
    SelectionPlan plan{10, 1, StalenessMode::synthetic};
    const std::size_t rounds = 100000;
    std::vector<double> series(rounds);
    for (std::size_t t = 0; t < rounds; ++t) {
        Rng rng = make_stream(8, stream::kTest, t);
        series[t] = static_cast<double>(sample_synthetic_staleness(plan, rng)[3]);
    }
    auto stats = oracle::mean_var(series);
    double cov = 0.0;
    for (std::size_t t = 0; t + 1 < rounds; ++t)
        cov += (series[t] - stats.mean) * (series[t + 1] - stats.mean);
    cov /= static_cast<double>(rounds - 1);
    CHECK(std::abs(cov / stats.var) < 0.01);
}

TEST_CASE("pooled emergent staleness converges to the geometric law") {
    // small standalone selection history; the acceptance suite runs the full
    // K=100 configuration
    SelectionPlan plan{20, 2, StalenessMode::emergent};
    StalenessTracker tracker(20);
    std::vector<std::uint64_t> samples;
    const std::size_t rounds = 20000;
    samples.reserve(rounds * 20);
    for (std::size_t t = 0; t < rounds; ++t) {
        Rng rng = make_stream(9, stream::kTest, t);
        tracker.advance(sample_clients(plan, rng));
        samples.insert(samples.end(), tracker.tau.begin(), tracker.tau.end());
    }
    CHECK(staleness_tv_distance(samples, plan.beta(), 100) < 0.01);
}

TEST_CASE("tv distance of exact pmf counts is zero") {
    // build a sample set whose histogram equals the truncated pmf of beta=0.5
    std::vector<std::uint64_t> samples;
    const std::size_t scale = 1 << 20;
    std::size_t assigned = 0;
    for (std::uint64_t l = 0; l < 19; ++l) {
        const std::size_t count = scale >> (l + 1);
        samples.insert(samples.end(), count, l);
        assigned += count;
    }
    samples.insert(samples.end(), scale - assigned, 200);  // exact tail mass
    CHECK(staleness_tv_distance(samples, 0.5, 100) <= 1e-5);
}
