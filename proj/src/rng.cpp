#include "fedsim/rng.hpp"

#include <cmath>

namespace fedsim {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace

std::uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

double Rng::normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();  // log(0) guard
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

Rng make_stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t a,
                std::uint64_t b, std::uint64_t c) {
    std::uint64_t x = seed;
    (void)splitmix64(x);
    x ^= purpose;
    (void)splitmix64(x);
    x ^= a;
    (void)splitmix64(x);
    x ^= b;
    (void)splitmix64(x);
    x ^= c;
    std::uint64_t st = splitmix64(x);
    return Rng(st);
}

std::uint64_t replicate_seed(std::uint64_t base_seed, std::uint64_t index) {
    return make_stream(base_seed, 0x11, index).next_u64();
}

}  // namespace fedsim
