#pragma once

#include <cstdint>
#include <cstddef>

namespace fedsim {

// Counter-free splitmix64 stream. Streams are derived by hashing a key tuple
// (seed, purpose, round, client, ...) so that every client/round/replicate
// gets an independent, reproducible sequence regardless of execution order.
// std:: distributions are avoided on purpose: their output is not pinned by
// the standard, and byte-identical runs are part of the output contract.
class Rng {
public:
    explicit Rng(std::uint64_t state) : state_(state) {}

    std::uint64_t next_u64();

    // Uniform double in [0, 1), 53 usable bits.
    double uniform();

    // Uniform integer in [0, n), unbiased (rejection).
    std::uint64_t uniform_int(std::uint64_t n);

    // Standard normal via Box-Muller. Computes a fresh pair each call and
    // discards the second value, keeping the stream position predictable.
    double normal();

private:
    std::uint64_t state_;
};

// Stream keys. Purposes keep unrelated uses of the same (seed, round, client)
// tuple from colliding.
namespace stream {
inline constexpr std::uint64_t kDataGen = 0x01;
inline constexpr std::uint64_t kSelection = 0x02;
inline constexpr std::uint64_t kLocalSample = 0x03;
inline constexpr std::uint64_t kSyntheticStaleness = 0x04;
inline constexpr std::uint64_t kSigmaEstimate = 0x05;
inline constexpr std::uint64_t kPowerIteration = 0x06;
inline constexpr std::uint64_t kTest = 0x7f;
}  // namespace stream

Rng make_stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t a = 0,
                std::uint64_t b = 0, std::uint64_t c = 0);

// Derives the run seed for replicate `index` of a base experiment seed.
std::uint64_t replicate_seed(std::uint64_t base_seed, std::uint64_t index);

}  // namespace fedsim
