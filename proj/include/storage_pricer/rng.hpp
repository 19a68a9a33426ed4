#pragma once

#include <cstdint>
#include <random>

namespace storage_pricer {

// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// One engine per (seed, stream index); results do not depend on the
// order in which streams are consumed.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
    return std::mt19937_64(mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x5851F42D4C957F2DULL)));
}

// Uniform in the open interval (0, 1).
inline double uniform_open(std::mt19937_64& rng) {
    constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
    std::uint64_t bits = rng() >> 11;
    return (static_cast<double>(bits) + 0.5) * scale;
}

}  // namespace storage_pricer
