#pragma once

#include <cstdint>
#include <random>

namespace nodags {

// splitmix64 finalizer, used to derive independent streams from (seed, ids).
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix64(mix64(seed) ^ mix64(stream + 0x51a2b3c4d5e6f708ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(seed, a), b);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(mix64(seed)); }

}  // namespace nodags
