#pragma once

#include <cstdint>
#include <random>

namespace cifair {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive well-separated child seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Child seed for cell `index` under `base`. Mixing function recorded in
// experiment manifests so runs can be replayed exactly.
inline std::uint64_t child_seed(std::uint64_t base, std::uint64_t index) {
    return splitmix64(base ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace cifair
