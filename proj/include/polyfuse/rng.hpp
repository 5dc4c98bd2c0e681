#pragma once

#include <cstdint>
#include <random>

namespace polyfuse {

/// splitmix64 step, the standard 64-bit finalizing mixer.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Independent generator for (seed, stream). Streams decorrelate trials so
/// results do not depend on scheduling order under --parallel.
inline std::mt19937_64 derive_stream(std::uint64_t seed, std::uint64_t stream) {
    return std::mt19937_64(splitmix64(seed ^ splitmix64(stream)));
}

}  // namespace polyfuse
