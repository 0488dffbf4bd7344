#ifndef SMOOTHATTN_RNG_HPP
#define SMOOTHATTN_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace smoothattn {

// All randomness flows from one user-facing seed through named sub-streams
// (e.g. "data", "init", "shuffle", "rollout"). A stream is identified by the
// seed, the stream name and an optional index such as a run number or an
// agent id, so runs and agents draw from disjoint deterministic sequences.

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Derived seed material for a named sub-stream; feed back into make_stream
// or another derive_seed to build hierarchical deterministic streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name,
                                 std::uint64_t index = 0) {
    return mix64(seed ^ mix64(fnv1a(name)) ^ mix64(index * 0x2545f4914f6cdd1dull + 1));
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::string_view name,
                                   std::uint64_t index = 0) {
    return std::mt19937_64(derive_seed(seed, name, index));
}

}  // namespace smoothattn

#endif  // SMOOTHATTN_RNG_HPP
