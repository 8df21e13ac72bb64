#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace renf {

/// FNV-1a over a byte view. Stable across platforms and runs.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h) {
    for (int i = 0; i < 8; ++i) {
        h ^= static_cast<unsigned char>(v >> (8 * i));
        h *= 0x100000001b3ull;
    }
    return h;
}

/**
 * Every random stream in the engine is derived from the single run seed by
 * hashing (seed, component name, extra indices). Streams never share state,
 * so turning one consumer on or off cannot shift another's draws.
 */
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view component,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = fnv1a(component);
    h = fnv1a_u64(seed, h);
    h = fnv1a_u64(a, h);
    h = fnv1a_u64(b, h);
    return h;
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view component,
                                std::uint64_t a = 0, std::uint64_t b = 0) {
    return std::mt19937_64(derive_seed(seed, component, a, b));
}

}  // namespace renf
