#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace aacl {

/// 64-bit FNV-1a; stable across platforms, unlike std::hash.
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent seed for the named stream (world, episode, init,
/// dropout, sampling, ...) from one master seed.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
    return splitmix64(splitmix64(master ^ fnv1a(name)) + index);
}

inline std::mt19937_64 make_stream(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
    return std::mt19937_64(stream_seed(master, name, index));
}

}  // namespace aacl
