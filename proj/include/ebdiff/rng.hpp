#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ebdiff {

using Rng = std::mt19937_64;

// Every random stream in the project is seeded through derive_seed: a stream
// is named by (root seed, component label, index). The label is hashed with
// FNV-1a and the result mixed with splitmix64, so streams for different
// components or indices are decorrelated even for adjacent root seeds.
// No code path may draw entropy from anywhere else.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t root, std::string_view label, uint64_t index = 0) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64 offset basis
    auto mix_byte = [&h](uint8_t b) {
        h ^= b;
        h *= 0x100000001b3ULL;
    };
    for (int i = 0; i < 8; ++i) mix_byte(static_cast<uint8_t>(root >> (8 * i)));
    for (char c : label) mix_byte(static_cast<uint8_t>(c));
    for (int i = 0; i < 8; ++i) mix_byte(static_cast<uint8_t>(index >> (8 * i)));
    return splitmix64(h);
}

inline Rng make_rng(uint64_t root, std::string_view label, uint64_t index = 0) {
    return Rng(derive_seed(root, label, index));
}

inline double draw_normal(Rng& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    return d(rng);
}

inline double draw_uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
}

// Engine state as text (the standard stream representation); round-trips
// exactly, which checkpoints rely on.
inline std::string rng_state_string(const Rng& rng) {
    std::ostringstream ss;
    ss << rng;
    return ss.str();
}

inline Rng rng_from_state(const std::string& state) {
    Rng rng;
    std::istringstream ss(state);
    ss >> rng;
    if (ss.fail()) throw std::runtime_error("rng_from_state: bad RNG state");
    return rng;
}

}  // namespace ebdiff
