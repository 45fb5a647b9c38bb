#pragma once

// Deterministic, named random streams.
//
// All randomness in the library flows through Rng instances derived from an
// explicit root seed plus a stream path (strings and integers). Uniform and
// normal variates are produced from raw mt19937_64 output with fixed
// arithmetic, so replaying a stream gives bit-identical sequences on any
// platform. Streams are value types: never shared, never global.

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <random>
#include <string_view>
#include <vector>

namespace taal {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001B3ull;
    }
    return h;
}

inline uint64_t hash_combine(uint64_t seed, uint64_t value) {
    return splitmix64(seed ^ (value + 0x9E3779B97F4A7C15ull + (seed << 6) + (seed >> 2)));
}

class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t bits() { return eng_(); }

    // uniform in [0, 1) with 53-bit mantissa
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi] inclusive
    int uniform_int(int lo, int hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(eng_() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller, no caching: each call consumes two uniforms
    double normal() {
        double u1 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // sample k distinct indices from [0, n) without replacement, ascending order
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = i;
        for (int i = 0; i < k; ++i) {
            int j = i + static_cast<int>(eng_() % static_cast<uint64_t>(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        std::sort(idx.begin(), idx.end());
        return idx;
    }

private:
    std::mt19937_64 eng_;
};

// Stream derivation: fold path components into the root seed.
inline uint64_t derive_seed(uint64_t root, std::string_view name) {
    return hash_combine(root, fnv1a64(name));
}

inline uint64_t derive_seed(uint64_t root, std::string_view name, uint64_t a) {
    return hash_combine(derive_seed(root, name), a);
}

inline uint64_t derive_seed(uint64_t root, std::string_view name, uint64_t a, uint64_t b) {
    return hash_combine(derive_seed(root, name, a), b);
}

inline uint64_t derive_seed(uint64_t root, std::string_view name, uint64_t a, uint64_t b, uint64_t c) {
    return hash_combine(derive_seed(root, name, a, b), c);
}

inline Rng stream(uint64_t root, std::string_view name) { return Rng(derive_seed(root, name)); }
inline Rng stream(uint64_t root, std::string_view name, uint64_t a) { return Rng(derive_seed(root, name, a)); }
inline Rng stream(uint64_t root, std::string_view name, uint64_t a, uint64_t b) {
    return Rng(derive_seed(root, name, a, b));
}

}  // namespace taal
