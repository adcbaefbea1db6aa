#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace dveslt {

// Deterministic, machine-independent RNG. One root seed per run; every
// consumer derives its own stream by label so adding draws to one purpose
// never perturbs another.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ^ 0x9E3779B97F4A7C15ull) {
        // burn-in so nearby seeds decorrelate
        next_u64();
        next_u64();
    }

    uint64_t next_u64() {
        // splitmix64
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi] inclusive
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        // Box-Muller; draw until u1 is nonzero
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586 * u2);
    }

    static uint64_t hash_label(const std::string& label) {
        // FNV-1a 64
        uint64_t h = 0xCBF29CE484222325ull;
        for (unsigned char c : label) {
            h ^= c;
            h *= 0x100000001B3ull;
        }
        return h;
    }

    // labeled stream splitting: derive(seed, "aug", epoch, sample)
    static uint64_t derive(uint64_t seed, const std::string& label, uint64_t a = 0,
                           uint64_t b = 0) {
        uint64_t h = seed;
        h ^= hash_label(label) + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
        h ^= (a + 0x9E3779B97F4A7C15ull) + (h << 6) + (h >> 2);
        h ^= (b + 0x9E3779B97F4A7C15ull) + (h << 6) + (h >> 2);
        return h;
    }

private:
    uint64_t state_;
};

} // namespace dveslt
