#pragma once
// Small self-contained RNG stack. We avoid <random> distributions on purpose:
// their output is not bit-stable across standard libraries, and the test suite
// freezes golden outputs. xoshiro256++ seeded through splitmix64, one stream
// per (seed, replica) pair.

#include <cstdint>
#include <cmath>

namespace branchsim {

inline std::uint64_t splitmix64(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    Rng() : Rng(0x853c49e6748fea9bULL) {}

    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
        have_spare_ = false;
    }

    // Independent stream for replica `idx` of experiment `seed`.
    static Rng stream(std::uint64_t seed, std::uint64_t idx) {
        std::uint64_t s = seed;
        std::uint64_t a = splitmix64(s);
        std::uint64_t t = a ^ (0xd1342543de82ef95ULL * (idx + 1));
        return Rng(splitmix64(t) ^ splitmix64(s));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on (0,1): 53-bit mantissa, never exactly 0 or 1.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    double exponential(double rate) { return -std::log(uniform()) / rate; }

    // Standard normal, polar Box-Muller. The spare is part of the stream
    // state, so draw order stays deterministic.
    double normal() {
        if (have_spare_) { have_spare_ = false; return spare_; }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return u * m;
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // Lemire-style rejection-free enough for our n (tiny); keep exact.
        std::uint64_t x, r;
        do {
            x = next_u64();
            r = x % n;
        } while (x - r > std::uint64_t(0) - n);
        return r;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool have_spare_;
};

// Scalar seed for a sub-experiment (nested simulations that build their own
// Rng from a config seed). Mixing differs from Rng::stream so the two never
// collide.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t idx) {
    std::uint64_t s = seed ^ (0x632be59bd9b4e019ULL * (idx + 1));
    std::uint64_t a = splitmix64(s);
    return a ^ splitmix64(s);
}

} // namespace branchsim
