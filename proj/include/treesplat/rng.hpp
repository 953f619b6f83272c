#pragma once

#include <cmath>
#include <cstdint>

namespace treesplat {

// Deterministic random stream used everywhere the library needs randomness.
// The standard <random> distributions are implementation-defined, so uniform
// and normal draws are derived by hand from a SplitMix64 core; results are
// bit-stable across platforms and compilers.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ULL) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    int uniform_int(int n) { return n <= 1 ? 0 : static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

    // standard normal via Box-Muller
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Stable derivation of sub-stream seeds (per stage, per cluster node, ...).
    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace treesplat
