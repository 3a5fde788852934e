#pragma once

#include <cmath>
#include <cstdint>

namespace octseg {

// splitmix64 stream. Self-contained so that seeded runs are reproducible
// across standard libraries and platforms; std::normal_distribution makes no
// such guarantee.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n), n > 0
    std::int64_t below(std::int64_t n) {
        return std::int64_t(next_u64() % std::uint64_t(n));
    }

    // standard normal via Box-Muller
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool chance(double p) { return uniform() < p; }

  private:
    std::uint64_t state_;
};

// FNV-1a, for deriving substream seeds from names.
inline std::uint64_t hash_str(const char *s) {
    std::uint64_t h = 1469598103934665603ull;
    for (; *s; ++s) {
        h ^= std::uint64_t(static_cast<unsigned char>(*s));
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace octseg
