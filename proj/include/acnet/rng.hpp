#ifndef ACNET_RNG_HPP
#define ACNET_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>

namespace acnet {

// SplitMix64 generator. Self-contained so that seeded runs are reproducible
// bit-for-bit independent of the standard library's distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller; the second draw is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = next_double();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // [0, bound)
    std::int64_t next_index(std::int64_t bound) {
        return bound <= 1 ? 0 : static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(bound));
    }

    bool bernoulli(double p) { return next_double() < p; }

    template <typename It>
    void shuffle(It first, It last) {
        auto n = last - first;
        for (auto i = n - 1; i > 0; --i) {
            auto j = next_index(i + 1);
            std::swap(first[i], first[j]);
        }
    }

    // Derives an independent stream; used to give each sub-task its own rng.
    Rng fork(std::uint64_t stream) const {
        Rng r(state_ ^ (0xd1b54a32d192ed03ull * (stream + 1)));
        r.next_u64();
        return r;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace acnet

#endif
