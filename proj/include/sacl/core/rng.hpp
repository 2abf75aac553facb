#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace sacl {

// splitmix64 finalizer; used to derive independent sub-seeds from a master seed.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Sub-seed scheme: seed for stream `stream` and counter `k` of a run with
// master seed `master` is mix64(mix64(master) ^ mix64(stream * 2^32 + k)).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint32_t stream, std::uint32_t k = 0) {
    return mix64(mix64(master) ^ mix64((std::uint64_t(stream) << 32) | k));
}

namespace streams {
inline constexpr std::uint32_t init = 1;
inline constexpr std::uint32_t shuffle = 2;
inline constexpr std::uint32_t dropout = 3;
inline constexpr std::uint32_t perturb = 4;
inline constexpr std::uint32_t split = 5;
inline constexpr std::uint32_t kmeans = 6;
inline constexpr std::uint32_t synth = 7;
}  // namespace streams

// mt19937_64 with hand-rolled uniform/normal draws so that sequences are
// identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1)
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t(0) - (~std::uint64_t(0) % n);
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

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
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    template <class It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            const std::uint64_t j = below(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace sacl
