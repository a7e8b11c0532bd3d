#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, stream, counter), so results do not depend on call order,
// thread scheduling or the standard library's distribution code.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace svia {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Derives an independent seed from a parent seed and a tag.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
    return mix64(seed ^ mix64(tag * 0xD1B54A32D192ED03ULL + 0x632BE59BD9B4E019ULL));
}

class CounterRng {
public:
    constexpr explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
        : key_(derive_seed(seed, stream)) {}

    constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
        return mix64(key_ + counter * 0x9E3779B97F4A7C15ULL);
    }

    /// Uniform in the open interval (0, 1).
    double uniform(std::uint64_t counter) const noexcept {
        return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller. Uses the upper half of the counter
    /// space so it never shares bits with uniform() at counters below 2^63.
    double normal(std::uint64_t counter) const noexcept {
        constexpr std::uint64_t high = 1ULL << 63;
        const double u1 = uniform(high | (2 * counter));
        const double u2 = uniform(high | (2 * counter + 1));
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Laplace(0, scale) by inverse CDF.
    double laplace(std::uint64_t counter, double scale) const noexcept {
        const double u = uniform(counter) - 0.5;
        const double magnitude = -scale * std::log1p(-2.0 * std::abs(u));
        return u < 0.0 ? -magnitude : magnitude;
    }

private:
    std::uint64_t key_;
};

/// Sequential cursor over a CounterRng, for training loops and generators.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) : rng_(seed, stream) {}

    std::uint64_t next_bits() { return rng_.bits(counter_++); }
    double uniform() { return rng_.uniform(counter_++); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() { return rng_.normal(counter_++); }
    /// Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_bits() % span);
    }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = next_bits() % i;
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    CounterRng rng_;
    std::uint64_t counter_ = 0;
};

/// n standard-normal draws from (seed, stream).
std::vector<double> normal_vector(std::size_t n, std::uint64_t seed, std::uint64_t stream);

} // namespace svia
