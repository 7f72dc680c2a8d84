#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace koopman {

/// Counter-based generator built on the SplitMix64 finaliser.
///
/// A draw is a pure function of (seed, stream, counter), so any parallel split
/// of an index range reproduces the serial stream exactly. The bit
/// manipulation and the uniform/normal transforms are fixed here rather than
/// taken from <random>, whose distributions differ between standard
/// libraries.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL))) {}

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t bits(std::uint64_t counter) const {
        return mix(key_ + counter * 0x9e3779b97f4a7c15ULL);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform(std::uint64_t counter) const {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller on the counters (2c, 2c+1).
    double normal(std::uint64_t counter) const {
        const double u1 = 1.0 - uniform(2 * counter);  // (0, 1]
        const double u2 = uniform(2 * counter + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Sub-generator for an independent stream.
    CounterRng derive(std::uint64_t stream) const { return CounterRng(key_, stream); }

private:
    std::uint64_t key_;
};

/// Sequential convenience wrapper around CounterRng.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : gen_(seed, stream) {}

    std::uint64_t next_bits() { return gen_.bits(counter_++); }
    double uniform() { return gen_.uniform(counter_++); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() { return gen_.normal(counter_++); }

    /// Uniform integer in [0, n) by rejection; n > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
        std::uint64_t r = next_bits();
        while (r >= limit) r = next_bits();
        return r % n;
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(values[i - 1], values[j]);
        }
    }

private:
    CounterRng gen_;
    std::uint64_t counter_ = 0;
};

}  // namespace koopman
