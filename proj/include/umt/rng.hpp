#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace umt {

/// Seeded random source shared by every stochastic operation.
///
/// The engine is std::mt19937_64 (fully specified by the standard). The
/// distributions on top of it are written out here because the standard
/// library distributions are implementation-defined, and identical seeds
/// must give identical draws on every toolchain.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    /// Number of raw 64-bit draws consumed so far.
    std::uint64_t position() const noexcept { return position_; }

    std::uint64_t next_u64() {
        ++position_;
        return engine_();
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; always consumes two draws.
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Unbiased integer in [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n);

    bool bernoulli(double p) { return uniform() < p; }

    template <class T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[uniform_index(i)]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t position_ = 0;
    std::mt19937_64 engine_;
};

}  // namespace umt
