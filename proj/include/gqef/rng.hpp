#pragma once

#include <cstdint>
#include <random>

#include "gqef/common.hpp"

namespace gqef {

/// Thin wrapper over mt19937_64 with bit-reproducible uniform draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : eng_(mix_seed(seed)) {}

    void reseed(std::uint64_t seed) { eng_.seed(mix_seed(seed)); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() { return normal_(eng_); }

    std::uint64_t next() { return eng_(); }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace gqef
