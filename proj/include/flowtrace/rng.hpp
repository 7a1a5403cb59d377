#pragma once

#include "flowtrace/linalg.hpp"

#include <cstdint>

namespace flowtrace {

/// SplitMix64 generator. Small state, full 64-bit period, and the output is a
/// pure function of the seed, which is what per-trial reproducibility needs.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

private:
    std::uint64_t state_;
};

/// Standard normal sampler (Box-Muller, no state carried between draws so the
/// stream is insensitive to how callers batch their requests).
class GaussianSampler {
public:
    explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}

    double next();

    /// Vector of independent standard normals.
    Vector vec(int dim);

    /// Sample from N(mean, cov) given a precomputed square root of cov.
    Vector correlated(const Vector& mean, const Matrix& cov_sqrt);

private:
    SplitMix64 rng_;
};

/// Deterministic per-trial seed derivation: mixes the master seed with an
/// ensemble tag and the trial index so concurrent trials never share streams.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

} // namespace flowtrace
