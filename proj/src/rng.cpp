#include "flowtrace/rng.hpp"

#include <cmath>
#include <numbers>

namespace flowtrace {

double GaussianSampler::next() {
    double u1 = rng_.next_double();
    const double u2 = rng_.next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Vector GaussianSampler::vec(int dim) {
    Vector out(dim);
    for (int i = 0; i < dim; ++i) out(i) = next();
    return out;
}

Vector GaussianSampler::correlated(const Vector& mean, const Matrix& cov_sqrt) {
    return mean + cov_sqrt * vec(static_cast<int>(cov_sqrt.cols()));
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
    SplitMix64 mix(master ^ (0x9E3779B97F4A7C15ULL * (stream + 1)));
    const std::uint64_t a = mix.next();
    SplitMix64 mix2(a ^ (0xD1B54A32D192ED03ULL * (index + 1)));
    return mix2.next();
}

} // namespace flowtrace
