#pragma once

#include "flowtrace/model.hpp"

#include <complex>
#include <optional>
#include <vector>

namespace flowtrace {

struct PencilProbe {
    std::complex<double> lambda;
    int rank;
};

struct PencilReport {
    bool stealthy_exists = false;
    std::optional<std::complex<double>> witness_lambda;
    std::vector<PencilProbe> rank_profile;
    double tolerance = 0.0;
    int full_rank = 0; // n + p' + m'
};

/// Rank probe of the pencil
///
///   P(lambda) = [ lambda I - A   Bhat ]      Bhat = [Ba  0],  Dhat = [0  Da]
///               [     C          Dhat ]
///
/// at the eigenvalues of A, 32 fixed-seed pseudorandom complex points, and the
/// generalized eigenvalues of the square pencil when n+m == n+p'+m'.
/// stealthy_exists is true iff any probe has rank < n + p' + m'.
///
/// The finite-horizon synthesis below can disagree with this verdict on edge
/// cases (pure sensor attacks dropping rank only at eigenvalues of A); report
/// both rather than reconciling them.
PencilReport pencil_rank_test(const SystemModel& model, const AttackChannels& channels,
                              double rtol = 1e-9);

/// An input sequence with identically zero effect on the outputs:
/// Delta x_{k+1} = A Delta x_k + Ba ua_k (Delta x_0 = 0), Delta y_k = C Delta x_k + Da da_k.
struct WitnessAttack {
    std::vector<Vector> ua_seq; // length T
    std::vector<Vector> da_seq; // length T+1
    double max_output_deviation = 0.0;
};

/// Unit-norm null-space witness of the stacked map from (ua_{0:T-1}, da_{0:T})
/// to Delta y_{0:T}, or nullopt when the null space is trivial.
/// Requires T >= n - p' + 1.
std::optional<WitnessAttack> synthesize_zero_flow_attack(const SystemModel& model,
                                                         const AttackChannels& channels,
                                                         int T, double tol = 1e-9);

} // namespace flowtrace
