#pragma once

#include "flowtrace/infoflow.hpp"

#include <vector>

namespace flowtrace {

/// Sum of squared residue norms over a window. Under no attack this is
/// chi-squared with m * window degrees of freedom.
double chi_squared_stat(const std::vector<Vector>& z_window);

/// Cumulative log-likelihood ratio of the residue sequence, treating steps as
/// independent: sum_k [log N(z_k; mu_k, S_k) - log N(z_k; 0, I)].
double np_llr(const std::vector<Vector>& z_seq, const std::vector<GaussianDist>& attack_dist);

struct RocRecord {
    int k = 0;
    double alpha = 0.0; // false-alarm rate Pr(decide attack | no attack)
    double beta = 0.0;  // detection rate Pr(decide attack | attack)
    double threshold = 0.0;
};

/// Per-step operating points. stats_*[trial][k] is the detector statistic of a
/// trial at time k. With a delta target the threshold at each k is the
/// empirical attack-ensemble quantile giving beta_k >= 1 - delta; alpha_k is
/// then measured on the no-attack ensemble. A fixed threshold skips the
/// quantile step. Deterministic given the inputs.
std::vector<RocRecord> estimate_roc(const std::vector<std::vector<double>>& stats_h0,
                                    const std::vector<std::vector<double>>& stats_h1,
                                    const DetectorSpec& spec);

/// Least-squares slope of -log(alpha_k) versus k+1 over k >= k_min. Zero
/// alphas are floored at `floor` before taking logs; floored (censored) points
/// are excluded from the fit so a saturated tail cannot dilute the slope.
/// Throws ValidationError with fewer than 10 usable points.
double decay_rate(const std::vector<double>& alphas, int k_min, double floor);

} // namespace flowtrace
