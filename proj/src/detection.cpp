#include "flowtrace/detection.hpp"

#include "flowtrace/errors.hpp"

#include <algorithm>
#include <cmath>

namespace flowtrace {

double chi_squared_stat(const std::vector<Vector>& z_window) {
    if (z_window.empty()) throw ValidationError("chi_squared_stat: empty window");
    double s = 0.0;
    for (const auto& z : z_window) s += z.squaredNorm();
    return s;
}

double np_llr(const std::vector<Vector>& z_seq, const std::vector<GaussianDist>& attack_dist) {
    if (z_seq.size() != attack_dist.size()) {
        throw ValidationError("np_llr: z_seq and attack_dist lengths differ");
    }
    double llr = 0.0;
    for (size_t k = 0; k < z_seq.size(); ++k) {
        const auto& d = attack_dist[k];
        Eigen::LLT<Matrix> llt(symmetrize(d.cov));
        if (llt.info() != Eigen::Success) {
            throw NumericError("np_llr: singular attack covariance at step "
                               + std::to_string(k));
        }
        const double logdet =
            2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        const Vector r = z_seq[k] - d.mean;
        const double q1 = r.dot(llt.solve(r));
        llr += -0.5 * (logdet + q1) + 0.5 * z_seq[k].squaredNorm();
    }
    return llr;
}

std::vector<RocRecord> estimate_roc(const std::vector<std::vector<double>>& stats_h0,
                                    const std::vector<std::vector<double>>& stats_h1,
                                    const DetectorSpec& spec) {
    if (stats_h0.empty() || stats_h1.empty()) {
        throw ValidationError("estimate_roc: empty trial ensembles");
    }
    const size_t steps = stats_h0.front().size();
    for (const auto& s : stats_h0) {
        if (s.size() != steps) throw ValidationError("estimate_roc: unequal horizons");
    }
    for (const auto& s : stats_h1) {
        if (s.size() != steps) throw ValidationError("estimate_roc: unequal horizons");
    }
    const size_t n1 = stats_h1.size();
    double delta = 0.0;
    const bool quantile_mode = !spec.threshold.has_value();
    if (quantile_mode) {
        if (!spec.delta) throw ValidationError("estimate_roc: detector needs delta or threshold");
        delta = *spec.delta;
        if (static_cast<double>(n1) * delta < 5.0) {
            throw ValidationError("estimate_roc: too few trials to resolve the quantile "
                                  "(trials * delta < 5)");
        }
    }

    std::vector<RocRecord> out;
    out.reserve(steps);
    std::vector<double> h1(n1);
    for (size_t k = 0; k < steps; ++k) {
        double tau;
        if (quantile_mode) {
            for (size_t t = 0; t < n1; ++t) h1[t] = stats_h1[t][k];
            std::sort(h1.begin(), h1.end());
            const size_t idx = static_cast<size_t>(std::floor(delta * static_cast<double>(n1)));
            tau = h1[std::min(idx, n1 - 1)];
        } else {
            tau = *spec.threshold;
        }
        size_t fa = 0, det = 0;
        for (const auto& s : stats_h0) fa += (s[k] >= tau) ? 1 : 0;
        for (const auto& s : stats_h1) det += (s[k] >= tau) ? 1 : 0;
        RocRecord rec;
        rec.k = static_cast<int>(k);
        rec.alpha = static_cast<double>(fa) / static_cast<double>(stats_h0.size());
        rec.beta = static_cast<double>(det) / static_cast<double>(n1);
        rec.threshold = tau;
        out.push_back(rec);
    }
    return out;
}

double decay_rate(const std::vector<double>& alphas, int k_min, double floor) {
    if (floor <= 0.0) throw ValidationError("decay_rate: floor must be positive");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int count = 0;
    for (size_t k = static_cast<size_t>(std::max(k_min, 0)); k < alphas.size(); ++k) {
        const double a = std::max(alphas[k], floor);
        if (a <= floor) continue; // censored: no observed exceedances
        const double x = static_cast<double>(k) + 1.0;
        const double y = -std::log(a);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
        ++count;
    }
    if (count < 10) {
        throw ValidationError("decay_rate: fewer than 10 usable points ("
                              + std::to_string(count) + ")");
    }
    const double denom = sxx - sx * sx / count;
    if (denom <= 0.0) throw NumericError("decay_rate: degenerate regression");
    return (sxy - sx * sy / count) / denom;
}

} // namespace flowtrace
