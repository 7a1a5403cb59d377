#include "flowtrace/stealth.hpp"

#include "flowtrace/errors.hpp"
#include "flowtrace/rng.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>

namespace flowtrace {

namespace {

ComplexMatrix pencil_at(const SystemModel& model, const Matrix& Bhat, const Matrix& Dhat,
                        std::complex<double> lambda) {
    const int n = model.n();
    const int m = model.m();
    const Eigen::Index cols = n + Bhat.cols();
    ComplexMatrix P(n + m, cols);
    P.setZero();
    P.topLeftCorner(n, n) =
        lambda * ComplexMatrix::Identity(n, n) - model.A.cast<std::complex<double>>();
    P.topRightCorner(n, Bhat.cols()) = Bhat.cast<std::complex<double>>();
    P.bottomLeftCorner(m, n) = model.C.cast<std::complex<double>>();
    P.bottomRightCorner(m, Dhat.cols()) = Dhat.cast<std::complex<double>>();
    return P;
}

} // namespace

PencilReport pencil_rank_test(const SystemModel& model, const AttackChannels& channels,
                              double rtol) {
    const int n = model.n();
    const int m = model.m();
    const int pp = channels.p_prime();
    const int mp = channels.m_prime();

    Matrix Bhat = Matrix::Zero(n, pp + mp);
    if (pp > 0) Bhat.leftCols(pp) = channels.Ba;
    Matrix Dhat = Matrix::Zero(m, pp + mp);
    if (mp > 0) Dhat.rightCols(mp) = build_Da(channels, m);

    PencilReport report;
    report.tolerance = rtol;
    report.full_rank = n + pp + mp;

    std::vector<std::complex<double>> probes;
    // Eigenvalues of A: with zero initial deviation, rank drops concentrate at
    // system modes and invariant zeros.
    {
        Eigen::EigenSolver<Matrix> es(model.A, /*computeEigenvectors=*/false);
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
            probes.push_back(es.eigenvalues()(i));
        }
    }
    // Generalized eigenvalues of the square pencil (candidate invariant zeros).
    if (n + m == report.full_rank) {
        Matrix H(n + m, n + m);
        H.topLeftCorner(n, n) = model.A;
        H.topRightCorner(n, pp + mp) = -Bhat;
        H.bottomLeftCorner(m, n) = -model.C;
        H.bottomRightCorner(m, pp + mp) = -Dhat;
        Matrix E = Matrix::Zero(n + m, n + m);
        E.topLeftCorner(n, n) = Matrix::Identity(n, n);
        Eigen::GeneralizedEigenSolver<Matrix> ges(H, E, /*computeEigenvectors=*/false);
        for (Eigen::Index i = 0; i < ges.alphas().size(); ++i) {
            const std::complex<double> a = ges.alphas()(i);
            const double b = ges.betas()(i);
            if (std::abs(b) > 1e-12 * std::max(1.0, std::abs(a))) {
                probes.push_back(a / b);
            }
        }
    }
    // Pseudorandom probes guard against coincidental drops elsewhere.
    {
        SplitMix64 rng(0x5AFE5EEDULL);
        const double radius = 2.0 * std::max(1.0, spectral_radius(model.A));
        for (int i = 0; i < 32; ++i) {
            const double r = radius * std::sqrt(rng.next_double());
            const double th = 2.0 * 3.14159265358979323846 * rng.next_double();
            probes.emplace_back(r * std::cos(th), r * std::sin(th));
        }
    }

    for (const auto& lambda : probes) {
        const int rank = svd_rank(pencil_at(model, Bhat, Dhat, lambda), rtol);
        report.rank_profile.push_back({lambda, rank});
        if (rank < report.full_rank) {
            report.stealthy_exists = true;
            if (!report.witness_lambda) report.witness_lambda = lambda;
        }
    }
    return report;
}

std::optional<WitnessAttack> synthesize_zero_flow_attack(const SystemModel& model,
                                                         const AttackChannels& channels,
                                                         int T, double tol) {
    const int n = model.n();
    const int m = model.m();
    const int pp = channels.p_prime();
    const int mp = channels.m_prime();
    if (T < n - pp + 1) {
        throw ValidationError("synthesize_zero_flow_attack: horizon too short (need T >= "
                              + std::to_string(n - pp + 1) + ")");
    }
    const Eigen::Index cols =
        static_cast<Eigen::Index>(T) * pp + static_cast<Eigen::Index>(T + 1) * mp;
    if (cols == 0) return std::nullopt;

    const Matrix Da = build_Da(channels, m);
    const Eigen::Index rows = static_cast<Eigen::Index>(T + 1) * m;

    // Column order: ua_0..ua_{T-1}, then da_0..da_T. The ua_j column block
    // carries the forced response C A^{k-1-j} Ba into every later output row.
    Matrix G = Matrix::Zero(rows, cols);
    std::vector<Matrix> Apow(static_cast<size_t>(T) + 1);
    Apow[0] = Matrix::Identity(n, n);
    for (int i = 1; i <= T; ++i) Apow[static_cast<size_t>(i)] = model.A * Apow[static_cast<size_t>(i - 1)];
    for (int j = 0; j < T && pp > 0; ++j) {
        for (int k = j + 1; k <= T; ++k) {
            G.block(static_cast<Eigen::Index>(k) * m, static_cast<Eigen::Index>(j) * pp, m, pp) =
                model.C * Apow[static_cast<size_t>(k - 1 - j)] * channels.Ba;
        }
    }
    const Eigen::Index doff = static_cast<Eigen::Index>(T) * pp;
    for (int j = 0; j <= T && mp > 0; ++j) {
        G.block(static_cast<Eigen::Index>(j) * m, doff + static_cast<Eigen::Index>(j) * mp,
                m, mp) = Da;
    }

    Eigen::JacobiSVD<Matrix> svd(G, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double smax = sv.size() > 0 ? sv.maxCoeff() : 0.0;
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > tol * smax) ++rank;
    }
    if (rank >= cols) return std::nullopt;

    const Vector w = svd.matrixV().col(cols - 1); // unit norm, smallest singular value
    WitnessAttack out;
    out.ua_seq.reserve(static_cast<size_t>(T));
    for (int j = 0; j < T; ++j) {
        out.ua_seq.push_back(w.segment(static_cast<Eigen::Index>(j) * pp, pp));
    }
    out.da_seq.reserve(static_cast<size_t>(T) + 1);
    for (int j = 0; j <= T; ++j) {
        out.da_seq.push_back(w.segment(doff + static_cast<Eigen::Index>(j) * mp, mp));
    }

    Vector dx = Vector::Zero(n);
    for (int k = 0; k <= T; ++k) {
        Vector dy = model.C * dx;
        if (mp > 0) dy += Da * out.da_seq[static_cast<size_t>(k)];
        out.max_output_deviation = std::max(out.max_output_deviation, dy.norm());
        if (k < T) {
            dx = model.A * dx;
            if (pp > 0) dx += channels.Ba * out.ua_seq[static_cast<size_t>(k)];
        }
    }
    return out;
}

} // namespace flowtrace
