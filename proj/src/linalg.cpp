#include "flowtrace/linalg.hpp"

#include "flowtrace/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>

namespace flowtrace {

Matrix symmetrize(const Matrix& m) {
    return 0.5 * (m + m.transpose());
}

double spectral_radius(const Matrix& m) {
    if (m.rows() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

double min_eigenvalue_sym(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

bool is_psd(const Matrix& m, double tol_rel) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double norm = es.eigenvalues().cwiseAbs().maxCoeff();
    return lo >= -tol_rel * std::max(norm, 1e-300);
}

Matrix psd_sqrt(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
    Vector w = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * w.asDiagonal() * es.eigenvectors().transpose();
}

Matrix spd_inv_sqrt(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
    const Vector& w = es.eigenvalues();
    const double norm = w.cwiseAbs().maxCoeff();
    if (w.minCoeff() <= 1e-14 * std::max(norm, 1e-300)) {
        throw NumericError("matrix is not positive definite (min eigenvalue "
                           + std::to_string(w.minCoeff()) + ")");
    }
    Vector wi = w.cwiseSqrt().cwiseInverse();
    return es.eigenvectors() * wi.asDiagonal() * es.eigenvectors().transpose();
}

double logdet_spd(const Matrix& m) {
    Eigen::LLT<Matrix> llt(symmetrize(m));
    if (llt.info() != Eigen::Success) {
        throw NumericError("logdet: matrix is not positive definite");
    }
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

Matrix solve_spd(const Matrix& m, const Matrix& rhs) {
    Eigen::LDLT<Matrix> ldlt(symmetrize(m));
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        throw NumericError("solve_spd: matrix is not positive definite");
    }
    return ldlt.solve(rhs);
}

int svd_rank(const ComplexMatrix& m, double rtol) {
    if (m.rows() == 0 || m.cols() == 0) return 0;
    Eigen::JacobiSVD<ComplexMatrix> svd(m);
    const auto& sv = svd.singularValues();
    const double cutoff = rtol * sv.maxCoeff();
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff) ++rank;
    }
    return rank;
}

} // namespace flowtrace
