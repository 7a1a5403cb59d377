#pragma once

#include <Eigen/Dense>

namespace flowtrace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;

/// (M + M^T)/2
Matrix symmetrize(const Matrix& m);

/// Largest absolute eigenvalue.
double spectral_radius(const Matrix& m);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue_sym(const Matrix& m);

/// True iff min eigenvalue >= -tol_rel * spectral norm (symmetric input).
bool is_psd(const Matrix& m, double tol_rel = 1e-8);

/// Symmetric PSD square root via eigendecomposition, eigenvalues clamped at 0.
Matrix psd_sqrt(const Matrix& m);

/// Symmetric inverse square root; throws NumericError unless positive definite.
Matrix spd_inv_sqrt(const Matrix& m);

/// log det of a symmetric positive definite matrix; throws NumericError otherwise.
double logdet_spd(const Matrix& m);

/// Solve M X = rhs for symmetric positive definite M.
Matrix solve_spd(const Matrix& m, const Matrix& rhs);

/// Rank by singular values above rtol * sigma_max.
int svd_rank(const ComplexMatrix& m, double rtol);

} // namespace flowtrace
