#pragma once

#include "flowtrace/model.hpp"

namespace flowtrace {

/// Snapshot of the Kalman recursion after consuming (u_k, y_k).
///
/// x_filt, K and z belong to the just-processed step k; x_pred and P_pred are
/// the one-step-ahead prediction for k+1. A freshly initialized state has
/// k == -1 and carries only the prior (x_pred = x0_mean, P_pred = x0_cov).
struct FilterState {
    int k = -1;
    Vector x_pred; // xhat_{k+1|k}
    Matrix P_pred; // P_{k+1|k}
    Vector x_filt; // xhat_{k|k}
    Matrix K;      // K_k
    Vector z;      // z_k, normalized residue
};

FilterState init_filter(const SystemModel& model);

/// One measurement update + time update:
///
///   K_k = P C^T (C P C^T + R)^{-1}
///   z_k = (C P C^T + R)^{-1/2} (y_k - C xhat_{k|k-1})   [symmetric PSD root]
///   xhat_{k|k}   = (I - K_k C) xhat_{k|k-1} + K_k y_k
///   xhat_{k+1|k} = A xhat_{k|k} + B u_k
///   P_{k+1|k}    = A P A^T + Q - A K_k C P A^T
///
/// Deterministic; throws NumericError when the innovation covariance is not
/// positive definite.
FilterState kalman_step(const FilterState& state, const SystemModel& model,
                        const Vector& u, const Vector& y);

/// Fixed point of the one-step prediction Riccati recursion.
struct SteadyStateFilter {
    Matrix P;           // prediction covariance fixed point
    Matrix K;           // steady-state gain
    Matrix Pz;          // innovation covariance C P C^T + R
    Matrix Pz_inv_sqrt; // symmetric (C P C^T + R)^{-1/2}
    Matrix W;           // steady-state covariance of xhat_{k|k-1}; empty until
                        // filled by steady_state_prediction_cov (it depends on
                        // the feedback loop and the watermark)
};

/// Iterates the prediction Riccati equation to convergence (relative change
/// below 1e-12, at most 100000 iterations). Throws NumericError when the
/// iteration fails to converge, reporting the residual norm.
SteadyStateFilter steady_state_filter(const SystemModel& model);

struct FeedbackLaw {
    Matrix L;       // state-feedback gain, u = L xhat_{k|k}
    Matrix Acl;     // (A + B L)(I - K C)
    double rho_Acl; // spectral radius of Acl
};

struct DareResult {
    Matrix S;      // stabilizing solution
    Matrix gain;   // -(B^T S B + Wu)^{-1} B^T S A
    double residual;
    int iterations;
};

/// Stabilizing solution of S = A^T S A + Wx - A^T S B (B^T S B + Wu)^{-1} B^T S A
/// by fixed-point iteration. The closed loop A + B gain has spectral radius < 1.
DareResult solve_dare(const Matrix& A, const Matrix& B, const Matrix& Wx, const Matrix& Wu);

/// Solution of X = M X M^T + V for spectral_radius(M) < 1, V PSD.
/// Throws NumericError("unstable argument") when the radius is >= 1.
Matrix solve_dlyap(const Matrix& M, const Matrix& V);

/// LQG design with identity state and input weights. The returned law carries
/// Acl = (A + B L)(I - K C) with K from the steady-state filter.
FeedbackLaw design_lqg(const SystemModel& model);

/// Steady-state covariance W of the prediction estimate xhat_{k|k-1} in the
/// watermarked feedback loop u = L xhat_{k|k} + du, du ~ N(0, Qwm):
///
///   W = (A+BL) (W + K Pz K^T) (A+BL)^T + B Qwm B^T
///
/// The recursion follows from xhat_{k+1|k} = (A+BL) xhat_{k|k-1}
/// + (A+BL) K innov_k + B du_k with white innovations orthogonal to the past.
/// Pass Qwm = 0 for the unwatermarked loop.
Matrix steady_state_prediction_cov(const SystemModel& model, const SteadyStateFilter& ssf,
                                   const FeedbackLaw& law, const Matrix& Qwm);

/// Exact steady-state cost  J = lim 1/(T+1) E[sum x^T x + u^T u]  of the loop
/// u = L xhat_{k|k} + du, du ~ N(0, Qwm), via one Lyapunov solve over the joint
/// (estimation error, prediction estimate) dynamics. Qwm = 0 gives the optimal
/// LQG cost; J(Qwm) - J(0) is linear in Qwm.
double lqg_cost(const SystemModel& model, const SteadyStateFilter& ssf, const FeedbackLaw& law,
                const Matrix& Qwm);

double lqg_cost(const SystemModel& model, const FeedbackLaw& law, const Matrix& Qwm);

} // namespace flowtrace
