#include "flowtrace/estimation.hpp"

#include "flowtrace/errors.hpp"

#include <cmath>

namespace flowtrace {

namespace {

constexpr double kRiccatiTol = 1e-12;
constexpr int kRiccatiMaxIter = 100000;

double rel_change(const Matrix& next, const Matrix& prev) {
    const double scale = std::max(next.norm(), 1.0);
    return (next - prev).norm() / scale;
}

} // namespace

FilterState init_filter(const SystemModel& model) {
    FilterState s;
    s.k = -1;
    s.x_pred = model.x0_mean;
    s.P_pred = model.x0_cov;
    s.x_filt = Vector::Zero(model.n());
    s.K = Matrix::Zero(model.n(), model.m());
    s.z = Vector::Zero(model.m());
    return s;
}

FilterState kalman_step(const FilterState& state, const SystemModel& model,
                        const Vector& u, const Vector& y) {
    if (u.size() != model.p()) throw ValidationError("kalman_step: u must have length p");
    if (y.size() != model.m()) throw ValidationError("kalman_step: y must have length m");

    const Matrix& P = state.P_pred;
    const Matrix Pz = symmetrize(model.C * P * model.C.transpose() + model.R);
    Matrix Pz_is;
    try {
        Pz_is = spd_inv_sqrt(Pz);
    } catch (const NumericError&) {
        throw NumericError("kalman_step: innovation covariance is not positive definite");
    }
    const Matrix K = solve_spd(Pz, model.C * P.transpose()).transpose(); // P C^T Pz^{-1}
    const Vector innov = y - model.C * state.x_pred;

    FilterState next;
    next.k = state.k + 1;
    next.z = Pz_is * innov;
    next.K = K;
    next.x_filt = state.x_pred + K * innov;
    next.x_pred = model.A * next.x_filt + model.B * u;
    next.P_pred = symmetrize(model.A * P * model.A.transpose() + model.Q
                             - model.A * K * model.C * P * model.A.transpose());
    return next;
}

SteadyStateFilter steady_state_filter(const SystemModel& model) {
    Matrix P = symmetrize(model.Q + Matrix::Identity(model.n(), model.n()));
    double change = 0.0;
    bool converged = false;
    for (int it = 0; it < kRiccatiMaxIter; ++it) {
        const Matrix Pz = symmetrize(model.C * P * model.C.transpose() + model.R);
        const Matrix K = solve_spd(Pz, model.C * P.transpose()).transpose();
        Matrix Pn = symmetrize(model.A * P * model.A.transpose() + model.Q
                               - model.A * K * model.C * P * model.A.transpose());
        change = rel_change(Pn, P);
        P = Pn;
        if (change <= kRiccatiTol) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        throw NumericError("steady_state_filter: Riccati iteration did not converge "
                           "(detectability failure?); last relative change "
                           + std::to_string(change));
    }
    SteadyStateFilter out;
    out.P = P;
    out.Pz = symmetrize(model.C * P * model.C.transpose() + model.R);
    out.K = solve_spd(out.Pz, model.C * P.transpose()).transpose();
    out.Pz_inv_sqrt = spd_inv_sqrt(out.Pz);
    return out;
}

DareResult solve_dare(const Matrix& A, const Matrix& B, const Matrix& Wx, const Matrix& Wu) {
    const int n = static_cast<int>(A.rows());
    const int p = static_cast<int>(B.cols());
    if (A.cols() != n || B.rows() != n) throw ValidationError("solve_dare: A/B dimension mismatch");
    if (Wx.rows() != n || Wx.cols() != n) throw ValidationError("solve_dare: Wx must be n x n");
    if (Wu.rows() != p || Wu.cols() != p) throw ValidationError("solve_dare: Wu must be p x p");
    if (!is_psd(Wx)) throw ValidationError("solve_dare: Wx must be PSD");

    Matrix S = symmetrize(Wx);
    double change = 0.0;
    bool converged = false;
    int iters = 0;
    for (; iters < kRiccatiMaxIter; ++iters) {
        const Matrix G = symmetrize(B.transpose() * S * B + Wu);
        const Matrix gain = -solve_spd(G, B.transpose() * S * A);
        Matrix Sn = symmetrize(A.transpose() * S * A + Wx
                               + A.transpose() * S * B * gain);
        change = rel_change(Sn, S);
        S = Sn;
        if (change <= kRiccatiTol) {
            converged = true;
            break;
        }
    }
    const Matrix G = symmetrize(B.transpose() * S * B + Wu);
    DareResult out;
    out.S = S;
    out.gain = -solve_spd(G, B.transpose() * S * A);
    out.iterations = iters;
    out.residual = (symmetrize(A.transpose() * S * A + Wx
                               + A.transpose() * S * B * out.gain) - S).norm();
    if (!converged) {
        throw NumericError("solve_dare: iteration did not converge (non-stabilizable pair?); "
                           "residual norm " + std::to_string(out.residual));
    }
    if (spectral_radius(A + B * out.gain) >= 1.0) {
        throw NumericError("solve_dare: converged solution is not stabilizing");
    }
    return out;
}

Matrix solve_dlyap(const Matrix& M, const Matrix& V) {
    const int n = static_cast<int>(M.rows());
    if (M.cols() != n || V.rows() != n || V.cols() != n) {
        throw ValidationError("solve_dlyap: dimension mismatch");
    }
    const double rho = spectral_radius(M);
    if (rho >= 1.0) {
        throw NumericError("solve_dlyap: unstable argument (spectral radius "
                           + std::to_string(rho) + ")");
    }
    // Accumulated doubling: X_j = sum_{i<2^j} M^i V (M^i)^T. Quadratic
    // convergence, so a handful of rounds reaches machine precision.
    Matrix X = symmetrize(V);
    Matrix Mk = M;
    for (int round = 0; round < 128; ++round) {
        const Matrix term = Mk * X * Mk.transpose();
        if (term.norm() <= 1e-18 * std::max(X.norm(), 1e-300)) break;
        X = symmetrize(X + term);
        Mk = Mk * Mk;
    }
    return X;
}

FeedbackLaw design_lqg(const SystemModel& model) {
    if (model.p() < 1) throw ValidationError("design_lqg: model has no control inputs");
    const DareResult ctrl = solve_dare(model.A, model.B,
                                       Matrix::Identity(model.n(), model.n()),
                                       Matrix::Identity(model.p(), model.p()));
    const SteadyStateFilter ssf = steady_state_filter(model);
    FeedbackLaw law;
    law.L = ctrl.gain;
    law.Acl = (model.A + model.B * law.L)
              * (Matrix::Identity(model.n(), model.n()) - ssf.K * model.C);
    law.rho_Acl = spectral_radius(law.Acl);
    return law;
}

Matrix steady_state_prediction_cov(const SystemModel& model, const SteadyStateFilter& ssf,
                                   const FeedbackLaw& law, const Matrix& Qwm) {
    const Matrix ABL = model.A + model.B * law.L;
    Matrix V = ABL * ssf.K * ssf.Pz * ssf.K.transpose() * ABL.transpose();
    if (Qwm.size() > 0) V += model.B * Qwm * model.B.transpose();
    return solve_dlyap(ABL, symmetrize(V));
}

double lqg_cost(const SystemModel& model, const SteadyStateFilter& ssf, const FeedbackLaw& law,
                const Matrix& Qwm) {
    const int n = model.n();
    const Matrix ABL = model.A + model.B * law.L;
    const Matrix AKC = model.A - model.A * ssf.K * model.C;
    const Matrix AK = model.A * ssf.K;
    const Matrix BK = ABL * ssf.K;

    // Joint state (e, xhat_pred) with e = x - xhat_pred:
    //   e_{k+1}    = (A - A K C) e_k + w_k - A K v_k
    //   xhat_{k+1} = (A+BL) xhat_k + (A+BL) K (C e_k + v_k) + B du_k
    Matrix M = Matrix::Zero(2 * n, 2 * n);
    M.topLeftCorner(n, n) = AKC;
    M.bottomLeftCorner(n, n) = BK * model.C;
    M.bottomRightCorner(n, n) = ABL;

    Matrix V = Matrix::Zero(2 * n, 2 * n);
    V.topLeftCorner(n, n) = model.Q + AK * model.R * AK.transpose();
    V.topRightCorner(n, n) = -AK * model.R * BK.transpose();
    V.bottomLeftCorner(n, n) = V.topRightCorner(n, n).transpose();
    V.bottomRightCorner(n, n) = BK * model.R * BK.transpose();
    if (Qwm.size() > 0) {
        V.bottomRightCorner(n, n) += model.B * Qwm * model.B.transpose();
    }

    const Matrix Sj = solve_dlyap(M, symmetrize(V));
    const Matrix S11 = Sj.topLeftCorner(n, n);
    const Matrix S12 = Sj.topRightCorner(n, n);
    const Matrix S22 = Sj.bottomRightCorner(n, n);

    // x = e + xhat_pred; u = L xhat_pred + L K C e + L K v + du.
    const Matrix Sx = S11 + S22 + S12 + S12.transpose();
    const Matrix LKC = law.L * ssf.K * model.C;
    Matrix Cu = law.L * S22 * law.L.transpose() + LKC * S11 * LKC.transpose()
                + law.L * S12.transpose() * LKC.transpose()
                + LKC * S12 * law.L.transpose()
                + (law.L * ssf.K) * model.R * (law.L * ssf.K).transpose();
    if (Qwm.size() > 0) Cu += Qwm;
    return Sx.trace() + Cu.trace();
}

double lqg_cost(const SystemModel& model, const FeedbackLaw& law, const Matrix& Qwm) {
    const SteadyStateFilter ssf = steady_state_filter(model);
    return lqg_cost(model, ssf, law, Qwm);
}

} // namespace flowtrace
