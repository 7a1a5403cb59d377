#pragma once

#include "flowtrace/engine.hpp"
#include "flowtrace/rng.hpp"

#include <vector>

// Shared fixtures and independent oracles. Oracles are plain loops over Eigen
// types on purpose: they must not share code with the implementation they check.

namespace ft = flowtrace;

inline ft::SystemModel double_integrator() {
    ft::SystemModel m;
    m.A = ft::Matrix{{1.0, 0.1}, {0.0, 1.0}};
    m.B = ft::Matrix{{0.005}, {0.1}};
    m.C = ft::Matrix::Identity(2, 2);
    m.Q = 0.1 * ft::Matrix::Identity(2, 2);
    m.R = 0.1 * ft::Matrix::Identity(2, 2);
    m.x0_mean = ft::Vector{{1.0, 0.0}};
    m.x0_cov = ft::Matrix::Identity(2, 2);
    return m;
}

inline ft::SystemModel scalar_model(double a, double b, double c, double q, double r,
                                    double x0m = 0.0, double x0c = 1.0) {
    ft::SystemModel m;
    m.A = ft::Matrix::Constant(1, 1, a);
    m.B = ft::Matrix::Constant(1, 1, b);
    m.C = ft::Matrix::Constant(1, 1, c);
    m.Q = ft::Matrix::Constant(1, 1, q);
    m.R = ft::Matrix::Constant(1, 1, r);
    m.x0_mean = ft::Vector::Constant(1, x0m);
    m.x0_cov = ft::Matrix::Constant(1, 1, x0c);
    return m;
}

inline ft::AttackChannels all_sensor_channels(const ft::SystemModel& m) {
    ft::AttackChannels ch;
    ch.Ba = ft::Matrix::Zero(m.n(), 0);
    for (int s = 1; s <= m.m(); ++s) ch.sensors.push_back(s);
    return ch;
}

// Prediction-covariance iteration: P <- A P A^T + Q - A P C^T (C P C^T + R)^{-1} C P A^T.
inline ft::Matrix riccati_iteration_oracle(const ft::SystemModel& m, int steps) {
    ft::Matrix P = m.x0_cov;
    for (int i = 0; i < steps; ++i) {
        const ft::Matrix Pz = m.C * P * m.C.transpose() + m.R;
        const ft::Matrix K = P * m.C.transpose() * Pz.inverse();
        P = m.A * P * m.A.transpose() + m.Q - m.A * K * m.C * P * m.A.transpose();
        P = 0.5 * (P + P.transpose());
    }
    return P;
}

// Control Riccati iteration: S <- A^T S A + Wx - A^T S B (B^T S B + Wu)^{-1} B^T S A.
inline ft::Matrix control_riccati_oracle(const ft::Matrix& A, const ft::Matrix& B,
                                         const ft::Matrix& Wx, const ft::Matrix& Wu,
                                         int steps) {
    ft::Matrix S = Wx;
    for (int i = 0; i < steps; ++i) {
        const ft::Matrix G = (B.transpose() * S * B + Wu).inverse();
        S = A.transpose() * S * A + Wx
            - A.transpose() * S * B * G * B.transpose() * S * A;
        S = 0.5 * (S + S.transpose());
    }
    return S;
}

// Truncated series sum_{j<=J} M^j V (M^j)^T.
inline ft::Matrix lyapunov_series_oracle(const ft::Matrix& M, const ft::Matrix& V, int terms) {
    ft::Matrix X = ft::Matrix::Zero(M.rows(), M.cols());
    ft::Matrix Mj = ft::Matrix::Identity(M.rows(), M.cols());
    for (int j = 0; j < terms; ++j) {
        X += Mj * V * Mj.transpose();
        Mj = M * Mj;
    }
    return 0.5 * (X + X.transpose());
}

// Closed-loop simulation with a time-varying Kalman filter, optionally carrying
// additive attack inputs. Returns the residue sequence. Shared-noise pairs are
// produced by passing the same seed with and without the attack.
struct OracleSim {
    std::vector<ft::Vector> z_seq;
    std::vector<ft::Vector> y_seq;
    std::vector<ft::Vector> x_seq;
};

inline OracleSim paired_noise_sim(const ft::SystemModel& m, const ft::Matrix& L,
                                  const ft::Matrix& Ba, const ft::Matrix& Da,
                                  const std::vector<ft::Vector>& ua,
                                  const std::vector<ft::Vector>& da, int T,
                                  std::uint64_t seed) {
    ft::GaussianSampler g(seed);
    const ft::Matrix x0s = ft::psd_sqrt(m.x0_cov);
    const ft::Matrix qs = ft::psd_sqrt(m.Q);
    const ft::Matrix rs = ft::psd_sqrt(m.R);
    ft::Vector x = m.x0_mean + x0s * g.vec(m.n());
    ft::Vector xh = m.x0_mean;
    ft::Matrix P = m.x0_cov;
    OracleSim out;
    for (int k = 0; k <= T; ++k) {
        ft::Vector y = m.C * x + rs * g.vec(m.m());
        if (Da.cols() > 0 && k < static_cast<int>(da.size())) y += Da * da[static_cast<size_t>(k)];
        const ft::Matrix Pz = m.C * P * m.C.transpose() + m.R;
        const ft::Matrix K = P * m.C.transpose() * Pz.inverse();
        const ft::Vector z = ft::spd_inv_sqrt(Pz) * (y - m.C * xh);
        const ft::Vector xf = xh + K * (y - m.C * xh);
        out.z_seq.push_back(z);
        out.y_seq.push_back(y);
        out.x_seq.push_back(x);
        const ft::Vector u = L.size() > 0 ? ft::Vector(L * xf) : ft::Vector(ft::Vector::Zero(m.p()));
        x = m.A * x + m.B * u + qs * g.vec(m.n());
        if (Ba.cols() > 0 && k < static_cast<int>(ua.size())) x += Ba * ua[static_cast<size_t>(k)];
        xh = m.A * xf + m.B * u;
        P = m.A * P * m.A.transpose() + m.Q - m.A * K * m.C * P * m.A.transpose();
        P = 0.5 * (P + P.transpose());
    }
    return out;
}

// Brute-force stacked null-space verdict for zero-output-deviation attacks.
inline bool stacked_nullspace_oracle(const ft::SystemModel& m, const ft::AttackChannels& ch,
                                     int T) {
    const int pp = ch.p_prime();
    const int mp = ch.m_prime();
    const Eigen::Index cols = static_cast<Eigen::Index>(T) * pp
                              + static_cast<Eigen::Index>(T + 1) * mp;
    if (cols == 0) return false;
    ft::Matrix Da = ft::Matrix::Zero(m.m(), mp);
    for (int v = 0; v < mp; ++v) Da(ch.sensors[static_cast<size_t>(v)] - 1, v) = 1.0;
    ft::Matrix G = ft::Matrix::Zero(static_cast<Eigen::Index>(T + 1) * m.m(), cols);
    for (int j = 0; j < T && pp > 0; ++j) {
        ft::Matrix Ak = ft::Matrix::Identity(m.n(), m.n());
        for (int k = j + 1; k <= T; ++k) {
            G.block(static_cast<Eigen::Index>(k) * m.m(), static_cast<Eigen::Index>(j) * pp,
                    m.m(), pp) = m.C * Ak * ch.Ba;
            Ak = m.A * Ak;
        }
    }
    for (int j = 0; j <= T && mp > 0; ++j) {
        G.block(static_cast<Eigen::Index>(j) * m.m(),
                static_cast<Eigen::Index>(T) * pp + static_cast<Eigen::Index>(j) * mp,
                m.m(), mp) = Da;
    }
    Eigen::JacobiSVD<ft::Matrix> svd(G);
    const auto& sv = svd.singularValues();
    const double smax = sv.size() ? sv.maxCoeff() : 0.0;
    if (smax == 0.0) return true;
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > 1e-9 * smax) ++rank;
    }
    return rank < cols;
}
