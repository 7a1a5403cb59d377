#include "flowtrace/infoflow.hpp"

#include "flowtrace/errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace flowtrace {

double kl_gaussian(const GaussianDist& p1, const GaussianDist& p0) {
    const Eigen::Index l = p1.mean.size();
    if (p0.mean.size() != l || p1.cov.rows() != l || p0.cov.rows() != l
        || p1.cov.cols() != l || p0.cov.cols() != l) {
        throw ValidationError("kl_gaussian: dimension mismatch");
    }
    Eigen::LLT<Matrix> llt0(symmetrize(p0.cov));
    if (llt0.info() != Eigen::Success) {
        throw NumericError("kl_gaussian: singular covariance (Sigma0)");
    }
    Eigen::LLT<Matrix> llt1(symmetrize(p1.cov));
    if (llt1.info() != Eigen::Success) {
        throw NumericError("kl_gaussian: singular covariance (Sigma1)");
    }
    const double logdet0 =
        2.0 * llt0.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double logdet1 =
        2.0 * llt1.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double trace_term = llt0.solve(p1.cov).trace();
    const Vector d = p1.mean - p0.mean;
    const double quad = d.dot(llt0.solve(d));
    const double kl = 0.5 * (trace_term - static_cast<double>(l)
                             + (logdet0 - logdet1) + quad);
    return std::max(kl, 0.0);
}

double if_lower_bound(const std::vector<double>& per_step) {
    if (per_step.empty()) throw ValidationError("if_lower_bound: empty sequence");
    double sum = 0.0;
    for (double d : per_step) {
        if (d < 0.0) throw ValidationError("if_lower_bound: negative per-step divergence");
        sum += d;
    }
    return sum / static_cast<double>(per_step.size());
}

FdiResidueBias fdi_residue_bias(const SystemModel& model, const AttackChannels& channels,
                                const std::vector<Vector>& ua_seq,
                                const std::vector<Vector>& da_seq) {
    if (da_seq.empty()) throw ValidationError("fdi_residue_bias: da_seq must cover 0..T");
    const int T = static_cast<int>(da_seq.size()) - 1;
    if (static_cast<int>(ua_seq.size()) < T) {
        throw ValidationError("fdi_residue_bias: ua_seq must cover 0..T-1");
    }
    const Matrix Da = build_Da(channels, model.m());
    for (const auto& d : da_seq) {
        if (d.size() != channels.m_prime()) {
            throw ValidationError("fdi_residue_bias: da entries must have length m'");
        }
    }
    for (int k = 0; k < T; ++k) {
        if (ua_seq[static_cast<size_t>(k)].size() != channels.p_prime()) {
            throw ValidationError("fdi_residue_bias: ua entries must have length p'");
        }
    }

    FdiResidueBias out;
    out.delta_e.reserve(static_cast<size_t>(T) + 1);
    out.delta_z.reserve(static_cast<size_t>(T) + 1);

    Matrix P = model.x0_cov;
    Vector de = Vector::Zero(model.n());
    for (int k = 0; k <= T; ++k) {
        const Matrix Pz = symmetrize(model.C * P * model.C.transpose() + model.R);
        const Matrix Pz_is = spd_inv_sqrt(Pz);
        const Matrix K = solve_spd(Pz, model.C * P.transpose()).transpose();
        const Vector dad = Da * da_seq[static_cast<size_t>(k)];
        out.delta_e.push_back(de);
        out.delta_z.push_back(Pz_is * (model.C * de + dad));
        if (k < T) {
            Vector bau = Vector::Zero(model.n());
            if (channels.p_prime() > 0) bau = channels.Ba * ua_seq[static_cast<size_t>(k)];
            de = (model.A - model.A * K * model.C) * de + bau - model.A * K * dad;
        }
        P = symmetrize(model.A * P * model.A.transpose() + model.Q
                       - model.A * K * model.C * P * model.A.transpose());
    }
    return out;
}

InfoFlowReport if_fdi(const FdiResidueBias& bias, int T) {
    if (static_cast<int>(bias.delta_z.size()) < T + 1) {
        throw ValidationError("if_fdi: bias does not cover 0..T");
    }
    InfoFlowReport out;
    out.horizon = T;
    out.method = "fdi-closed-form";
    double total = 0.0;
    out.per_step_kl.reserve(static_cast<size_t>(T) + 1);
    for (int k = 0; k <= T; ++k) {
        const double sq = bias.delta_z[static_cast<size_t>(k)].squaredNorm();
        out.per_step_kl.push_back(0.5 * sq);
        total += sq;
    }
    out.exact_if = total / (2.0 * (T + 1));
    out.lower_bound_if = if_lower_bound(out.per_step_kl);
    return out;
}

namespace {

void require_replay_inputs(const SteadyStateFilter& ssf, const FeedbackLaw& law) {
    if (ssf.W.size() == 0) {
        throw ValidationError("replay analysis requires ssf.W "
                              "(call steady_state_prediction_cov first)");
    }
    if (law.rho_Acl >= 1.0) {
        throw NumericError("replay analysis requires a stable closed loop "
                           "(rho(Acl) = " + std::to_string(law.rho_Acl) + ")");
    }
}

} // namespace

InfoFlowReport if_replay_exact(const SystemModel& model, const SteadyStateFilter& ssf,
                               const FeedbackLaw& law, const Vector& x0_mean, int T) {
    require_replay_inputs(ssf, law);
    const int m = model.m();
    const int n = model.n();
    const Eigen::Index dim = static_cast<Eigen::Index>(T + 1) * m;
    if (dim > 2000) {
        throw ValidationError("if_replay_exact: joint dimension " + std::to_string(dim)
                              + " exceeds the 2000-dimension cap");
    }

    // Stacked map F with block j = Pz^{-1/2} C Acl^j.
    Matrix F(dim, n);
    Matrix Ak = Matrix::Identity(n, n);
    for (int j = 0; j <= T; ++j) {
        F.middleRows(static_cast<Eigen::Index>(j) * m, m) = ssf.Pz_inv_sqrt * model.C * Ak;
        Ak = Ak * law.Acl;
    }
    const Vector mu = -(F * x0_mean);
    Matrix Sigma = F * ssf.W * F.transpose();
    Sigma.diagonal().array() += 1.0;

    Eigen::LLT<Matrix> llt(symmetrize(Sigma));
    if (llt.info() != Eigen::Success) {
        throw NumericError("if_replay_exact: joint covariance factorization failed");
    }
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double joint_kl =
        0.5 * (Sigma.trace() - static_cast<double>(dim) - logdet + mu.squaredNorm());

    InfoFlowReport out;
    out.horizon = T;
    out.method = "replay-joint-gaussian";
    out.exact_if = std::max(joint_kl, 0.0) / (T + 1);
    out.per_step_kl.reserve(static_cast<size_t>(T) + 1);
    for (int j = 0; j <= T; ++j) {
        const Matrix Fj = F.middleRows(static_cast<Eigen::Index>(j) * m, m);
        const Matrix Sj = Fj * ssf.W * Fj.transpose();
        const Vector mj = mu.segment(static_cast<Eigen::Index>(j) * m, m);
        const double c2 = -logdet_spd(Sj + Matrix::Identity(m, m));
        out.per_step_kl.push_back(0.5 * (mj.squaredNorm() + Sj.trace() + c2));
    }
    out.lower_bound_if = if_lower_bound(out.per_step_kl);

    // Horizon-independent bound on the joint divergence.
    const Matrix X1 = solve_dlyap(law.Acl, ssf.W);
    const Matrix X2 = solve_dlyap(law.Acl.transpose(),
                                  model.C.transpose() * solve_spd(ssf.Pz, model.C));
    const Matrix Wh = psd_sqrt(ssf.W);
    const double c1 = (ssf.Pz_inv_sqrt * model.C * X1 * model.C.transpose()
                       * ssf.Pz_inv_sqrt).trace();
    const double c2 = x0_mean.dot(X2 * x0_mean);
    const double c3 = logdet_spd(Matrix::Identity(n, n) + Wh * X2 * Wh);
    out.kl_joint_upper = 0.5 * (c1 + c2 + c3);
    return out;
}

double if_replay_watermark_bound(const SystemModel& model, const SteadyStateFilter& ssf,
                                 const FeedbackLaw& law, const Matrix& Qwm) {
    if (law.rho_Acl >= 1.0) {
        throw NumericError("if_replay_watermark_bound: unstable closed loop");
    }
    if (Qwm.size() == 0) return 0.0;
    if (Qwm.rows() != model.p() || Qwm.cols() != model.p()) {
        throw ValidationError("if_replay_watermark_bound: Qwm must be p x p");
    }
    if (!is_psd(Qwm)) throw ValidationError("if_replay_watermark_bound: Qwm must be PSD");
    const Matrix Sigma = solve_dlyap(law.Acl,
                                     symmetrize(model.B * Qwm * model.B.transpose()));
    return 0.5 * solve_spd(ssf.Pz, model.C * Sigma * model.C.transpose()).trace();
}

ReplayStepDists::ReplayStepDists(const SystemModel& model, const SteadyStateFilter& ssf,
                                 const FeedbackLaw& law, const Matrix& Qwm,
                                 const Vector& xhat0) {
    require_replay_inputs(ssf, law);
    Pzi_ = ssf.Pz_inv_sqrt;
    C_ = model.C;
    Acl_ = law.Acl;
    B_ = model.B;
    watermarked_ = Qwm.size() > 0;
    BQB_ = watermarked_ ? symmetrize(model.B * Qwm * model.B.transpose())
                        : Matrix::Zero(model.n(), model.n());
    drift_ = xhat0;
    conv_ = Vector::Zero(model.n());
    Wk_ = ssf.W;
    Vk_ = Matrix::Zero(model.n(), model.n());
}

Vector ReplayStepDists::current_mean() const {
    return -(Pzi_ * C_ * (drift_ + conv_));
}

Matrix ReplayStepDists::current_extra_cov() const {
    return symmetrize(Pzi_ * C_ * (Wk_ + Vk_) * C_.transpose() * Pzi_);
}

GaussianDist ReplayStepDists::current() const {
    GaussianDist out;
    out.mean = current_mean();
    out.cov = current_extra_cov();
    out.cov.diagonal().array() += 1.0;
    return out;
}

void ReplayStepDists::advance(const Vector& du_k) {
    conv_ = Acl_ * conv_ + B_ * du_k;
    drift_ = Acl_ * drift_;
    Wk_ = symmetrize(Acl_ * Wk_ * Acl_.transpose());
    if (watermarked_) Vk_ = symmetrize(Acl_ * Vk_ * Acl_.transpose() + BQB_);
}

InfoFlowReport if_replay_watermark_perstep(const SystemModel& model,
                                           const SteadyStateFilter& ssf,
                                           const FeedbackLaw& law, const Matrix& Qwm,
                                           const std::vector<Vector>& du_seq, int T,
                                           const Vector& xhat0) {
    if (static_cast<int>(du_seq.size()) < T && Qwm.size() > 0) {
        throw ValidationError("if_replay_watermark_perstep: du_seq must cover 0..T-1");
    }
    ReplayStepDists dists(model, ssf, law, Qwm, xhat0);
    InfoFlowReport out;
    out.horizon = T;
    out.method = "replay-watermark-perstep";
    out.per_step_kl.reserve(static_cast<size_t>(T) + 1);
    const int m = model.m();
    for (int k = 0; k <= T; ++k) {
        const Vector mu = dists.current_mean();
        const Matrix Sk = dists.current_extra_cov();
        const double c1 = mu.squaredNorm();
        const double c3 = Sk.trace();
        const double c2 = -logdet_spd(Sk + Matrix::Identity(m, m));
        if (c2 + c3 < -1e-10) {
            throw NumericError("if_replay_watermark_perstep: per-step covariance terms "
                               "violate tr(S) >= log det(I+S)");
        }
        out.per_step_kl.push_back(std::max(0.5 * (c1 + c2 + c3), 0.0));
        if (k < T) {
            const Vector du = Qwm.size() > 0 ? du_seq[static_cast<size_t>(k)]
                                             : Vector::Zero(model.p());
            dists.advance(du);
        }
    }
    out.lower_bound_if = if_lower_bound(out.per_step_kl);
    return out;
}

// ---------------------------------------------------------------------------
// Output/residue divergence identity
// ---------------------------------------------------------------------------

std::pair<double, double> kl_outputs_equals_kl_residues_check(
    const SystemModel& model, const AttackChannels& channels,
    const std::vector<Vector>& ua_seq, const std::vector<Vector>& da_seq, int T,
    const std::optional<Matrix>& L) {
    const int n = model.n();
    const int m = model.m();
    if (static_cast<int>(da_seq.size()) < T + 1 || static_cast<int>(ua_seq.size()) < T) {
        throw ValidationError("kl_outputs_equals_kl_residues_check: attack sequences "
                              "must cover the horizon");
    }
    Matrix Lg = Matrix::Zero(model.p(), n);
    if (L) {
        if (L->rows() != model.p() || L->cols() != n) {
            throw ValidationError("kl_outputs_equals_kl_residues_check: L must be p x n");
        }
        Lg = *L;
    }
    const Matrix Da = build_Da(channels, m);

    // Noise source vector s = (x0, w_0..w_{T-1}, v_0..v_T); every defender
    // signal is an affine function of s whose linear map is identical under
    // attack and no attack (the attack only shifts the bias).
    const Eigen::Index src = n + static_cast<Eigen::Index>(T) * n
                             + static_cast<Eigen::Index>(T + 1) * m;
    Matrix S = Matrix::Zero(src, src);
    S.topLeftCorner(n, n) = model.x0_cov;
    for (int k = 0; k < T; ++k) {
        S.block(n + static_cast<Eigen::Index>(k) * n, n + static_cast<Eigen::Index>(k) * n,
                n, n) = model.Q;
    }
    const Eigen::Index voff = n + static_cast<Eigen::Index>(T) * n;
    for (int k = 0; k <= T; ++k) {
        S.block(voff + static_cast<Eigen::Index>(k) * m,
                voff + static_cast<Eigen::Index>(k) * m, m, m) = model.R;
    }

    Matrix x_map = Matrix::Zero(n, src);
    x_map.leftCols(n) = Matrix::Identity(n, n);
    Vector x_att = Vector::Zero(n);   // attack-induced bias of x_k
    Matrix xh_map = Matrix::Zero(n, src);
    Vector xh_att = Vector::Zero(n);  // attack-induced bias of xhat_{k|k-1}
    // The s-independent offsets (x0_mean propagation) are shared by both
    // hypotheses and cancel in the divergence, so only biases are tracked.

    Matrix Gy(static_cast<Eigen::Index>(T + 1) * m, src);
    Vector y_bias(static_cast<Eigen::Index>(T + 1) * m);
    Matrix Gz(static_cast<Eigen::Index>(T + 1) * m, src);
    Vector z_bias(static_cast<Eigen::Index>(T + 1) * m);

    Matrix P = model.x0_cov;
    for (int k = 0; k <= T; ++k) {
        const Matrix Pz = symmetrize(model.C * P * model.C.transpose() + model.R);
        const Matrix Pzi = spd_inv_sqrt(Pz);
        const Matrix K = solve_spd(Pz, model.C * P.transpose()).transpose();

        Matrix y_map = model.C * x_map;
        y_map.middleCols(voff + static_cast<Eigen::Index>(k) * m, m) +=
            Matrix::Identity(m, m);
        const Vector dad = Da * da_seq[static_cast<size_t>(k)];
        const Vector yb = model.C * x_att + dad;

        Gy.middleRows(static_cast<Eigen::Index>(k) * m, m) = y_map;
        y_bias.segment(static_cast<Eigen::Index>(k) * m, m) = yb;
        Gz.middleRows(static_cast<Eigen::Index>(k) * m, m) = Pzi * (y_map - model.C * xh_map);
        z_bias.segment(static_cast<Eigen::Index>(k) * m, m) =
            Pzi * (yb - model.C * xh_att);

        if (k < T) {
            const Matrix xf_map = xh_map + K * (y_map - model.C * xh_map);
            const Vector xf_att = xh_att + K * (yb - model.C * xh_att);
            const Matrix u_map = Lg * xf_map;
            const Vector u_att = Lg * xf_att;
            Matrix x_next = model.A * x_map + model.B * u_map;
            x_next.middleCols(n + static_cast<Eigen::Index>(k) * n, n) +=
                Matrix::Identity(n, n);
            Vector x_next_att = model.A * x_att + model.B * u_att;
            if (channels.p_prime() > 0) {
                x_next_att += channels.Ba * ua_seq[static_cast<size_t>(k)];
            }
            xh_map = model.A * xf_map + model.B * u_map;
            xh_att = model.A * xf_att + model.B * u_att;
            x_map = x_next;
            x_att = x_next_att;
            P = symmetrize(model.A * P * model.A.transpose() + model.Q
                           - model.A * K * model.C * P * model.A.transpose());
        }
    }

    const Matrix Sigma_y = symmetrize(Gy * S * Gy.transpose());
    const Matrix Sigma_z = symmetrize(Gz * S * Gz.transpose());
    GaussianDist y1{y_bias, Sigma_y}, y0{Vector::Zero(y_bias.size()), Sigma_y};
    GaussianDist z1{z_bias, Sigma_z}, z0{Vector::Zero(z_bias.size()), Sigma_z};
    return {kl_gaussian(y1, y0), kl_gaussian(z1, z0)};
}

} // namespace flowtrace
