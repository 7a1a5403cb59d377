#pragma once

#include "flowtrace/estimation.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace flowtrace {

struct GaussianDist {
    Vector mean;
    Matrix cov;
};

/// KL divergence between Gaussians,
///
///   D(N1 || N0) = -l/2 + tr(S0^{-1} S1)/2 + log det(S0 S1^{-1})/2
///                 + (m1-m0)^T S0^{-1} (m1-m0)/2.
///
/// Nonnegative, zero iff the distributions coincide. Throws NumericError when
/// either covariance is singular.
double kl_gaussian(const GaussianDist& p1, const GaussianDist& p0);

/// Average of per-step residue divergences: (sum_k D_k)/(T+1) with T+1 the
/// sequence length. This never exceeds the joint divergence; the gap is the
/// accumulated mutual information between each residue and its past.
double if_lower_bound(const std::vector<double>& per_step);

/// Deterministic residue bias induced by an output-independent attack.
struct FdiResidueBias {
    std::vector<Vector> delta_e; // Delta e_{k|k-1}, k = 0..T (Delta e_0 = 0)
    std::vector<Vector> delta_z; // Delta z_k, k = 0..T
};

/// Exact bias recursion with the time-varying filter gains:
///
///   Delta e_{k+1} = (A - A K_k C) Delta e_k + Ba ua_k - A K_k Da da_k
///   Delta z_k     = (C P_k C^T + R)^{-1/2} (C Delta e_k + Da da_k)
///
/// da_seq must cover 0..T (length T+1); ua_seq must cover 0..T-1.
FdiResidueBias fdi_residue_bias(const SystemModel& model, const AttackChannels& channels,
                                const std::vector<Vector>& ua_seq,
                                const std::vector<Vector>& da_seq);

struct InfoFlowReport {
    int horizon = 0;
    std::optional<double> exact_if;       // normalized joint divergence, when closed-form
    double lower_bound_if = 0.0;          // (sum per_step_kl)/(T+1)
    std::vector<double> per_step_kl;      // D_k, k = 0..T
    std::string method;
    std::optional<double> kl_joint_upper; // horizon-independent bound on the
                                          // un-normalized joint divergence
};

/// Information flow of a deterministic residue bias: the attacked residues are
/// N(Delta z, I), so the joint divergence is |Delta z_{0:T}|^2 / 2 and the
/// per-step bound is tight (independent residues: zero mutual-information gap).
InfoFlowReport if_fdi(const FdiResidueBias& bias, int T);

/// Exact information flow of a replay attack without watermarking, from the
/// joint Gaussian of the attacked residues:
///
///   mean block j:      -Pz^{-1/2} C Acl^j xhat0
///   cov block (j,l):    Pz^{-1/2} C Acl^j W (Acl^l)^T C^T Pz^{-1/2} + delta_{jl} I
///
/// Also fills kl_joint_upper with the Lyapunov-based bound built from
/// X1 = Acl X1 Acl^T + W and X2 = Acl^T X2 Acl + C^T Pz^{-1} C.
/// Requires ssf.W (see steady_state_prediction_cov) and rho(Acl) < 1.
InfoFlowReport if_replay_exact(const SystemModel& model, const SteadyStateFilter& ssf,
                               const FeedbackLaw& law, const Vector& x0_mean, int T);

/// Asymptotic per-step information-flow bound of watermarked replay:
/// epsilon = tr(Pz^{-1} C Sigma C^T)/2 with Sigma = Acl Sigma Acl^T + B Qwm B^T.
/// Linear in Qwm.
double if_replay_watermark_bound(const SystemModel& model, const SteadyStateFilter& ssf,
                                 const FeedbackLaw& law, const Matrix& Qwm);

/// Incremental generator of the per-step residue distribution under replay,
/// conditioned on the defender-known onset estimate and watermark realization:
///
///   z_k ~ N(mu_k, Sigma_k + I)
///   mu_k    = -Pz^{-1/2} C (Acl^k xhat0 + sum_{j<k} Acl^{k-1-j} B du_j)
///   Sigma_k =  Pz^{-1/2} C (Acl^k W Acl^k^T + sum_{j<k} Acl^j B Qwm B^T Acl^j^T) C^T Pz^{-1/2}
///
/// Call current() for step k, then advance(du_k) to move to k+1.
class ReplayStepDists {
public:
    ReplayStepDists(const SystemModel& model, const SteadyStateFilter& ssf,
                    const FeedbackLaw& law, const Matrix& Qwm, const Vector& xhat0);

    GaussianDist current() const;       // N(mu_k, Sigma_k + I)
    Vector current_mean() const;        // mu_k
    Matrix current_extra_cov() const;   // Sigma_k (without the +I)
    void advance(const Vector& du_k);

private:
    Matrix Pzi_, C_, Acl_, B_, BQB_;
    Vector drift_;   // Acl^k xhat0
    Vector conv_;    // sum Acl^{k-1-j} B du_j
    Matrix Wk_;      // Acl^k W Acl^k^T
    Matrix Vk_;      // sum_{j<k} Acl^j B Qwm B^T Acl^j^T
    bool watermarked_;
};

/// Per-step information-flow report for watermarked replay, given the realized
/// watermark sequence du_seq (covering 0..T-1 at least) and the onset estimate.
/// Verifies the per-step inequality tr(Sigma_k) - log det(I + Sigma_k) >= 0.
InfoFlowReport if_replay_watermark_perstep(const SystemModel& model,
                                           const SteadyStateFilter& ssf,
                                           const FeedbackLaw& law, const Matrix& Qwm,
                                           const std::vector<Vector>& du_seq, int T,
                                           const Vector& xhat0);

/// Both sides of the output/residue divergence identity for a deterministic
/// attack bias under a linear policy u = L xhat_{k|k} (L empty: zero policy).
/// The joint Gaussians of y_{0:T} and z_{0:T} are built explicitly by
/// propagating the affine maps from (x0, w, v); both divergences are then
/// evaluated with kl_gaussian. Returns (kl_y, kl_z).
std::pair<double, double> kl_outputs_equals_kl_residues_check(
    const SystemModel& model, const AttackChannels& channels,
    const std::vector<Vector>& ua_seq, const std::vector<Vector>& da_seq, int T,
    const std::optional<Matrix>& L);

} // namespace flowtrace
