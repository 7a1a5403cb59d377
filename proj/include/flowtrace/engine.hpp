#pragma once

#include "flowtrace/attack.hpp"
#include "flowtrace/detection.hpp"
#include "flowtrace/infoflow.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace flowtrace {

/// One closed-loop trajectory. Regenerating with the same seed reproduces the
/// record bit-identically.
struct TrialRecord {
    std::uint64_t seed = 0;
    bool diverged = false;
    std::vector<Vector> x_seq;  // true state, 0..T
    std::vector<Vector> u_seq;  // applied control, 0..T
    std::vector<Vector> y_seq;  // defender-visible output, 0..T
    std::vector<Vector> z_seq;  // normalized residue, 0..T
    std::vector<Vector> du_seq; // watermark realization, 0..T
    std::vector<Vector> ua_seq; // attacker actuator input, 0..T
    std::vector<Vector> da_seq; // attacker sensor input, 0..T
    Vector xhat0;               // defender prediction estimate at onset
    Vector xhat_rec_start;      // prediction estimate when recording began
    std::vector<Vector> recorded_y; // replay recording window (trailing burn-in)
    std::vector<Vector> recorded_z; // residues of the recorded window
};

struct SimOptions {
    enum class FilterMode { time_varying, steady_state };
    FilterMode filter_mode = FilterMode::time_varying;
    int burn_in = 0;       // pre-onset steps; required for replay
    int record_window = 0; // trailing burn-in outputs to capture
    double divergence_limit = 1e12;
};

/// Runs the loop x_{k+1} = A x + B u + Ba ua + w, y = C x + Da da + v with
/// u_k = L xhat_{k|k} + du_k and the attack policy intercepting its channels.
/// Replay policies are instantiated from the recorded burn-in tail; the other
/// kinds replay their fixed sequences. Noise draw order per trial: x0, then
/// per step w, v, and (when watermarking) du.
TrialRecord simulate_trial(const SystemModel& model, const AttackChannels& channels,
                           const FeedbackLaw& law, const SteadyStateFilter& ssf,
                           const AttackPolicy& policy, const Matrix& Qwm, int T,
                           std::uint64_t seed, const SimOptions& opts);

struct ExperimentSummary {
    std::string scenario_id;
    int horizon = 0;
    int trials = 0;
    std::uint64_t seed = 0;
    std::string detector_name;

    std::vector<double> mean_perstep_kl;   // attack ensemble average, 0..T
    std::vector<double> cum_if_lowerbound; // (sum_{j<=k} mean_perstep_kl[j])/(k+1)
    std::vector<double> exact_if_curve;    // closed-form IF_k when available
    bool has_exact = false;
    double epsilon_bound = 0.0;            // watermark detectability floor
    bool has_epsilon = false;

    InfoFlowReport aggregate;
    std::vector<RocRecord> roc;
    std::optional<double> decay;

    double J_star = 0.0;       // optimal LQG cost
    double J_watermarked = 0.0;
    double deltaJ_ratio = 0.0; // (J_watermarked - J_star)/J_star
    double q_multiplier = 0.0; // applied watermark scaling
    bool watermarked = false;
};

/// Full scenario driver: LQG design, optional watermark calibration to the
/// deltaJ target (bisection on a scalar multiplier of the configured shape),
/// both trial ensembles, per-step divergence aggregation, detector scoring and
/// ROC estimation. `jobs` workers simulate trials concurrently; results are
/// reduced in trial order, so the output is independent of jobs.
ExperimentSummary run_experiment(const ScenarioConfig& config, const SystemModel& model,
                                 const AttackChannels& channels, int jobs = 1);

/// Trial seed streams: 0 = no-attack ensemble, 1 = attack ensemble.
constexpr std::uint64_t kStreamH0 = 0;
constexpr std::uint64_t kStreamH1 = 1;

} // namespace flowtrace
