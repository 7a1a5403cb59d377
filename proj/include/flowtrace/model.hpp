#pragma once

#include "flowtrace/linalg.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace flowtrace {

/// Discrete LTI plant with Gaussian process/measurement noise and a Gaussian
/// prior on the initial state.
///
///   x_{k+1} = A x_k + B u_k + w_k,   w_k ~ N(0, Q)
///   y_k     = C x_k + v_k,           v_k ~ N(0, R)
///   x_0     ~ N(x0_mean, x0_cov)
struct SystemModel {
    Matrix A;       // n x n
    Matrix B;       // n x p
    Matrix C;       // m x n
    Matrix Q;       // n x n, PSD
    Matrix R;       // m x m, PD
    Vector x0_mean; // n
    Matrix x0_cov;  // n x n, PSD

    int n() const { return static_cast<int>(A.rows()); }
    int p() const { return static_cast<int>(B.cols()); }
    int m() const { return static_cast<int>(C.rows()); }
};

/// Channels the attacker controls: an additive actuator map Ba and a strictly
/// increasing set of sensor indices (1-based). The sensor selection matrix Da
/// is derived, never stored.
struct AttackChannels {
    Matrix Ba;                // n x p'
    std::vector<int> sensors; // subset of {1..m}, strictly increasing

    int p_prime() const { return static_cast<int>(Ba.cols()); }
    int m_prime() const { return static_cast<int>(sensors.size()); }
};

enum class AttackKind { none, fdi, zero_dynamics, replay };

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& s);

/// Parameters of a false data injection: either constant per-step inputs or a
/// residue-bias calibration target epsilon (with an optional unit direction).
struct FdiConfig {
    Vector ua_const; // size p' or empty
    Vector da_const; // size m' or empty
    std::optional<double> epsilon;
    Vector direction; // size m or empty; used with epsilon
};

struct ZeroDynConfig {
    double scale = 1.0;
};

struct DetectorSpec {
    enum class Kind { chi_squared, neyman_pearson };
    Kind kind = Kind::neyman_pearson;
    int window = 1;                     // chi-squared window length
    std::optional<double> delta = 0.05; // detection-power target: beta_k >= 1 - delta
    std::optional<double> threshold;    // fixed threshold alternative
};

std::string to_string(DetectorSpec::Kind kind);

/// One experiment: horizon, trial count, master seed, attack selection,
/// optional watermark covariance and the detector to score trials with.
struct ScenarioConfig {
    int horizon = 1;
    int trials = 1;
    std::uint64_t seed = 0;
    AttackKind attack_kind = AttackKind::none;
    FdiConfig fdi;
    ZeroDynConfig zero_dynamics;
    std::optional<Matrix> watermark_cov; // p x p PSD
    DetectorSpec detector;

    // Not serialized: when set, run_experiment rescales watermark_cov so the
    // LQG cost increase hits this fraction of the optimal cost.
    std::optional<double> watermark_deltaJ;
};

struct ModelFile {
    SystemModel system;
    AttackChannels attack;
    ScenarioConfig scenario;
};

/// Checks every SystemModel invariant. Symmetric matrices are replaced by
/// (M + M^T)/2 when the asymmetry is below tolerance, rejected otherwise.
/// Throws ValidationError naming the offending field.
SystemModel validate_model(const SystemModel& model);

/// Checks AttackChannels invariants against a plant with m sensors.
AttackChannels validate_channels(const AttackChannels& channels, int n, int m);

void validate_scenario(const ScenarioConfig& scenario, const SystemModel& model,
                       const AttackChannels& channels);

/// Sensor selection matrix: Da[u][v] = 1 iff u == sensors[v] (1-based).
Matrix build_Da(const AttackChannels& channels, int m);

/// Parse and validate a model document. Unknown keys are rejected.
ModelFile parse_model(const std::string& text);

/// Read a model file from disk; UsageError when the file cannot be opened.
ModelFile load_model(const std::string& path);

/// Serialize to the model-file JSON schema. Round-trips bit-identically
/// through parse_model for finite values.
std::string save_model(const ModelFile& file);

void save_model_file(const ModelFile& file, const std::string& path);

} // namespace flowtrace
