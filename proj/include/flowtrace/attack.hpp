#pragma once

#include "flowtrace/model.hpp"
#include "flowtrace/stealth.hpp"

#include <vector>

namespace flowtrace {

/// Sensor outputs captured before attack onset; playback never runs past the
/// recorded length.
struct ReplayBuffer {
    std::vector<Vector> recorded_y;

    int length() const { return static_cast<int>(recorded_y.size()); }
    const Vector& at(int k) const;
};

/// An attack strategy as a value: output-independent kinds carry their input
/// sequences, replay carries its recording plan and (once instantiated by the
/// engine) the per-trial buffer. Immutable after construction; fdi and
/// zero-dynamics policies never see defender outputs, replay sees only the
/// recorded window plus the live channel it overwrites.
struct AttackPolicy {
    AttackKind kind = AttackKind::none;
    std::vector<Vector> ua_seq; // per-step actuator inputs (fdi / zero_dynamics)
    std::vector<Vector> da_seq; // per-step sensor inputs (fdi / zero_dynamics)
    int replay_window = 0;      // N_rec
    ReplayBuffer buffer;        // filled per trial for replay

    /// ua_k; zero vector for kinds without actuator inputs.
    Vector actuator_input(int k, int p_prime) const;

    /// da_k for output-independent kinds; throws for replay (the engine
    /// substitutes the recorded output instead).
    Vector sensor_input(int k, int m_prime) const;
};

/// Fixed-sequence false data injection. The policy replays the sequences and
/// never reads outputs.
AttackPolicy fdi_policy(std::vector<Vector> ua_seq, std::vector<Vector> da_seq);

/// Replay plan: record n_rec outputs before onset, then substitute them for
/// the live outputs. Requires the attacker to own every sensor.
AttackPolicy replay_policy(int n_rec);

/// Per-trial instantiation of a replay plan with its recorded buffer.
AttackPolicy with_recording(const AttackPolicy& plan, ReplayBuffer buffer);

/// Wraps a synthesized zero-output-deviation witness as an output-independent
/// policy, optionally scaled (the null space is closed under scaling).
AttackPolicy zero_dynamics_policy(const WitnessAttack& witness, double scale = 1.0);

/// Sensor bias sequence da_{0:T} driving the residue bias to a constant
/// squared norm: |Delta z_k|^2 = 2 epsilon for every k, along the given unit
/// direction. Solves the bias recursion step by step; throws ValidationError
/// when the attacker's sensors cannot span the requested direction.
std::vector<Vector> design_fdi_sensor_bias(const SystemModel& model,
                                           const AttackChannels& channels, double epsilon,
                                           int T, Vector direction = Vector());

} // namespace flowtrace
