#include "flowtrace/attack.hpp"

#include "flowtrace/errors.hpp"

#include <cmath>

namespace flowtrace {

const Vector& ReplayBuffer::at(int k) const {
    if (k < 0 || k >= length()) {
        throw ValidationError("replay playback index " + std::to_string(k)
                              + " exceeds the recorded window of " + std::to_string(length()));
    }
    return recorded_y[static_cast<size_t>(k)];
}

Vector AttackPolicy::actuator_input(int k, int p_prime) const {
    if ((kind == AttackKind::fdi || kind == AttackKind::zero_dynamics)
        && k < static_cast<int>(ua_seq.size())) {
        return ua_seq[static_cast<size_t>(k)];
    }
    return Vector::Zero(p_prime);
}

Vector AttackPolicy::sensor_input(int k, int m_prime) const {
    if (kind == AttackKind::replay) {
        throw ValidationError("replay substitutes outputs; it has no free sensor input");
    }
    if ((kind == AttackKind::fdi || kind == AttackKind::zero_dynamics)
        && k < static_cast<int>(da_seq.size())) {
        return da_seq[static_cast<size_t>(k)];
    }
    return Vector::Zero(m_prime);
}

AttackPolicy fdi_policy(std::vector<Vector> ua_seq, std::vector<Vector> da_seq) {
    AttackPolicy p;
    p.kind = AttackKind::fdi;
    p.ua_seq = std::move(ua_seq);
    p.da_seq = std::move(da_seq);
    return p;
}

AttackPolicy replay_policy(int n_rec) {
    if (n_rec < 1) throw ValidationError("replay_policy: recording window must be >= 1");
    AttackPolicy p;
    p.kind = AttackKind::replay;
    p.replay_window = n_rec;
    return p;
}

AttackPolicy with_recording(const AttackPolicy& plan, ReplayBuffer buffer) {
    if (plan.kind != AttackKind::replay) {
        throw ValidationError("with_recording: policy is not a replay plan");
    }
    if (buffer.length() < plan.replay_window) {
        throw ValidationError("with_recording: buffer shorter than the recording plan");
    }
    AttackPolicy p = plan;
    p.buffer = std::move(buffer);
    return p;
}

AttackPolicy zero_dynamics_policy(const WitnessAttack& witness, double scale) {
    AttackPolicy p;
    p.kind = AttackKind::zero_dynamics;
    p.ua_seq = witness.ua_seq;
    p.da_seq = witness.da_seq;
    for (auto& u : p.ua_seq) u *= scale;
    for (auto& d : p.da_seq) d *= scale;
    return p;
}

std::vector<Vector> design_fdi_sensor_bias(const SystemModel& model,
                                           const AttackChannels& channels, double epsilon,
                                           int T, Vector direction) {
    if (epsilon < 0.0) throw ValidationError("design_fdi_sensor_bias: epsilon must be >= 0");
    const int m = model.m();
    if (direction.size() == 0) direction = Vector::Unit(m, 0);
    if (direction.size() != m) {
        throw ValidationError("design_fdi_sensor_bias: direction must have length m");
    }
    const double dn = direction.norm();
    if (dn <= 0.0) throw ValidationError("design_fdi_sensor_bias: direction must be nonzero");
    direction /= dn;

    const Matrix Da = build_Da(channels, m);
    if (channels.m_prime() == 0) {
        throw ValidationError("design_fdi_sensor_bias: attacker controls no sensors");
    }
    const double amp = std::sqrt(2.0 * epsilon);

    std::vector<Vector> da_seq;
    da_seq.reserve(static_cast<size_t>(T) + 1);
    Matrix P = model.x0_cov;
    Vector de = Vector::Zero(model.n());
    for (int k = 0; k <= T; ++k) {
        const Matrix Pz = symmetrize(model.C * P * model.C.transpose() + model.R);
        const Matrix Pz_sqrt = psd_sqrt(Pz);
        const Matrix K = solve_spd(Pz, model.C * P.transpose()).transpose();
        // Want Pz^{-1/2} (C de + Da da) = amp * direction.
        const Vector target = Pz_sqrt * (amp * direction) - model.C * de;
        const Vector da = Da.colPivHouseholderQr().solve(target);
        const double gap = (Da * da - target).norm();
        if (gap > 1e-8 * std::max(1.0, target.norm())) {
            throw ValidationError("design_fdi_sensor_bias: requested residue direction is "
                                  "outside the attacked sensor span");
        }
        da_seq.push_back(da);
        de = (model.A - model.A * K * model.C) * de - model.A * K * (Da * da);
        P = symmetrize(model.A * P * model.A.transpose() + model.Q
                       - model.A * K * model.C * P * model.A.transpose());
    }
    return da_seq;
}

} // namespace flowtrace
