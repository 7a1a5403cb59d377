#include "flowtrace/engine.hpp"

#include "flowtrace/errors.hpp"
#include "flowtrace/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

namespace flowtrace {

namespace {

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
    if (jobs <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const int nthreads = std::min(jobs, count);
    pool.reserve(static_cast<size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

struct FilterRuntime {
    // Time-varying mode keeps the covariance recursion; steady-state mode
    // freezes the converged gain and normalization.
    bool steady;
    const SystemModel* model;
    const SteadyStateFilter* ssf;
    Matrix P;
    Vector x_pred;

    void init() {
        x_pred = model->x0_mean;
        P = model->x0_cov;
    }

    // Consumes y_k; returns (z_k, xhat_{k|k}) and advances the prediction with u_k.
    std::pair<Vector, Vector> update(const Vector& y) {
        if (steady) {
            const Vector innov = y - model->C * x_pred;
            return {ssf->Pz_inv_sqrt * innov, x_pred + ssf->K * innov};
        }
        const Matrix Pz = symmetrize(model->C * P * model->C.transpose() + model->R);
        const Matrix Pzi = spd_inv_sqrt(Pz);
        const Matrix K = solve_spd(Pz, model->C * P.transpose()).transpose();
        const Vector innov = y - model->C * x_pred;
        const Vector z = Pzi * innov;
        const Vector x_filt = x_pred + K * innov;
        P = symmetrize(model->A * P * model->A.transpose() + model->Q
                       - model->A * K * model->C * P * model->A.transpose());
        return {z, x_filt};
    }

    void predict(const Vector& x_filt, const Vector& u) {
        x_pred = model->A * x_filt + model->B * u;
    }
};

} // namespace

TrialRecord simulate_trial(const SystemModel& model, const AttackChannels& channels,
                           const FeedbackLaw& law, const SteadyStateFilter& ssf,
                           const AttackPolicy& policy, const Matrix& Qwm, int T,
                           std::uint64_t seed, const SimOptions& opts) {
    const int n = model.n();
    const int m = model.m();
    const int p = model.p();
    const bool watermark = Qwm.size() > 0;
    const bool replay = policy.kind == AttackKind::replay;
    if (replay) {
        if (channels.m_prime() != m) {
            throw ValidationError("replay requires the attacker to control all sensors "
                                  "(m' == m)");
        }
        if (opts.burn_in < policy.replay_window) {
            throw ValidationError("replay requires burn_in >= the recording window");
        }
        if (policy.replay_window < T + 1) {
            throw ValidationError("replay recording window must cover the horizon (N >= T+1)");
        }
    }

    const Matrix Da = build_Da(channels, m);
    const Matrix x0_sqrt = psd_sqrt(model.x0_cov);
    const Matrix Q_sqrt = psd_sqrt(model.Q);
    const Matrix R_sqrt = psd_sqrt(model.R);
    const Matrix Qwm_sqrt = watermark ? psd_sqrt(Qwm) : Matrix();

    GaussianSampler g(seed);
    TrialRecord rec;
    rec.seed = seed;

    Vector x = model.x0_mean + x0_sqrt * g.vec(n);
    FilterRuntime filter{opts.filter_mode == SimOptions::FilterMode::steady_state,
                         &model, &ssf, {}, {}};
    filter.init();

    const int record_from = opts.burn_in - opts.record_window;
    for (int step = 0; step < opts.burn_in; ++step) {
        if (step == record_from) rec.xhat_rec_start = filter.x_pred;
        const Vector y = model.C * x + R_sqrt * g.vec(m);
        auto [z, x_filt] = filter.update(y);
        const Vector du = watermark ? Vector(Qwm_sqrt * g.vec(p)) : Vector(Vector::Zero(p));
        const Vector u = law.L * x_filt + du;
        if (step >= record_from) {
            rec.recorded_y.push_back(y);
            rec.recorded_z.push_back(z);
        }
        x = model.A * x + model.B * u + Q_sqrt * g.vec(n);
        filter.predict(x_filt, u);
    }
    rec.xhat0 = filter.x_pred;

    AttackPolicy active = policy;
    if (replay) {
        ReplayBuffer buffer;
        buffer.recorded_y = rec.recorded_y;
        active = with_recording(policy, std::move(buffer));
    }

    rec.x_seq.reserve(static_cast<size_t>(T) + 1);
    for (int k = 0; k <= T; ++k) {
        const Vector y_true = model.C * x + R_sqrt * g.vec(m);
        Vector da;
        Vector y_visible;
        if (replay) {
            y_visible = active.buffer.at(k);
            da = y_visible - y_true; // full-sensor substitution
        } else {
            da = active.sensor_input(k, channels.m_prime());
            y_visible = y_true + Da * da;
        }
        auto [z, x_filt] = filter.update(y_visible);
        const Vector du = watermark ? Vector(Qwm_sqrt * g.vec(p)) : Vector(Vector::Zero(p));
        const Vector u = law.L * x_filt + du;
        const Vector ua = active.actuator_input(k, channels.p_prime());

        rec.x_seq.push_back(x);
        rec.u_seq.push_back(u);
        rec.y_seq.push_back(y_visible);
        rec.z_seq.push_back(z);
        rec.du_seq.push_back(du);
        rec.ua_seq.push_back(ua);
        rec.da_seq.push_back(da);

        Vector x_next = model.A * x + model.B * u + Q_sqrt * g.vec(n);
        if (channels.p_prime() > 0) x_next += channels.Ba * ua;
        x = x_next;
        filter.predict(x_filt, u);
        if (!x.allFinite() || x.cwiseAbs().maxCoeff() > opts.divergence_limit) {
            rec.diverged = true;
            break;
        }
    }
    return rec;
}

namespace {

std::string format_ratio(double r) {
    std::ostringstream os;
    os << r;
    return os.str();
}

struct TrialOutputs {
    std::vector<double> perstep_kl; // attack-side divergence curve (H1 only)
    std::vector<double> stat;       // detector statistic trajectory
    TrialRecord record;
};

} // namespace

ExperimentSummary run_experiment(const ScenarioConfig& config, const SystemModel& model,
                                 const AttackChannels& channels, int jobs) {
    validate_scenario(config, model, channels);
    const int T = config.horizon;
    const int trials = config.trials;
    const int m = model.m();

    const FeedbackLaw law = design_lqg(model);
    SteadyStateFilter ssf = steady_state_filter(model);
    const double J_star = lqg_cost(model, ssf, law, Matrix());

    // Watermark selection: an explicit deltaJ target rescales the configured
    // shape (identity by default) so that (J - J*)/J* hits the target.
    Matrix Qwm;
    double q_multiplier = 0.0;
    if (config.watermark_deltaJ) {
        const double target = *config.watermark_deltaJ;
        if (target < 0.0) throw ValidationError("watermark deltaJ target must be >= 0");
        if (target > 0.0) {
            const Matrix shape = config.watermark_cov
                                     ? *config.watermark_cov
                                     : Matrix(Matrix::Identity(model.p(), model.p()));
            double lo = 0.0, hi = 1.0;
            auto ratio_at = [&](double s) {
                return (lqg_cost(model, ssf, law, Matrix(s * shape)) - J_star) / J_star;
            };
            int guard = 0;
            while (ratio_at(hi) < target) {
                hi *= 2.0;
                if (++guard > 200) {
                    throw NumericError("watermark calibration: target unreachable");
                }
            }
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (ratio_at(mid) < target) lo = mid; else hi = mid;
                if ((hi - lo) <= 1e-12 * hi) break;
            }
            q_multiplier = 0.5 * (lo + hi);
            Qwm = q_multiplier * shape;
            const double achieved = ratio_at(q_multiplier);
            if (std::abs(achieved - target) > 0.01 * std::max(target, 1e-12)) {
                throw NumericError("watermark calibration missed the deltaJ target");
            }
        }
    } else if (config.watermark_cov) {
        Qwm = *config.watermark_cov;
        q_multiplier = 1.0;
    }
    const bool watermarked = Qwm.size() > 0;
    ssf.W = steady_state_prediction_cov(model, ssf, law, watermarked ? Qwm : Matrix());

    ExperimentSummary out;
    out.horizon = T;
    out.trials = trials;
    out.seed = config.seed;
    out.detector_name = to_string(config.detector.kind);
    out.watermarked = watermarked;
    out.q_multiplier = q_multiplier;
    out.J_star = J_star;
    out.J_watermarked = watermarked ? lqg_cost(model, ssf, law, Qwm) : J_star;
    out.deltaJ_ratio = (out.J_watermarked - J_star) / J_star;
    {
        std::ostringstream id;
        id << to_string(config.attack_kind);
        if (watermarked) id << "-dj" << format_ratio(out.deltaJ_ratio);
        out.scenario_id = id.str();
    }

    // Attack-kind specific setup.
    SimOptions opts;
    AttackPolicy policy;
    std::vector<double> shared_perstep; // FDI-family divergences are trial-independent
    std::vector<GaussianDist> shared_dists;
    switch (config.attack_kind) {
        case AttackKind::none:
            policy.kind = AttackKind::none;
            shared_perstep.assign(static_cast<size_t>(T) + 1, 0.0);
            break;
        case AttackKind::fdi: {
            std::vector<Vector> ua(static_cast<size_t>(T) + 1,
                                   Vector::Zero(channels.p_prime()));
            std::vector<Vector> da(static_cast<size_t>(T) + 1,
                                   Vector::Zero(channels.m_prime()));
            if (config.fdi.epsilon) {
                Vector dir = config.fdi.direction;
                da = design_fdi_sensor_bias(model, channels, *config.fdi.epsilon, T, dir);
            } else {
                for (auto& u : ua) {
                    if (config.fdi.ua_const.size() > 0) u = config.fdi.ua_const;
                }
                for (auto& d : da) {
                    if (config.fdi.da_const.size() > 0) d = config.fdi.da_const;
                }
            }
            policy = fdi_policy(ua, da);
            break;
        }
        case AttackKind::zero_dynamics: {
            auto witness = synthesize_zero_flow_attack(model, channels, T);
            if (!witness) {
                throw ValidationError("zero_dynamics: no zero-flow attack exists for this "
                                      "model and channel set");
            }
            policy = zero_dynamics_policy(*witness, config.zero_dynamics.scale);
            break;
        }
        case AttackKind::replay:
            policy = replay_policy(T + 1);
            opts.filter_mode = SimOptions::FilterMode::steady_state;
            opts.burn_in = std::max(500, T + 1);
            opts.record_window = T + 1;
            if (channels.m_prime() != m) {
                throw ValidationError("replay requires the attacker to control all sensors");
            }
            break;
    }
    if (policy.kind == AttackKind::fdi || policy.kind == AttackKind::zero_dynamics) {
        const FdiResidueBias bias = fdi_residue_bias(model, channels, policy.ua_seq,
                                                     policy.da_seq);
        const InfoFlowReport rep = if_fdi(bias, T);
        shared_perstep = rep.per_step_kl;
        out.exact_if_curve.resize(static_cast<size_t>(T) + 1);
        double cum = 0.0;
        for (int k = 0; k <= T; ++k) {
            cum += bias.delta_z[static_cast<size_t>(k)].squaredNorm();
            out.exact_if_curve[static_cast<size_t>(k)] = cum / (2.0 * (k + 1));
        }
        out.has_exact = true;
        shared_dists.reserve(static_cast<size_t>(T) + 1);
        for (int k = 0; k <= T; ++k) {
            shared_dists.push_back({bias.delta_z[static_cast<size_t>(k)],
                                    Matrix::Identity(m, m)});
        }
    }
    if (config.attack_kind == AttackKind::replay) {
        out.has_epsilon = true;
        out.epsilon_bound = watermarked ? if_replay_watermark_bound(model, ssf, law, Qwm)
                                        : 0.0;
        if (!watermarked) {
            // Closed-form joint divergence at every horizon.
            out.exact_if_curve.resize(static_cast<size_t>(T) + 1);
            out.has_exact = true;
            for (int k = 0; k <= T; ++k) {
                out.exact_if_curve[static_cast<size_t>(k)] =
                    *if_replay_exact(model, ssf, law, model.x0_mean, k).exact_if;
            }
        }
    }
    if (config.attack_kind == AttackKind::none) {
        shared_dists.assign(static_cast<size_t>(T) + 1,
                            {Vector::Zero(m), Matrix::Identity(m, m)});
    }

    // Detector statistic from one trial's residues.
    auto score_trial = [&](const TrialRecord& rec,
                           const std::vector<GaussianDist>& dists) {
        std::vector<double> stat(static_cast<size_t>(T) + 1, 0.0);
        if (config.detector.kind == DetectorSpec::Kind::chi_squared) {
            const int w = config.detector.window;
            double acc = 0.0;
            for (int k = 0; k <= T; ++k) {
                acc += rec.z_seq[static_cast<size_t>(k)].squaredNorm();
                if (k - w >= 0) acc -= rec.z_seq[static_cast<size_t>(k - w)].squaredNorm();
                stat[static_cast<size_t>(k)] = acc;
            }
        } else {
            double acc = 0.0;
            for (int k = 0; k <= T; ++k) {
                const std::vector<Vector> zk{rec.z_seq[static_cast<size_t>(k)]};
                const std::vector<GaussianDist> dk{dists[static_cast<size_t>(k)]};
                acc += np_llr(zk, dk);
                stat[static_cast<size_t>(k)] = acc;
            }
        }
        return stat;
    };

    // Per-trial attack distributions: FDI-family and no-attack scenarios share
    // them; replay builds them from the trial's realized onset estimate and
    // watermark (both defender-side quantities).
    auto trial_dists = [&](const TrialRecord& rec) {
        if (config.attack_kind != AttackKind::replay) return shared_dists;
        std::vector<GaussianDist> dists;
        dists.reserve(static_cast<size_t>(T) + 1);
        ReplayStepDists gen(model, ssf, law, watermarked ? Qwm : Matrix(), rec.xhat0);
        for (int k = 0; k <= T; ++k) {
            dists.push_back(gen.current());
            if (k < T) gen.advance(rec.du_seq[static_cast<size_t>(k)]);
        }
        return dists;
    };

    auto run_ensemble = [&](std::uint64_t stream, bool attacked) {
        std::vector<TrialOutputs> results(static_cast<size_t>(trials));
        AttackPolicy none;
        none.kind = AttackKind::none;
        parallel_for(trials, jobs, [&](int i) {
            const std::uint64_t seed = derive_seed(config.seed, stream,
                                                   static_cast<std::uint64_t>(i));
            TrialOutputs& slot = results[static_cast<size_t>(i)];
            slot.record = simulate_trial(model, channels, law, ssf,
                                         attacked ? policy : none,
                                         watermarked ? Qwm : Matrix(), T, seed, opts);
            if (slot.record.diverged) {
                throw NumericError("trial " + std::to_string(i) + " diverged");
            }
            const auto dists = trial_dists(slot.record);
            slot.stat = score_trial(slot.record, dists);
            if (attacked) {
                if (config.attack_kind == AttackKind::replay) {
                    const InfoFlowReport rep = if_replay_watermark_perstep(
                        model, ssf, law, watermarked ? Qwm : Matrix(),
                        slot.record.du_seq, T, slot.record.xhat0);
                    slot.perstep_kl = rep.per_step_kl;
                } else {
                    slot.perstep_kl = shared_perstep;
                }
            }
        });
        return results;
    };

    const auto h1 = run_ensemble(kStreamH1, true);
    const auto h0 = run_ensemble(kStreamH0, false);

    out.mean_perstep_kl.assign(static_cast<size_t>(T) + 1, 0.0);
    for (const auto& r : h1) {
        for (int k = 0; k <= T; ++k) {
            out.mean_perstep_kl[static_cast<size_t>(k)] += r.perstep_kl[static_cast<size_t>(k)];
        }
    }
    for (auto& v : out.mean_perstep_kl) v /= trials;
    out.cum_if_lowerbound.resize(static_cast<size_t>(T) + 1);
    double cum = 0.0;
    for (int k = 0; k <= T; ++k) {
        cum += out.mean_perstep_kl[static_cast<size_t>(k)];
        out.cum_if_lowerbound[static_cast<size_t>(k)] = cum / (k + 1);
    }

    out.aggregate.horizon = T;
    out.aggregate.per_step_kl = out.mean_perstep_kl;
    out.aggregate.lower_bound_if = out.cum_if_lowerbound[static_cast<size_t>(T)];
    if (config.attack_kind == AttackKind::replay) {
        out.aggregate.method = watermarked ? "replay-watermark-perstep"
                                           : "replay-joint-gaussian";
    } else if (config.attack_kind == AttackKind::none) {
        out.aggregate.method = "no-attack";
    } else {
        out.aggregate.method = "fdi-closed-form";
    }
    if (out.has_exact) {
        out.aggregate.exact_if = out.exact_if_curve[static_cast<size_t>(T)];
    }

    std::vector<std::vector<double>> stats0, stats1;
    stats0.reserve(h0.size());
    stats1.reserve(h1.size());
    for (const auto& r : h0) stats0.push_back(r.stat);
    for (const auto& r : h1) stats1.push_back(r.stat);
    out.roc = estimate_roc(stats0, stats1, config.detector);

    const double floor = 1.0 / (2.0 * trials);
    std::vector<double> alphas;
    alphas.reserve(out.roc.size());
    for (const auto& r : out.roc) alphas.push_back(r.alpha);
    try {
        out.decay = decay_rate(alphas, 10, floor);
    } catch (const ValidationError&) {
        out.decay.reset(); // too few resolvable points; leave absent
    }
    return out;
}

} // namespace flowtrace
