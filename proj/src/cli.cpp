#include "flowtrace/cli.hpp"

#include "flowtrace/engine.hpp"
#include "flowtrace/errors.hpp"
#include "flowtrace/report_io.hpp"

#include <CLI11.hpp>

#include <complex>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

namespace flowtrace {

namespace {

struct CommonArgs {
    std::string model_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::optional<int> horizon;
    int jobs = 0; // 0: take FLOWTRACE_JOBS, else 1
    std::optional<std::string> detector;
    std::optional<double> delta;
    std::optional<double> watermark_deltaJ;
    std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_out = true) {
    cmd->add_option("--model", args.model_path, "model file (JSON)")->required();
    if (needs_out) cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "master seed override");
    cmd->add_option("--trials", args.trials, "trial count override");
    cmd->add_option("--horizon", args.horizon, "horizon override");
    cmd->add_option("--jobs", args.jobs, "worker count (default: FLOWTRACE_JOBS or 1)");
    cmd->add_option("--detector", args.detector, "detector kind")
        ->check(CLI::IsMember({"chi2", "np"}));
    cmd->add_option("--delta", args.delta, "detection-power target in (0,1)");
    cmd->add_option("--watermark-deltaJ", args.watermark_deltaJ,
                    "calibrate the watermark so deltaJ/J* hits this ratio (0 disables)");
    cmd->add_option("--format", args.format, "output format")
        ->check(CLI::IsMember({"csv", "csv+svg"}));
}

int resolve_jobs(int flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv("FLOWTRACE_JOBS")) {
        const int j = std::atoi(env);
        if (j > 0) return j;
    }
    return 1;
}

ModelFile load_with_overrides(const CommonArgs& args) {
    ModelFile file = load_model(args.model_path);
    if (args.seed) file.scenario.seed = *args.seed;
    if (args.trials) file.scenario.trials = *args.trials;
    if (args.horizon) file.scenario.horizon = *args.horizon;
    if (args.detector) {
        file.scenario.detector.kind = (*args.detector == "chi2")
                                          ? DetectorSpec::Kind::chi_squared
                                          : DetectorSpec::Kind::neyman_pearson;
    }
    if (args.delta) file.scenario.detector.delta = *args.delta;
    if (args.watermark_deltaJ) file.scenario.watermark_deltaJ = *args.watermark_deltaJ;
    validate_scenario(file.scenario, file.system, file.attack);
    return file;
}

void write_outputs(const ExperimentSummary& summary, const CommonArgs& args) {
    namespace fs = std::filesystem;
    const fs::path out(args.out_dir);
    atomic_write((out / "ifcurve.csv").string(), render_ifcurve_csv(summary));
    atomic_write((out / "roc.csv").string(), render_roc_csv(summary));
    if (args.format == "csv+svg") {
        atomic_write((out / "ifcurve.svg").string(), render_if_svg(summary));
    }
    std::cout << render_summary_text(summary);
}

int cmd_experiment(const CommonArgs& args, AttackKind kind_override, bool force_kind) {
    ModelFile file = load_with_overrides(args);
    if (force_kind) file.scenario.attack_kind = kind_override;
    const ExperimentSummary summary =
        run_experiment(file.scenario, file.system, file.attack, resolve_jobs(args.jobs));
    write_outputs(summary, args);
    return 0;
}

int cmd_roc(const CommonArgs& args) {
    ModelFile file = load_with_overrides(args);
    const ExperimentSummary summary =
        run_experiment(file.scenario, file.system, file.attack, resolve_jobs(args.jobs));
    namespace fs = std::filesystem;
    atomic_write((fs::path(args.out_dir) / "roc.csv").string(), render_roc_csv(summary));
    std::cout << render_summary_text(summary);
    return 0;
}

int cmd_stealth_audit(const CommonArgs& args, std::optional<int> horizon_flag,
                      double rtol, const std::string& witness_out) {
    const ModelFile file = load_model(args.model_path);
    const PencilReport report = pencil_rank_test(file.system, file.attack, rtol);

    std::cout << "pencil rank test  (full rank = " << report.full_rank
              << ", tolerance = " << format_number(report.tolerance) << ")\n";
    std::cout << "  lambda                          rank  deficient\n";
    for (const auto& probe : report.rank_profile) {
        std::ostringstream lam;
        lam << format_number(probe.lambda.real());
        if (probe.lambda.imag() != 0.0) {
            lam << (probe.lambda.imag() < 0 ? "-" : "+")
                << format_number(std::abs(probe.lambda.imag())) << "i";
        }
        std::cout << "  " << lam.str();
        for (size_t i = lam.str().size(); i < 30; ++i) std::cout << ' ';
        std::cout << "  " << probe.rank << "     "
                  << (probe.rank < report.full_rank ? "yes" : "no") << "\n";
    }
    std::cout << "stealthy_exists (pencil): " << (report.stealthy_exists ? "yes" : "no");
    if (report.witness_lambda) {
        std::cout << "  (witness lambda = " << format_number(report.witness_lambda->real())
                  << (report.witness_lambda->imag() < 0 ? "-" : "+")
                  << format_number(std::abs(report.witness_lambda->imag())) << "i)";
    }
    std::cout << "\n";

    const int n = file.system.n();
    const int pp = file.attack.p_prime();
    const int T = horizon_flag.value_or(std::max(n - pp + 1, 8));
    const auto witness = synthesize_zero_flow_attack(file.system, file.attack, T);
    if (witness) {
        std::cout << "finite-horizon synthesis (T = " << T << "): witness found, "
                  << "max output deviation = " << format_number(witness->max_output_deviation)
                  << "\n";
        if (!witness_out.empty()) {
            nlohmann::json doc;
            auto dump_seq = [](const std::vector<Vector>& seq) {
                nlohmann::json arr = nlohmann::json::array();
                for (const auto& v : seq) {
                    nlohmann::json row = nlohmann::json::array();
                    for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(v(i));
                    arr.push_back(row);
                }
                return arr;
            };
            doc["horizon"] = T;
            doc["ua_seq"] = dump_seq(witness->ua_seq);
            doc["da_seq"] = dump_seq(witness->da_seq);
            doc["max_output_deviation"] = witness->max_output_deviation;
            atomic_write(witness_out, doc.dump(2) + "\n");
            std::cout << "witness written to " << witness_out << "\n";
        }
    } else {
        std::cout << "finite-horizon synthesis (T = " << T << "): no witness (null space "
                  << "is trivial)\n";
    }
    return 0;
}

int cmd_watermark_design(const CommonArgs& args) {
    ModelFile file = load_with_overrides(args);
    if (!file.scenario.watermark_deltaJ) file.scenario.watermark_deltaJ = 0.40;
    ScenarioConfig config = file.scenario;
    config.attack_kind = AttackKind::replay;
    config.trials = 1;
    config.horizon = std::max(config.horizon, 1);

    const FeedbackLaw law = design_lqg(file.system);
    SteadyStateFilter ssf = steady_state_filter(file.system);
    const double J_star = lqg_cost(file.system, ssf, law, Matrix());
    const double target = *config.watermark_deltaJ;
    const Matrix shape = config.watermark_cov
                             ? *config.watermark_cov
                             : Matrix(Matrix::Identity(file.system.p(), file.system.p()));
    double lo = 0.0, hi = 1.0;
    auto ratio_at = [&](double s) {
        return (lqg_cost(file.system, ssf, law, Matrix(s * shape)) - J_star) / J_star;
    };
    if (target > 0.0) {
        int guard = 0;
        while (ratio_at(hi) < target) {
            hi *= 2.0;
            if (++guard > 200) throw NumericError("watermark design: target unreachable");
        }
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (ratio_at(mid) < target) lo = mid; else hi = mid;
            if ((hi - lo) <= 1e-12 * hi) break;
        }
    } else {
        hi = 0.0;
    }
    const double s = target > 0.0 ? 0.5 * (lo + hi) : 0.0;
    const Matrix Qwm = s * shape;
    ssf.W = steady_state_prediction_cov(file.system, ssf, law, Qwm);
    const double eps = if_replay_watermark_bound(file.system, ssf, law, Qwm);
    const double Jw = lqg_cost(file.system, ssf, law, Qwm);

    std::cout << "J* (optimal LQG cost):   " << format_number(J_star) << "\n"
              << "deltaJ target:           " << format_number(target) << "\n"
              << "Q multiplier:            " << format_number(s) << "\n"
              << "J with watermark:        " << format_number(Jw) << "\n"
              << "achieved deltaJ/J*:      " << format_number((Jw - J_star) / J_star) << "\n"
              << "epsilon (IF floor):      " << format_number(eps) << "\n"
              << "rho(Acl):                " << format_number(law.rho_Acl) << "\n";
    return 0;
}

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"flowtrace: KL-divergence information-flow analysis of attacks on "
                 "linear stochastic control systems"};
    app.require_subcommand(1);

    CommonArgs sim_args, fdi_args, replay_args, roc_args, wm_args, audit_args;
    std::optional<int> audit_horizon;
    double audit_rtol = 1e-9;
    std::string witness_out;

    CLI::App* sim = app.add_subcommand("simulate", "run the scenario configured in the model file");
    add_common(sim, sim_args);

    CLI::App* audit = app.add_subcommand("stealth-audit",
                                         "decide existence of zero-information-flow attacks");
    audit->add_option("--model", audit_args.model_path, "model file (JSON)")->required();
    audit->add_option("--horizon", audit_horizon, "synthesis horizon (default n - p' + 1, min 8)");
    audit->add_option("--tolerance", audit_rtol, "rank tolerance (relative)");
    audit->add_option("--witness-out", witness_out, "write the witness attack to this file");

    CLI::App* fdi = app.add_subcommand("fdi", "false-data-injection information flow and ROC");
    add_common(fdi, fdi_args);

    CLI::App* replay = app.add_subcommand("replay", "replay attack with optional watermarking");
    add_common(replay, replay_args);

    CLI::App* wm = app.add_subcommand("watermark-design",
                                      "calibrate the watermark covariance to a deltaJ target");
    add_common(wm, wm_args, /*needs_out=*/false);

    CLI::App* roc = app.add_subcommand("roc", "detector operating points only");
    add_common(roc, roc_args);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e); // prints the help text, exit 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (sim->parsed()) return cmd_experiment(sim_args, AttackKind::none, false);
    if (audit->parsed()) {
        return cmd_stealth_audit(audit_args, audit_horizon, audit_rtol, witness_out);
    }
    if (fdi->parsed()) return cmd_experiment(fdi_args, AttackKind::fdi, true);
    if (replay->parsed()) return cmd_experiment(replay_args, AttackKind::replay, true);
    if (wm->parsed()) return cmd_watermark_design(wm_args);
    if (roc->parsed()) return cmd_roc(roc_args);
    throw UsageError("no subcommand given");
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    try {
        return dispatch(args);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    }
}

} // namespace flowtrace
