// Command-line front end. Exit codes: 0 success, 1 usage or configuration
// error, 2 a numerical check or experiment gate failed.

#include <cstdint>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mfrs/experiments.hpp"

namespace {

using namespace mfrs;
namespace fs = std::filesystem;

struct Options {
    std::string config_path;
    std::uint64_t seed = 0;
    bool has_seed = false;
    std::string out_dir;
    int threads = 0;
    bool quiet = false;
};

void add_common(CLI::App* sub, Options& opt) {
    sub->add_option("-c,--config", opt.config_path, "experiment configuration file")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("-s,--seed", opt.seed, "override the configured base seed")
        ->each([&opt](const std::string&) { opt.has_seed = true; });
    sub->add_option("-o,--out", opt.out_dir, "override the configured output directory");
    sub->add_option("-t,--threads", opt.threads, "override the configured worker count")
        ->check(CLI::PositiveNumber);
    sub->add_flag("-q,--quiet", opt.quiet, "suppress progress output");
}

ExperimentConfig load(const Options& opt) {
    ExperimentConfig cfg = load_config(opt.config_path);
    if (opt.has_seed) {
        cfg.seed = opt.seed;
        cfg.sim.seed = opt.seed;
        cfg.cem.seed = opt.seed;
    }
    if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
    if (opt.threads > 0) {
        cfg.threads = static_cast<unsigned>(opt.threads);
        cfg.sim.threads = cfg.threads;
        cfg.cem.threads = cfg.threads;
    }
    return cfg;
}

void emit(const Options& opt, const std::string& line) {
    if (!opt.quiet) std::cout << line << "\n";
}

void write_summary(const ExperimentConfig& cfg, const std::string& name, const json& j) {
    write_text(fs::path(cfg.out_dir) / name, j.dump(2) + "\n");
}

int cmd_validate(const Options& opt) {
    const auto cfg = load(opt);
    const auto rep = validate_assumptions(cfg.model);
    json j{{"config_hash", cfg.config_hash},
           {"model", cfg.model.name},
           {"max_abs_b", rep.max_abs_b},
           {"max_abs_sigma", rep.max_abs_sigma},
           {"max_abs_lambda", rep.max_abs_lambda},
           {"max_abs_f", rep.max_abs_f},
           {"max_abs_h", rep.max_abs_h},
           {"min_lambda", rep.min_lambda},
           {"max_lip_coefficients", rep.max_lip_coefficients},
           {"max_lip_costs", rep.max_lip_costs},
           {"gamma_abs_exp_moment", rep.gamma_abs_exp_moment},
           {"violations", rep.violations},
           {"ok", rep.ok()}};
    write_summary(cfg, "validate_summary.json", j);
    for (const auto& v : rep.violations) emit(opt, "violation: " + v);
    emit(opt, "model '" + cfg.model.name + "': " +
                  (rep.ok() ? "all standing assumptions hold"
                            : std::to_string(rep.violations.size()) + " violation(s)"));
    return rep.ok() ? 0 : 2;
}

int cmd_simulate(const Options& opt) {
    const auto cfg = load(opt);
    const FeedbackControl& ctrl = cfg.has_control
                                      ? cfg.control
                                      : (!cfg.candidates.empty()
                                             ? cfg.candidates.front()
                                             : throw ConfigError(
                                                   "simulate needs a control or candidate list"));
    SimConfig sc = cfg.sim;
    sc.record_trajectory = true;
    const auto rec = simulate_nagent(cfg.model, ctrl, sc, cfg.rho0, cfg.i0);
    const MeanSe cost = mean_and_se(rec.rep_costs);
    write_text(fs::path(cfg.out_dir) / "trajectory.csv",
               trajectory_to_csv(rec, sc.record_moments));
    json j{{"config_hash", cfg.config_hash}, {"seed", cfg.seed},
           {"N", sc.N},                      {"reps", sc.mc_reps},
           {"cost_mean", cost.mean},         {"cost_se", cost.se},
           {"terminal_regime", rec.regimes.back()}};
    write_summary(cfg, "simulate_summary.json", j);
    emit(opt, "cost " + fmt_g17(cost.mean) + " +/- " + fmt_g17(cost.se) + " over " +
                  std::to_string(sc.mc_reps) + " replications");
    return 0;
}

int cmd_metric(const Options& opt) {
    const auto cfg = load(opt);
    const auto basis =
        build_basis(cfg.metric_degree, cfg.model.gamma.scaled_moments(cfg.metric_degree));
    const auto weights = make_weights(basis, cfg.metric_b, cfg.metric_delta);

    RngStream rng(derive_seed(cfg.seed, {stream::scratch}));
    auto draw = [&] {
        std::vector<double> xs(24);
        for (double& x : xs) x = 6.0 * rng.unif() - 3.0;
        return DiscreteMeasure::empirical(xs);
    };
    int violations = 0;
    double max_d = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto mu = draw(), nu = draw(), ka = draw();
        const double dmn = metric_d(mu, nu, basis, weights);
        const double dnm = metric_d(nu, mu, basis, weights);
        const double dmk = metric_d(mu, ka, basis, weights);
        const double dkn = metric_d(ka, nu, basis, weights);
        max_d = std::max(max_d, dmn);
        if (dmn != dnm) ++violations;
        if (dmn > dmk + dkn + 1e-12) ++violations;
        if (metric_d(mu, mu, basis, weights) != 0.0) ++violations;
        if (dmn * dmn > dhat(mu, nu, basis, weights) + 1e-12) ++violations;
        if (dmn < 1e-15 && !moments_equal(mu, nu, basis.max_degree)) ++violations;
    }
    json wj = json::array();
    for (std::size_t jx = 0; jx < weights.c.size(); ++jx)
        wj.push_back({{"index", jx},
                      {"weight", weights.c[jx]},
                      {"certified_bound", weights.certified_bounds[jx]}});
    json j{{"config_hash", cfg.config_hash}, {"basis_size", basis.size()},
           {"max_degree", basis.max_degree}, {"trials", 200},
           {"violations", violations},       {"max_distance_seen", max_d},
           {"weights", wj}};
    write_summary(cfg, "metric_summary.json", j);
    emit(opt, "metric invariants: " + std::to_string(violations) + " violation(s) over 200 triples, basis size " +
                  std::to_string(basis.size()));
    return violations == 0 ? 0 : 2;
}

int cmd_hjb_check(const Options& opt) {
    const auto cfg = load(opt);
    if (cfg.model.name != "constant")
        throw ConfigError("hjb-check requires the constant model family");
    const json& mj = cfg.raw.at("model");
    if (mj.value("mean_field_drift", 0.0) != 0.0 || mj.value("f_const", 0.0) != 0.0)
        throw ConfigError("hjb-check requires zero running cost and no mean-field drift");
    const auto b_regime = mj.at("b_regime").get<std::vector<double>>();
    const double lam = mj.value("lambda", 0.0);

    // linear test function: jumps act on <mu, x> through the first moment of
    // the jump law, so they fold into an effective per-regime drift
    std::vector<double> b_eff = b_regime;
    for (double& b : b_eff) b += lam * cfg.model.gamma.scaled_moment(1);
    const auto phi = build_linear_value_function(b_eff, cfg.model.Q, cfg.model.t0, cfg.model.T);

    RngStream rng(derive_seed(cfg.seed, {stream::scratch}));
    auto draw_mu = [&] {
        std::vector<double> xs(8);
        for (double& x : xs) x = 4.0 * rng.unif() - 2.0;
        return DiscreteMeasure::empirical(xs);
    };
    const int R = cfg.model.num_regimes();
    double max_res = 0.0;
    std::vector<std::tuple<double, DiscreteMeasure, int>> pts;
    for (int trial = 0; trial < 100; ++trial) {
        const double t = cfg.model.t0 + (cfg.model.T - cfg.model.t0) * rng.unif();
        const auto mu = draw_mu();
        const int i = static_cast<int>(rng.unif() * R) % R;
        pts.emplace_back(t, mu, i);
        max_res = std::max(max_res, std::abs(hjb_residual(phi, cfg.model, t, mu, i)));
    }

    // a small time perturbation of the solution must be flagged
    const double eps = 1e-3;
    auto tc = phi.tcoefs();
    for (auto& row : tc) row[0] += Polynomial({0.0, eps});
    const CylindricalPolynomial bad(phi.inner(), tc);
    double bad_res = 0.0;
    for (const auto& [t, mu, i] : pts)
        bad_res = std::max(bad_res, std::abs(hjb_residual(bad, cfg.model, t, mu, i)));

    const double tol = 1e-6;
    const bool pass = max_res <= tol && bad_res > eps / 2.0;
    json j{{"config_hash", cfg.config_hash},
           {"max_residual", max_res},
           {"tolerance", tol},
           {"perturbed_residual", bad_res},
           {"perturbation", eps},
           {"points", 100},
           {"pass", pass}};
    write_summary(cfg, "hjb_summary.json", j);
    emit(opt, "max residual " + fmt_g17(max_res) + " (tol " + fmt_g17(tol) +
                  "), perturbed residual " + fmt_g17(bad_res));
    return pass ? 0 : 2;
}

int cmd_optimize(const Options& opt) {
    const auto cfg = load(opt);
    if (!cfg.has_control) throw ConfigError("optimize needs an initial control");
    SimConfig sc = cfg.sim;
    sc.mc_reps = cfg.select_reps;
    sc.record_trajectory = false;
    const auto cost = [&](const FeedbackControl& ctrl) {
        return cost_estimate(cfg.model, ctrl, sc, cfg.rho0, cfg.i0).mean;
    };
    const auto res = optimize_control(cfg.control, cost, cfg.cem);
    json j{{"config_hash", cfg.config_hash},
           {"seed", cfg.seed},
           {"best_cost", res.best_cost},
           {"evaluations", res.evaluations},
           {"best_history", res.best_history},
           {"control", res.control.to_json()}};
    write_summary(cfg, "optimize_summary.json", j);
    emit(opt, "best cost " + fmt_g17(res.best_cost) + " after " +
                  std::to_string(res.evaluations) + " evaluations");
    return 0;
}

int cmd_convergence(const Options& opt) {
    const auto cfg = load(opt);
    const auto res = run_value_convergence(cfg);
    write_text(fs::path(cfg.out_dir) / "value_gap.csv", rows_to_csv(res.rows));
    write_summary(cfg, "convergence_summary.json", res.summary);
    emit(opt, "value gap slope " + fmt_g17(res.fit.slope) + " +/- " +
                  fmt_g17(res.fit.half_width) + (res.pass ? " [pass]" : " [fail]"));
    return res.pass ? 0 : 2;
}

int cmd_poc(const Options& opt) {
    const auto cfg = load(opt);
    const auto res = run_poc(cfg);
    write_text(fs::path(cfg.out_dir) / "poc.csv", rows_to_csv(res.rows));
    write_summary(cfg, "poc_summary.json", res.summary);
    emit(opt, "metric slope " + fmt_g17(res.metric_fit.slope) + ", particle slope " +
                  fmt_g17(res.particle_fit.slope) + ", control slope " +
                  fmt_g17(res.control_fit.slope) + (res.pass ? " [pass]" : " [fail]"));
    return res.pass ? 0 : 2;
}

int cmd_all(const Options& opt) {
    const auto cfg = load(opt);
    if (cfg.experiment == "value_convergence") return cmd_convergence(opt);
    if (cfg.experiment == "poc") return cmd_poc(opt);
    if (cfg.experiment == "simulate") return cmd_simulate(opt);
    if (cfg.experiment == "validate") return cmd_validate(opt);
    if (cfg.experiment == "metric") return cmd_metric(opt);
    if (cfg.experiment == "hjb") return cmd_hjb_check(opt);
    if (cfg.experiment == "optimize") return cmd_optimize(opt);
    throw ConfigError("config names unknown experiment '" + cfg.experiment + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mean-field regime-switching simulation laboratory"};
    app.require_subcommand(1);
    Options opt;

    int (*run)(const Options&) = nullptr;
    auto wire = [&](const char* name, const char* desc, int (*fn)(const Options&)) {
        CLI::App* sub = app.add_subcommand(name, desc);
        add_common(sub, opt);
        sub->callback([&run, fn] { run = fn; });
    };
    wire("validate", "check the standing assumptions on the configured model", cmd_validate);
    wire("simulate", "run the particle system and record a trajectory", cmd_simulate);
    wire("metric", "exercise the measure-distance invariants", cmd_metric);
    wire("hjb-check", "verify the dynamic-programming equation on a solvable model",
         cmd_hjb_check);
    wire("optimize", "search the control class with the cross-entropy method", cmd_optimize);
    wire("convergence", "estimate the finite-system value gap rate", cmd_convergence);
    wire("poc", "estimate propagation-of-chaos rates with a coupled system", cmd_poc);
    wire("all", "run whichever experiment the config names", cmd_all);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        return run(opt);
    } catch (const InsufficientSignal& e) {
        std::cerr << "check failed: " << e.what() << "\n";
        return 2;
    } catch (const NonPositiveGap& e) {
        std::cerr << "check failed: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
