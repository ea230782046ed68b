#pragma once

// Experiment layer: strict JSON configuration (unknown keys are rejected at
// every level), model construction from the built-in library, the value
// convergence and propagation-of-chaos drivers, and deterministic CSV / JSON
// artifact writers stamped with a config hash and seed provenance.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfrs/basis.hpp"
#include "mfrs/control.hpp"
#include "mfrs/hjb.hpp"
#include "mfrs/model.hpp"
#include "mfrs/rates.hpp"
#include "mfrs/simulate.hpp"

namespace mfrs {

using nlohmann::json;

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Fixed-format floating point rendering shared by all artifacts.
inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace cfg_detail {

inline void check_keys(const json& j, const std::string& where,
                       std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

template <typename T>
T req(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + " is missing required key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

template <typename T>
T opt(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

inline JumpLaw parse_gamma(const json& j, const std::string& where) {
    check_keys(j, where, {"family", "a", "b", "atoms", "weights"});
    const auto family = req<std::string>(j, "family", where);
    if (family == "point_mass") return JumpLaw::point_mass(req<double>(j, "a", where));
    if (family == "uniform")
        return JumpLaw::uniform(req<double>(j, "a", where), req<double>(j, "b", where));
    if (family == "finite_discrete")
        return JumpLaw::finite_discrete(req<std::vector<double>>(j, "atoms", where),
                                        req<std::vector<double>>(j, "weights", where));
    throw ConfigError(where + ": unknown jump family '" + family + "'");
}

inline GeneratorMatrix parse_generator(const json& j) {
    GeneratorMatrix Q;
    Q.q = j.get<std::vector<std::vector<double>>>();
    validate_generator(Q);
    return Q;
}

inline Box parse_box(const json& j, const std::string& where) {
    check_keys(j, where, {"lo", "hi"});
    Box A;
    A.lo = req<std::vector<double>>(j, "lo", where);
    A.hi = req<std::vector<double>>(j, "hi", where);
    A.validate();
    return A;
}

inline DiscreteMeasure parse_measure(const json& j, const std::string& where) {
    check_keys(j, where, {"atoms", "weights"});
    DiscreteMeasure mu;
    mu.x = req<std::vector<double>>(j, "atoms", where);
    if (j.contains("weights")) {
        mu.w = req<std::vector<double>>(j, "weights", where);
    } else {
        mu.w.assign(mu.x.size(), 1.0 / static_cast<double>(mu.x.size()));
    }
    mu.validate();
    return mu;
}

inline ModelSpec parse_model(const json& j, const GeneratorMatrix& Q, const Box& A, double t0,
                             double T) {
    const std::string where = "model";
    const auto name = req<std::string>(j, "name", where);
    if (name == "constant") {
        check_keys(j, where,
                   {"name", "b_regime", "sigma", "lambda", "gamma", "f_const", "h_kind",
                    "h_regime", "mean_field_drift"});
        ConstantModelParams p;
        p.b_regime = req<std::vector<double>>(j, "b_regime", where);
        p.sigma = opt(j, "sigma", 0.0);
        p.lambda = opt(j, "lambda", 0.0);
        if (j.contains("gamma")) p.gamma = parse_gamma(j.at("gamma"), where + ".gamma");
        p.f_const = opt(j, "f_const", 0.0);
        p.h_kind = opt<std::string>(j, "h_kind", "zero");
        p.h_regime = opt(j, "h_regime", 1);
        p.mean_field_drift = opt(j, "mean_field_drift", 0.0);
        auto m = make_constant_model(p, Q, t0, T);
        m.A = A;
        return m;
    }
    if (name == "linear_mean_reverting") {
        check_keys(j, where,
                   {"name", "a_regime", "bv", "r", "s", "sigma0", "l0", "l1", "l2", "lmax",
                    "gamma", "fq", "fl", "target_edges", "target_values", "theta", "hmax", "hw"});
        LinearMRParams p;
        p.a_regime = req<std::vector<double>>(j, "a_regime", where);
        p.bv = opt(j, "bv", 1.0);
        p.r = opt(j, "r", 0.5);
        p.s = opt(j, "s", 0.3);
        p.sigma0 = opt(j, "sigma0", 0.2);
        p.l0 = opt(j, "l0", 0.0);
        p.l1 = opt(j, "l1", 0.0);
        p.l2 = opt(j, "l2", 0.0);
        p.lmax = opt(j, "lmax", 3.0);
        if (j.contains("gamma")) p.gamma = parse_gamma(j.at("gamma"), where + ".gamma");
        p.fq = opt(j, "fq", 0.0);
        p.fl = opt(j, "fl", 0.0);
        p.target_edges = opt(j, "target_edges", std::vector<double>{});
        p.target_values = opt(j, "target_values", std::vector<std::vector<double>>{});
        p.theta = opt(j, "theta", std::vector<double>(static_cast<std::size_t>(Q.size()), 0.0));
        p.hmax = opt(j, "hmax", 10.0);
        p.hw = opt(j, "hw", 0.0);
        return make_linear_mr_model(p, Q, A, t0, T);
    }
    if (name == "lq_regime") {
        check_keys(j, where,
                   {"name", "bv", "s", "sigma0", "sigma_regime", "lambda0", "gamma", "fq",
                    "theta", "hmax", "hw"});
        LqRegimeParams p;
        p.bv = opt(j, "bv", 1.0);
        p.s = opt(j, "s", 0.0);
        p.sigma0 = opt(j, "sigma0", 0.2);
        p.sigma_regime = opt(j, "sigma_regime", std::vector<double>{});
        p.lambda0 = opt(j, "lambda0", 0.0);
        if (j.contains("gamma")) p.gamma = parse_gamma(j.at("gamma"), where + ".gamma");
        p.fq = opt(j, "fq", 0.05);
        p.theta = req<std::vector<double>>(j, "theta", where);
        p.hmax = opt(j, "hmax", 10.0);
        p.hw = opt(j, "hw", 1.0);
        return make_lq_regime_model(p, Q, A, t0, T);
    }
    throw ConfigError("unknown model name '" + name + "'");
}

}  // namespace cfg_detail

struct ExperimentConfig {
    std::string experiment;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string out_dir = "out";
    ModelSpec model;
    DiscreteMeasure rho0;
    int i0 = 0;
    SimConfig sim;
    std::vector<int> sweep;
    int metric_degree = 4;
    double metric_b = 10.0;
    double metric_delta = 1.0;
    std::vector<FeedbackControl> candidates;
    bool has_control = false;
    FeedbackControl control = FeedbackControl::constant(Box{{0.0}, {0.0}}, {{0.0}});
    int select_reps = 500;
    CemConfig cem;
    std::map<std::string, std::pair<double, double>> targets;
    double signal_factor = 3.0;
    std::string config_hash;
    json raw;
};

inline ExperimentConfig parse_config(const json& j) {
    using namespace cfg_detail;
    check_keys(j, "config",
               {"experiment", "seed", "threads", "out_dir", "model", "generator", "horizon",
                "control_box", "rho0", "i0", "sim", "sweep", "metric", "candidates", "control",
                "optimizer", "targets", "signal_factor"});
    ExperimentConfig c;
    c.raw = j;
    c.config_hash = hex64(fnv1a64(j.dump()));
    c.experiment = req<std::string>(j, "experiment", "config");
    c.seed = req<std::uint64_t>(j, "seed", "config");
    c.threads = opt<unsigned>(j, "threads", 1);
    c.out_dir = opt<std::string>(j, "out_dir", "out");

    const json& hz = j.contains("horizon") ? j.at("horizon") : json::object();
    check_keys(hz, "horizon", {"t0", "T"});
    const double t0 = opt(hz, "t0", 0.0);
    const double T = opt(hz, "T", 1.0);
    if (!(T > t0)) throw ConfigError("horizon must satisfy T > t0");

    const GeneratorMatrix Q = parse_generator(req<json>(j, "generator", "config"));
    Box A{{-1.0}, {1.0}};
    if (j.contains("control_box")) A = parse_box(j.at("control_box"), "control_box");
    c.model = parse_model(req<json>(j, "model", "config"), Q, A, t0, T);

    c.rho0 = j.contains("rho0") ? parse_measure(j.at("rho0"), "rho0")
                                : DiscreteMeasure::point(0.0);
    c.i0 = opt(j, "i0", 0);
    if (c.i0 < 0 || c.i0 >= c.model.num_regimes())
        throw ConfigError("initial regime out of range");

    const json& sj = j.contains("sim") ? j.at("sim") : json::object();
    check_keys(sj, "sim", {"dt", "N", "N_mf", "mc_reps", "thinning", "record_moments"});
    c.sim.dt = opt(sj, "dt", 0.01);
    c.sim.N = opt(sj, "N", 64);
    c.sim.N_mf = opt(sj, "N_mf", 640);
    c.sim.mc_reps = opt(sj, "mc_reps", 100);
    c.sim.thinning = opt(sj, "thinning", false);
    c.sim.record_moments = opt(sj, "record_moments", 2);
    c.sim.seed = c.seed;
    c.sim.threads = c.threads;
    if (!(c.sim.dt > 0.0)) throw ConfigError("sim.dt must be positive");

    c.sweep = opt(j, "sweep", std::vector<int>{});
    for (int N : c.sweep)
        if (N < 1) throw ConfigError("sweep entries must be positive");

    if (j.contains("metric")) {
        const json& mj = j.at("metric");
        check_keys(mj, "metric", {"max_degree", "envelope_b", "delta"});
        c.metric_degree = opt(mj, "max_degree", 4);
        c.metric_b = opt(mj, "envelope_b", 10.0);
        c.metric_delta = opt(mj, "delta", 1.0);
    }

    if (j.contains("candidates"))
        for (const auto& cj : j.at("candidates"))
            c.candidates.push_back(FeedbackControl::from_json(cj));
    if (j.contains("control")) {
        c.control = FeedbackControl::from_json(j.at("control"));
        c.has_control = true;
    }

    if (j.contains("optimizer")) {
        const json& oj = j.at("optimizer");
        check_keys(oj, "optimizer",
                   {"select_reps", "population", "elite_frac", "generations", "init_sd",
                    "sd_floor", "budget_seconds"});
        c.select_reps = opt(oj, "select_reps", 500);
        c.cem.population = opt(oj, "population", 64);
        c.cem.elite_frac = opt(oj, "elite_frac", 0.125);
        c.cem.generations = opt(oj, "generations", 30);
        c.cem.init_sd = opt(oj, "init_sd", 0.5);
        c.cem.sd_floor = opt(oj, "sd_floor", 1e-3);
        c.cem.budget_seconds = opt(oj, "budget_seconds", 1e9);
    }
    c.cem.seed = c.seed;
    c.cem.threads = c.threads;

    if (j.contains("targets")) {
        const json& tj = j.at("targets");
        check_keys(tj, "targets",
                   {"value_slope", "metric_slope", "particle_slope", "control_slope"});
        for (auto it = tj.begin(); it != tj.end(); ++it) {
            const auto win = it.value().get<std::vector<double>>();
            if (win.size() != 2 || !(win[0] <= win[1]))
                throw ConfigError("target '" + it.key() + "' must be [lo, hi]");
            c.targets[it.key()] = {win[0], win[1]};
        }
    }
    c.signal_factor = opt(j, "signal_factor", 3.0);
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return parse_config(j);
}

// ============================================================================
// Artifact rows and writers
// ============================================================================

struct StatRow {
    int N = 0;
    std::string statistic;
    double mean = 0.0, se = 0.0;
    int reps = 0;
    std::uint64_t seed = 0;
};

inline std::string rows_to_csv(const std::vector<StatRow>& rows) {
    std::string out = "N,statistic,mean,se,reps,seed\n";
    for (const auto& r : rows) {
        out += std::to_string(r.N);
        out += ',';
        out += r.statistic;
        out += ',';
        out += fmt_g17(r.mean);
        out += ',';
        out += fmt_g17(r.se);
        out += ',';
        out += std::to_string(r.reps);
        out += ',';
        out += std::to_string(r.seed);
        out += '\n';
    }
    return out;
}

inline std::string trajectory_to_csv(const TrajectoryRecord& rec, int record_moments) {
    std::string out = "t,regime";
    for (int d = 1; d <= record_moments; ++d) out += ",moment_" + std::to_string(d);
    out += ",running_cost\n";
    for (std::size_t n = 0; n < rec.grid.size(); ++n) {
        out += fmt_g17(rec.grid[n]);
        out += ',';
        out += std::to_string(rec.regimes[n]);
        for (int d = 1; d <= record_moments; ++d) {
            out += ',';
            out += fmt_g17(rec.moments[n][static_cast<std::size_t>(d - 1)]);
        }
        out += ',';
        out += fmt_g17(rec.running_cost[n]);
        out += '\n';
    }
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& body) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << body;
}

inline json fit_to_json(const RateFit& fit) {
    json j{{"slope", fit.slope},
           {"intercept", fit.intercept},
           {"half_width", fit.half_width},
           {"points", fit.n}};
    if (fit.has_target) {
        j["target"] = {fit.target_lo, fit.target_hi};
        j["pass"] = fit.pass;
    }
    return j;
}

// ============================================================================
// Value convergence driver
// ============================================================================

struct ValueConvergenceResult {
    std::vector<StatRow> rows;
    RateFit fit;
    MeanSe v_meanfield;
    int chosen_meanfield = -1;
    std::vector<int> chosen_by_N;
    bool pass = false;
    json summary;
};

// For each system size, picks the best candidate control by enumeration under
// common random numbers, then estimates the optimal-value gap against the
// mean-field proxy with replication-paired differences (both sides share the
// regime-path streams, which is what makes the pairing effective).
inline ValueConvergenceResult run_value_convergence(const ExperimentConfig& cfg) {
    if (cfg.candidates.empty())
        throw ConfigError("value_convergence needs a candidate control list");
    if (cfg.sweep.empty()) throw ConfigError("value_convergence needs a sweep of system sizes");

    auto costs_at = [&](const FeedbackControl& ctrl, int N, int reps) {
        SimConfig sc = cfg.sim;
        sc.N = N;
        sc.mc_reps = reps;
        sc.record_trajectory = false;
        return simulate_nagent(cfg.model, ctrl, sc, cfg.rho0, cfg.i0).rep_costs;
    };
    auto pick = [&](int N) {
        int best = 0;
        double best_mean = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cfg.candidates.size(); ++c) {
            const auto costs = costs_at(cfg.candidates[c], N, cfg.select_reps);
            const double mean = mean_and_se(costs).mean;
            if (mean < best_mean) {
                best_mean = mean;
                best = static_cast<int>(c);
            }
        }
        return best;
    };

    ValueConvergenceResult res;
    res.chosen_meanfield = pick(cfg.sim.N_mf);
    const auto mf_costs =
        costs_at(cfg.candidates[static_cast<std::size_t>(res.chosen_meanfield)], cfg.sim.N_mf,
                 cfg.sim.mc_reps);
    res.v_meanfield = mean_and_se(mf_costs);

    std::vector<double> Ns, gaps, ses;
    for (int N : cfg.sweep) {
        const int cN = pick(N);
        res.chosen_by_N.push_back(cN);
        const auto n_costs =
            costs_at(cfg.candidates[static_cast<std::size_t>(cN)], N, cfg.sim.mc_reps);
        std::vector<double> diff(n_costs.size());
        for (std::size_t r = 0; r < n_costs.size(); ++r) diff[r] = n_costs[r] - mf_costs[r];
        const MeanSe d = mean_and_se(diff);
        const double gap = std::abs(d.mean);
        res.rows.push_back({N, "value_gap", gap, d.se, cfg.sim.mc_reps, cfg.seed});
        Ns.push_back(static_cast<double>(N));
        gaps.push_back(gap);
        ses.push_back(d.se);
    }
    res.rows.push_back({cfg.sim.N_mf, "v_meanfield", res.v_meanfield.mean, res.v_meanfield.se,
                        cfg.sim.mc_reps, cfg.seed});

    require_signal(gaps, ses, cfg.signal_factor, "value gap");
    res.fit = fit_rate(Ns, gaps, ses);
    res.pass = true;
    if (auto it = cfg.targets.find("value_slope"); it != cfg.targets.end()) {
        apply_target(res.fit, it->second.first, it->second.second);
        res.pass = res.fit.pass;
    }
    res.summary = {{"experiment", cfg.experiment},
                   {"config_hash", cfg.config_hash},
                   {"seed", cfg.seed},
                   {"fit", fit_to_json(res.fit)},
                   {"v_meanfield", {{"mean", res.v_meanfield.mean}, {"se", res.v_meanfield.se}}},
                   {"chosen_meanfield", res.chosen_meanfield},
                   {"chosen_by_N", res.chosen_by_N},
                   {"pass", res.pass}};
    return res;
}

// ============================================================================
// Propagation-of-chaos driver
// ============================================================================

struct PocResult {
    std::vector<StatRow> rows;
    RateFit metric_fit, particle_fit, control_fit;
    bool pass = false;
    json summary;
};

// Runs the coupled triple at each system size under one shared near-optimal
// policy and fits the three chaos statistics. The metric gap is measured
// between the coupled empirical ensembles, so the degenerate measure-free
// case collapses to exactly zero instead of flooring at Monte Carlo noise.
inline PocResult run_poc(const ExperimentConfig& cfg) {
    if (!cfg.has_control) throw ConfigError("poc needs a control policy");
    if (cfg.sweep.empty()) throw ConfigError("poc needs a sweep of system sizes");
    const auto basis =
        build_basis(cfg.metric_degree, cfg.model.gamma.scaled_moments(cfg.metric_degree));
    const auto weights = make_weights(basis, cfg.metric_b, cfg.metric_delta);

    PocResult res;
    std::vector<double> Ns, m_mean, m_se, p_mean, p_se, c_mean, c_se;
    for (int N : cfg.sweep) {
        SimConfig sc = cfg.sim;
        sc.N = N;
        const auto stats = coupled_poc_run(cfg.model, cfg.control, cfg.control, sc, cfg.rho0,
                                           cfg.i0, basis, weights);
        const MeanSe mg = mean_and_se(stats.metric_gap);
        const MeanSe pg = mean_and_se(stats.particle_gap);
        const MeanSe cg = mean_and_se(stats.control_gap);
        const MeanSe lg = mean_and_se(stats.loop_gap);
        res.rows.push_back({N, "metric_gap", mg.mean, mg.se, cfg.sim.mc_reps, cfg.seed});
        res.rows.push_back({N, "particle_gap", pg.mean, pg.se, cfg.sim.mc_reps, cfg.seed});
        res.rows.push_back({N, "control_gap", cg.mean, cg.se, cfg.sim.mc_reps, cfg.seed});
        res.rows.push_back({N, "loop_gap", lg.mean, lg.se, cfg.sim.mc_reps, cfg.seed});
        Ns.push_back(static_cast<double>(N));
        m_mean.push_back(mg.mean);
        m_se.push_back(mg.se);
        p_mean.push_back(pg.mean);
        p_se.push_back(pg.se);
        c_mean.push_back(cg.mean);
        c_se.push_back(cg.se);
    }
    require_signal(m_mean, m_se, cfg.signal_factor, "metric gap");
    require_signal(p_mean, p_se, cfg.signal_factor, "particle gap");
    require_signal(c_mean, c_se, cfg.signal_factor, "control gap");
    res.metric_fit = fit_rate(Ns, m_mean, m_se);
    res.particle_fit = fit_rate(Ns, p_mean, p_se);
    res.control_fit = fit_rate(Ns, c_mean, c_se);
    res.pass = true;
    auto gate = [&](const char* key, RateFit& fit) {
        if (auto it = cfg.targets.find(key); it != cfg.targets.end()) {
            apply_target(fit, it->second.first, it->second.second);
            res.pass = res.pass && fit.pass;
        }
    };
    gate("metric_slope", res.metric_fit);
    gate("particle_slope", res.particle_fit);
    gate("control_slope", res.control_fit);
    res.summary = {{"experiment", cfg.experiment},
                   {"config_hash", cfg.config_hash},
                   {"seed", cfg.seed},
                   {"metric_fit", fit_to_json(res.metric_fit)},
                   {"particle_fit", fit_to_json(res.particle_fit)},
                   {"control_fit", fit_to_json(res.control_fit)},
                   {"pass", res.pass}};
    return res;
}

}  // namespace mfrs
