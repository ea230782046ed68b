#pragma once

// Interacting particle simulation: Euler-Maruyama with Bernoulli or thinned
// jumps, regime switching along a shared chain path, feature feedback through
// empirical moments, pathwise costs, and the coupled N-agent / mean-field
// runner behind the propagation-of-chaos statistics.
//
// Reproducibility contract: every random draw comes from a stream keyed by
// (base seed, stream tag, replication, particle). Replications are embarrassingly
// parallel and results are reduced in replication order, so output is identical
// for any thread count. Coupled systems consume the same draws in lockstep.

#include <cmath>
#include <cstdint>
#include <vector>

#include "mfrs/basis.hpp"
#include "mfrs/common.hpp"
#include "mfrs/control.hpp"
#include "mfrs/measure.hpp"
#include "mfrs/model.hpp"
#include "mfrs/regime.hpp"
#include "mfrs/rng.hpp"

namespace mfrs {

struct SimConfig {
    double dt = 0.01;
    int N = 64;        // particles in the N-agent system
    int N_mf = 640;    // particles in the mean-field proxy
    int mc_reps = 100;
    std::uint64_t seed = 1;
    bool thinning = false;  // jump sampling: thinned candidates instead of Bernoulli
    unsigned threads = 1;
    int record_moments = 2;         // trajectory stores moments 1..record_moments
    bool record_trajectory = true;  // keep the grid records of replication 0
};

struct TrajectoryRecord {
    std::vector<double> grid;
    std::vector<int> regimes;                  // chain state at each grid point
    std::vector<std::vector<double>> moments;  // [grid point][order-1]
    std::vector<double> running_cost;          // accumulated cost at each grid point
    std::vector<double> terminal_x;            // ensemble of replication 0 at T
    std::vector<double> rep_costs;             // pathwise cost per replication
    std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<double> cdf_of(const DiscreteMeasure& mu) {
    std::vector<double> cdf(mu.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        acc += mu.w[i];
        cdf[i] = acc;
    }
    return cdf;
}

inline double sample_measure(const DiscreteMeasure& mu, const std::vector<double>& cdf,
                             double u) {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto idx = std::min(static_cast<std::size_t>(it - cdf.begin()), mu.size() - 1);
    return mu.x[idx];
}

// Advances the chain state pointer to the grid time (right-continuous value).
struct RegimeCursor {
    const RegimePath* path;
    std::size_t next = 0;
    int state = 0;
    explicit RegimeCursor(const RegimePath& p) : path(&p), state(p.initial) {}
    int at(double t) {
        while (next < path->jumps.size() && path->jumps[next].time <= t + 1e-15) {
            state = path->jumps[next].to;
            ++next;
        }
        return state;
    }
};

// One Euler step of a whole ensemble under a fixed control value. Draw
// schedule per particle: one gaussian plus two uniforms (Bernoulli mode), or
// one Poisson count plus two uniforms per candidate (thinning mode).
inline void ensemble_step(const ModelSpec& m, bool thinning, double t, double dt, int regime,
                          const std::vector<double>& feat, const std::vector<double>& v,
                          std::vector<double>& xs, std::vector<RngStream>& streams,
                          double* cost_acc) {
    const double sqdt = std::sqrt(dt);
    CompensatedSum run;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        auto& rng = streams[k];
        const double x = xs[k];
        const double drift = m.b(t, x, feat, v, regime);
        const double vol = m.sigma(t, x, feat, v, regime);
        const double lam = m.lambda(t, x, feat, v, regime);
        if (lam < 0.0) throw NonFiniteState("negative jump intensity at t=" + std::to_string(t));
        double xn = x + drift * dt + vol * sqdt * rng.gauss();
        if (thinning) {
            const int cand = rng.poisson(m.C0 * dt);
            for (int j = 0; j < cand; ++j) {
                const double u = rng.unif();
                const double mark = rng.unif();
                if (lam > m.C0 * (1.0 + 1e-9))
                    throw ConfigError("thinning bound violated: lambda exceeds C0");
                if (u * m.C0 < lam) xn += m.gamma.sample(mark);
            }
        } else {
            const double u = rng.unif();
            const double mark = rng.unif();
            if (u < -std::expm1(-lam * dt)) xn += m.gamma.sample(mark);
        }
        if (cost_acc) run.add(m.f(t, x, feat, v, regime));
        xs[k] = xn;
    }
    if (cost_acc) *cost_acc += run.value() / static_cast<double>(xs.size()) * dt;
}

}  // namespace detail

// Simulates the N-agent system under a feedback control. Returns all
// replication costs plus the grid records of replication 0.
inline TrajectoryRecord simulate_nagent(const ModelSpec& m, const FeedbackControl& ctrl,
                                        const SimConfig& cfg, const DiscreteMeasure& rho0,
                                        int i0) {
    validate_generator(m.Q);
    rho0.validate();
    if (cfg.N < 1 || cfg.mc_reps < 1 || !(cfg.dt > 0.0))
        throw ConfigError("simulation needs N >= 1, mc_reps >= 1, dt > 0");
    const int steps = static_cast<int>(std::llround((m.T - m.t0) / cfg.dt));
    if (steps < 1) throw ConfigError("horizon shorter than one time step");
    const auto cdf = detail::cdf_of(rho0);

    TrajectoryRecord rec;
    rec.seed = cfg.seed;
    rec.rep_costs.resize(static_cast<std::size_t>(cfg.mc_reps));
    if (cfg.record_trajectory) {
        rec.grid.resize(static_cast<std::size_t>(steps) + 1);
        rec.regimes.resize(static_cast<std::size_t>(steps) + 1);
        rec.moments.assign(static_cast<std::size_t>(steps) + 1,
                           std::vector<double>(static_cast<std::size_t>(cfg.record_moments)));
        rec.running_cost.resize(static_cast<std::size_t>(steps) + 1);
    }

    parallel_for(static_cast<std::size_t>(cfg.mc_reps), cfg.threads, [&](std::size_t rep) {
        const RegimePath path =
            sample_path(m.Q, i0, m.t0, m.T, derive_seed(cfg.seed, {stream::regime, rep}));
        detail::RegimeCursor cursor(path);
        std::vector<RngStream> streams;
        streams.reserve(static_cast<std::size_t>(cfg.N));
        std::vector<double> xs(static_cast<std::size_t>(cfg.N));
        for (std::size_t k = 0; k < xs.size(); ++k) {
            streams.emplace_back(derive_seed(cfg.seed, {stream::particle, rep, k}));
            xs[k] = detail::sample_measure(rho0, cdf, streams.back().unif());
        }
        const bool record = cfg.record_trajectory && rep == 0;
        double cost = 0.0;
        std::vector<double> feat;
        for (int n = 0; n <= steps; ++n) {
            const double t = m.t0 + n * cfg.dt;
            const int regime = cursor.at(t);
            feat = features_of(xs, m.feature_moments);
            for (double fv : feat) check_finite(fv, "empirical feature");
            if (record) {
                rec.grid[static_cast<std::size_t>(n)] = t;
                rec.regimes[static_cast<std::size_t>(n)] = regime;
                for (int d = 1; d <= cfg.record_moments; ++d) {
                    CompensatedSum s;
                    for (double x : xs) s.add(std::pow(x, d));
                    rec.moments[static_cast<std::size_t>(n)][static_cast<std::size_t>(d - 1)] =
                        s.value() / static_cast<double>(cfg.N);
                }
                rec.running_cost[static_cast<std::size_t>(n)] = cost;
            }
            if (n == steps) {
                CompensatedSum hsum;
                for (double x : xs) hsum.add(m.h(t, x, feat, regime));
                cost += hsum.value() / static_cast<double>(cfg.N);
                if (record) rec.terminal_x = xs;
                break;
            }
            const std::vector<double> v = ctrl(t, feat, regime);
            detail::ensemble_step(m, cfg.thinning, t, cfg.dt, regime, feat, v, xs, streams,
                                  &cost);
        }
        rec.rep_costs[rep] = cost;
    });
    return rec;
}

// Mean-field proxy: the same dynamics with the large ensemble standing in for
// the conditional law.
inline TrajectoryRecord simulate_meanfield(const ModelSpec& m, const FeedbackControl& ctrl,
                                           const SimConfig& cfg, const DiscreteMeasure& rho0,
                                           int i0) {
    SimConfig c = cfg;
    c.N = cfg.N_mf;
    return simulate_nagent(m, ctrl, c, rho0, i0);
}

inline MeanSe cost_estimate(const ModelSpec& m, const FeedbackControl& ctrl, const SimConfig& cfg,
                            const DiscreteMeasure& rho0, int i0) {
    SimConfig c = cfg;
    c.record_trajectory = false;
    return mean_and_se(simulate_nagent(m, ctrl, c, rho0, i0).rep_costs);
}

// ============================================================================
// Coupled propagation-of-chaos runner
// ============================================================================

// Per-replication statistics for three systems driven by identical noise:
//   X  - N-agent system under ctrl_N, interacting through its own ensemble;
//   Y  - N-agent system under ctrl_mf, interacting through its own ensemble;
//   Xt - conditionally independent copies driven by the frozen mean-field
//        feature flow under ctrl_mf.
struct CoupledStats {
    std::vector<double> metric_gap;    // sup over grid of d(emp X, emp Xt)
    std::vector<double> particle_gap;  // (1/N) sum_k sup_t |X_k - Xt_k|^2
    std::vector<double> control_gap;   // integral |v_N - v_mf|^2 dt
    std::vector<double> loop_gap;      // (1/N) sum_k sup_t |X_k - Y_k|^2
};

inline CoupledStats coupled_poc_run(const ModelSpec& m, const FeedbackControl& ctrl_N,
                                    const FeedbackControl& ctrl_mf, const SimConfig& cfg,
                                    const DiscreteMeasure& rho0, int i0,
                                    const PolynomialBasis& basis, const WeightSequence& weights) {
    validate_generator(m.Q);
    rho0.validate();
    if (cfg.thinning)
        throw ConfigError("coupled runner shares draws in Bernoulli jump mode only");
    const int steps = static_cast<int>(std::llround((m.T - m.t0) / cfg.dt));
    if (steps < 1) throw ConfigError("horizon shorter than one time step");
    const auto cdf = detail::cdf_of(rho0);
    const int D = basis.max_degree;

    CoupledStats out;
    out.metric_gap.resize(static_cast<std::size_t>(cfg.mc_reps));
    out.particle_gap.resize(static_cast<std::size_t>(cfg.mc_reps));
    out.control_gap.resize(static_cast<std::size_t>(cfg.mc_reps));
    out.loop_gap.resize(static_cast<std::size_t>(cfg.mc_reps));

    parallel_for(static_cast<std::size_t>(cfg.mc_reps), cfg.threads, [&](std::size_t rep) {
        const RegimePath path =
            sample_path(m.Q, i0, m.t0, m.T, derive_seed(cfg.seed, {stream::regime, rep}));

        // Mean-field pre-run along the same regime path: frozen feature flow.
        std::vector<std::vector<double>> flow(static_cast<std::size_t>(steps) + 1);
        {
            detail::RegimeCursor cursor(path);
            std::vector<RngStream> streams;
            streams.reserve(static_cast<std::size_t>(cfg.N_mf));
            std::vector<double> xs(static_cast<std::size_t>(cfg.N_mf));
            for (std::size_t k = 0; k < xs.size(); ++k) {
                streams.emplace_back(derive_seed(cfg.seed, {stream::scratch, rep, k}));
                xs[k] = detail::sample_measure(rho0, cdf, streams.back().unif());
            }
            for (int n = 0; n <= steps; ++n) {
                const double t = m.t0 + n * cfg.dt;
                const int regime = cursor.at(t);
                flow[static_cast<std::size_t>(n)] = features_of(xs, m.feature_moments);
                if (n == steps) break;
                const std::vector<double> v =
                    ctrl_mf(t, flow[static_cast<std::size_t>(n)], regime);
                detail::ensemble_step(m, cfg.thinning, t, cfg.dt, regime, flow[static_cast<std::size_t>(n)],
                                      v, xs, streams, nullptr);
            }
        }

        // Lockstep triple on shared draws.
        detail::RegimeCursor cursor(path);
        const auto N = static_cast<std::size_t>(cfg.N);
        std::vector<RngStream> streams;
        streams.reserve(N);
        std::vector<double> X(N), Y(N), Xt(N), supXT(N, 0.0), supXY(N, 0.0);
        for (std::size_t k = 0; k < N; ++k) {
            streams.emplace_back(derive_seed(cfg.seed, {stream::particle, rep, k}));
            X[k] = Y[k] = Xt[k] = detail::sample_measure(rho0, cdf, streams.back().unif());
        }
        const double sqdt = std::sqrt(cfg.dt);
        double sup_d = 0.0;
        CompensatedSum cgap;
        std::vector<double> momX(static_cast<std::size_t>(D) + 1),
            momT(static_cast<std::size_t>(D) + 1);
        for (int n = 0; n <= steps; ++n) {
            const double t = m.t0 + n * cfg.dt;
            const int regime = cursor.at(t);

            // metric between the coupled empirical measures via raw moments
            std::fill(momX.begin(), momX.end(), 0.0);
            std::fill(momT.begin(), momT.end(), 0.0);
            momX[0] = momT[0] = 1.0;
            for (std::size_t k = 0; k < N; ++k) {
                double px = 1.0, pt = 1.0;
                for (int d = 1; d <= D; ++d) {
                    px *= X[k];
                    pt *= Xt[k];
                    momX[static_cast<std::size_t>(d)] += px;
                    momT[static_cast<std::size_t>(d)] += pt;
                }
            }
            for (int d = 1; d <= D; ++d) {
                momX[static_cast<std::size_t>(d)] /= static_cast<double>(cfg.N);
                momT[static_cast<std::size_t>(d)] /= static_cast<double>(cfg.N);
            }
            CompensatedSum dsum;
            for (std::size_t j = 0; j < basis.size(); ++j) {
                const auto& coefs = basis.elements[j].coefficients();
                double px = 0.0, pt = 0.0;
                for (std::size_t c = 0; c < coefs.size(); ++c) {
                    px += coefs[c] * momX[c];
                    pt += coefs[c] * momT[c];
                }
                dsum.add(weights.c[j] * std::abs(px - pt));
            }
            sup_d = std::max(sup_d, dsum.value());
            check_finite(momX[1], "coupled ensemble mean");

            if (n == steps) break;
            const std::vector<double> featX = features_of(X, m.feature_moments);
            const std::vector<double> featY = features_of(Y, m.feature_moments);
            const auto& featF = flow[static_cast<std::size_t>(n)];
            const std::vector<double> vN = ctrl_N(t, featX, regime);
            const std::vector<double> vY = ctrl_mf(t, featY, regime);
            const std::vector<double> vF = ctrl_mf(t, featF, regime);
            double vdiff = 0.0;
            for (std::size_t d = 0; d < vN.size(); ++d)
                vdiff += (vN[d] - vF[d]) * (vN[d] - vF[d]);
            cgap.add(vdiff * cfg.dt);

            for (std::size_t k = 0; k < N; ++k) {
                auto& rng = streams[k];
                const double z = rng.gauss();
                const double u = rng.unif();
                const double mark = rng.unif();
                auto advance = [&](double x, const std::vector<double>& feat,
                                   const std::vector<double>& v) {
                    const double lam = m.lambda(t, x, feat, v, regime);
                    double xn = x + m.b(t, x, feat, v, regime) * cfg.dt +
                                m.sigma(t, x, feat, v, regime) * sqdt * z;
                    if (u < -std::expm1(-lam * cfg.dt)) xn += m.gamma.sample(mark);
                    return xn;
                };
                X[k] = advance(X[k], featX, vN);
                Y[k] = advance(Y[k], featY, vY);
                Xt[k] = advance(Xt[k], featF, vF);
                supXT[k] = std::max(supXT[k], (X[k] - Xt[k]) * (X[k] - Xt[k]));
                supXY[k] = std::max(supXY[k], (X[k] - Y[k]) * (X[k] - Y[k]));
            }
        }
        out.metric_gap[rep] = sup_d;
        out.particle_gap[rep] = compensated_total(supXT) / static_cast<double>(cfg.N);
        out.loop_gap[rep] = compensated_total(supXY) / static_cast<double>(cfg.N);
        out.control_gap[rep] = cgap.value();
    });
    return out;
}

}  // namespace mfrs
