#pragma once

// Cylindrical polynomial test functions phi(t, mu, i) = F_i(t, <mu, f>),
// their measure derivatives, and the verification battery: the flat-derivative
// defining identity, finite-N projection derivatives, the HJB residual, the
// Dynkin martingale statistic, the exact finite-N remainder terms, and a
// dynamic-programming consistency check.

#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "mfrs/common.hpp"
#include "mfrs/control.hpp"
#include "mfrs/measure.hpp"
#include "mfrs/model.hpp"
#include "mfrs/polynomial.hpp"
#include "mfrs/simulate.hpp"

namespace mfrs {

// Gauss-Legendre nodes and weights on [-1, 1].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
    if (n < 1) throw UsageError("quadrature order must be positive");
    std::vector<double> x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double xi = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = xi;  // P_0, P_1
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * xi * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double dp = n * (xi * p1 - p0) / (xi * xi - 1.0);
            const double step = p1 / dp;
            xi -= step;
            if (std::abs(step) < 1e-15) break;
        }
        double p0 = 1.0, p1 = xi;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * xi * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        const double dp = n * (xi * p1 - p0) / (xi * xi - 1.0);
        x[static_cast<std::size_t>(i)] = xi;
        w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - xi * xi) * dp * dp);
    }
    return {x, w};
}

// phi(t, mu, i) = F_i(t, <mu, inner>) with F_i(t, y) = sum_d a_{i,d}(t) y^d.
class CylindricalPolynomial {
  public:
    CylindricalPolynomial(Polynomial inner, std::vector<std::vector<Polynomial>> tcoefs)
        : inner_(std::move(inner)), tcoefs_(std::move(tcoefs)) {
        if (tcoefs_.empty()) throw UsageError("cylindrical function needs at least one regime");
        for (const auto& row : tcoefs_)
            if (row.empty()) throw UsageError("cylindrical function needs y-coefficients");
    }

    [[nodiscard]] const Polynomial& inner() const { return inner_; }
    [[nodiscard]] const std::vector<std::vector<Polynomial>>& tcoefs() const { return tcoefs_; }
    [[nodiscard]] int regimes() const { return static_cast<int>(tcoefs_.size()); }
    [[nodiscard]] int y_degree(int i) const {
        return static_cast<int>(tcoefs_[static_cast<std::size_t>(i)].size()) - 1;
    }

    [[nodiscard]] double F(double t, double y, int i) const {
        const auto& row = tcoefs_[static_cast<std::size_t>(i)];
        double acc = 0.0;
        for (std::size_t d = row.size(); d-- > 0;) acc = acc * y + row[d](t);
        return acc;
    }
    [[nodiscard]] long double F_ld(long double t, long double y, int i) const {
        const auto& row = tcoefs_[static_cast<std::size_t>(i)];
        long double acc = 0.0L;
        for (std::size_t d = row.size(); d-- > 0;) acc = acc * y + row[d].eval_ld(t);
        return acc;
    }
    [[nodiscard]] double dF_dt(double t, double y, int i) const {
        const auto& row = tcoefs_[static_cast<std::size_t>(i)];
        double acc = 0.0;
        for (std::size_t d = row.size(); d-- > 0;) acc = acc * y + row[d].derivative()(t);
        return acc;
    }
    [[nodiscard]] double dF_dy(double t, double y, int i) const {
        const auto& row = tcoefs_[static_cast<std::size_t>(i)];
        double acc = 0.0;
        for (std::size_t d = row.size(); d-- > 1;)
            acc = acc * y + static_cast<double>(d) * row[d](t);
        return acc;
    }
    [[nodiscard]] double d2F_dy2(double t, double y, int i) const {
        const auto& row = tcoefs_[static_cast<std::size_t>(i)];
        double acc = 0.0;
        for (std::size_t d = row.size(); d-- > 2;)
            acc = acc * y + static_cast<double>(d) * static_cast<double>(d - 1) * row[d](t);
        return acc;
    }

    [[nodiscard]] double value(double t, const DiscreteMeasure& mu, int i) const {
        return F(t, pairing(mu, inner_), i);
    }
    // Evaluation through the empirical projection of a particle configuration.
    [[nodiscard]] double projection(double t, const std::vector<double>& xs, int i) const {
        CompensatedSum s;
        for (double x : xs) s.add(inner_(x));
        return F(t, s.value() / static_cast<double>(xs.size()), i);
    }

  private:
    Polynomial inner_;
    std::vector<std::vector<Polynomial>> tcoefs_;
};

// D_m phi(t, mu, i)(.) as a polynomial in the state slot.
inline Polynomial linear_derivative(const CylindricalPolynomial& phi, double t,
                                    const DiscreteMeasure& mu, int i) {
    return phi.inner() * phi.dF_dy(t, pairing(mu, phi.inner()), i);
}

// Gap in the defining identity of the flat derivative along the segment from
// mu0 to mu1: phi(mu1) - phi(mu0) - integral_0^1 <mu1 - mu0, D_m phi(mu_eps)> d eps.
// Exact (up to roundoff) for polynomial F, so the gap measures the calculus.
inline double flat_derivative_identity_gap(const CylindricalPolynomial& phi, double t,
                                           const DiscreteMeasure& mu0, const DiscreteMeasure& mu1,
                                           int i, int quad_points = 64) {
    const auto [qx, qw] = gauss_legendre(quad_points);
    const double y0 = pairing(mu0, phi.inner());
    const double y1 = pairing(mu1, phi.inner());
    CompensatedSum integral;
    for (std::size_t q = 0; q < qx.size(); ++q) {
        const double eps = 0.5 * (qx[q] + 1.0);
        const double ye = (1.0 - eps) * y0 + eps * y1;
        // <mu1 - mu0, dF_dy(ye) * inner> = dF_dy(ye) * (y1 - y0)
        integral.add(0.5 * qw[q] * phi.dF_dy(t, ye, i) * (y1 - y0));
    }
    return std::abs(phi.F(t, y1, i) - phi.F(t, y0, i) - integral.value());
}

// ============================================================================
// Finite-N projection derivatives
// ============================================================================

struct ProjectionDerivatives {
    std::vector<double> first;   // d phi^N / d x_k
    std::vector<double> second;  // d^2 phi^N / d x_k^2
};

inline ProjectionDerivatives projection_derivatives(const CylindricalPolynomial& phi, double t,
                                                    const std::vector<double>& xs, int i) {
    const auto N = static_cast<double>(xs.size());
    CompensatedSum s;
    for (double x : xs) s.add(phi.inner()(x));
    const double y = s.value() / N;
    const double dy = phi.dF_dy(t, y, i);
    const double d2y = phi.d2F_dy2(t, y, i);
    const Polynomial di = phi.inner().derivative();
    const Polynomial d2i = phi.inner().derivative(2);
    ProjectionDerivatives out;
    out.first.reserve(xs.size());
    out.second.reserve(xs.size());
    for (double x : xs) {
        const double fp = di(x);
        out.first.push_back(dy * fp / N);
        out.second.push_back(dy * d2i(x) / N + d2y * fp * fp / (N * N));
    }
    return out;
}

struct ProjectionCheckResult {
    double max_rel_first = 0.0;
    double max_rel_second = 0.0;
};

// Central finite differences of the empirical projection, evaluated in
// extended precision, against the closed-form derivatives. The reported error
// is relative to the largest derivative magnitude in the configuration, after
// subtracting the provable finite-difference roundoff bound (roughly
// eps |phi| / h for first differences and eps |phi| / h^2 for second ones);
// without that allowance a structurally vanishing derivative would divide
// noise by zero.
inline ProjectionCheckResult projection_derivative_check(const CylindricalPolynomial& phi,
                                                         double t, const std::vector<double>& xs,
                                                         int i) {
    const auto analytic = projection_derivatives(phi, t, xs, i);
    const auto N = static_cast<long double>(xs.size());
    std::vector<long double> inner_vals(xs.size());
    long double base_sum = 0.0L;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        inner_vals[k] = phi.inner().eval_ld(static_cast<long double>(xs[k]));
        base_sum += inner_vals[k];
    }
    const auto tl = static_cast<long double>(t);
    auto phi_shift = [&](std::size_t k, long double dx) {
        const long double sum =
            base_sum - inner_vals[k] + phi.inner().eval_ld(static_cast<long double>(xs[k]) + dx);
        return phi.F_ld(tl, sum / N, i);
    };
    double scale1 = 0.0, scale2 = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        scale1 = std::max(scale1, std::abs(analytic.first[k]));
        scale2 = std::max(scale2, std::abs(analytic.second[k]));
    }
    const double eps = static_cast<double>(std::numeric_limits<long double>::epsilon());
    const double phi_mag = std::max(1.0, std::abs(static_cast<double>(phi_shift(0, 0.0L))));
    ProjectionCheckResult res;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const long double h = 1e-5L * (1.0L + std::abs(static_cast<long double>(xs[k])));
        const long double fp = phi_shift(k, h), fm = phi_shift(k, -h), f0 = phi_shift(k, 0.0L);
        const auto fd1 = static_cast<double>((fp - fm) / (2.0L * h));
        const auto fd2 = static_cast<double>((fp - 2.0L * f0 + fm) / (h * h));
        const double hd = static_cast<double>(h);
        const double noise1 = 8.0 * eps * phi_mag / hd;
        const double noise2 = 32.0 * eps * phi_mag / (hd * hd);
        const double err1 = std::max(0.0, std::abs(fd1 - analytic.first[k]) - noise1);
        const double err2 = std::max(0.0, std::abs(fd2 - analytic.second[k]) - noise2);
        res.max_rel_first = std::max(res.max_rel_first, err1 / std::max(scale1, 1e-12));
        res.max_rel_second = std::max(res.max_rel_second, err2 / std::max(scale2, 1e-12));
    }
    return res;
}

// ============================================================================
// Remainder terms of the finite-N pre-Hamiltonian
// ============================================================================

struct RemainderTerms {
    double r1 = 0.0;  // diffusion curvature correction
    double r2 = 0.0;  // jump curvature correction
};

// Exact corrections such that the finite-N pre-Hamiltonian assembled from the
// projection derivatives equals the measure-level pre-Hamiltonian plus r1 + r2.
// The jump correction integrates dF_dy along the post-jump segment with
// 16-point Gauss-Legendre (exact for polynomial F); for continuous jump laws
// the outer integral falls back to a fixed-seed Monte Carlo average when
// mc_fallback is set and throws otherwise.
inline RemainderTerms remainder_terms(const CylindricalPolynomial& phi, const ModelSpec& m,
                                      double t, const std::vector<double>& xs, int i,
                                      const std::vector<double>& v, bool mc_fallback = true,
                                      int mc_samples = 10000) {
    const auto N = static_cast<double>(xs.size());
    const std::vector<double> feat = features_of(xs, m.feature_moments);
    CompensatedSum s;
    for (double x : xs) s.add(phi.inner()(x));
    const double y = s.value() / N;
    const double dy = phi.dF_dy(t, y, i);
    const double d2y = phi.d2F_dy2(t, y, i);
    const Polynomial di = phi.inner().derivative();

    const auto [qx, qw] = gauss_legendre(16);
    // psi(Delta) = F(y + Delta/N) - F(y) - dF_dy(y) Delta/N
    auto psi = [&](double delta) {
        const double step = delta / N;
        CompensatedSum acc;
        for (std::size_t q = 0; q < qx.size(); ++q) {
            const double r = 0.5 * (qx[q] + 1.0);
            acc.add(0.5 * qw[q] * (phi.dF_dy(t, y + r * step, i) - dy));
        }
        return acc.value() * step;
    };

    RemainderTerms out;
    CompensatedSum r1, r2;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double x = xs[k];
        const double sig = m.sigma(t, x, feat, v, i);
        const double lam = m.lambda(t, x, feat, v, i);
        const double fp = di(x);
        r1.add(0.5 * sig * sig * d2y * fp * fp);
        if (lam == 0.0) continue;
        double psi_k;
        if (m.gamma.is_discrete()) {
            CompensatedSum acc;
            for (std::size_t a = 0; a < m.gamma.atoms().size(); ++a)
                acc.add(m.gamma.weights()[a] *
                        psi(phi.inner()(x + m.gamma.atoms()[a]) - phi.inner()(x)));
            psi_k = acc.value();
        } else {
            if (!mc_fallback)
                throw UnsupportedJumpFamily(
                    "closed-form jump correction needs a discrete jump law");
            RngStream rng(derive_seed(0x9e3779b97f4a7c15ULL, {stream::scratch, k}));
            CompensatedSum acc;
            for (int smp = 0; smp < mc_samples; ++smp) {
                const double jump = m.gamma.sample(rng.unif());
                acc.add(psi(phi.inner()(x + jump) - phi.inner()(x)));
            }
            psi_k = acc.value() / mc_samples;
        }
        r2.add(lam * psi_k);
    }
    out.r1 = -r1.value() / (N * N);
    out.r2 = -r2.value();
    return out;
}

// Finite-N pre-Hamiltonian assembled directly from the projection derivatives;
// the identity H = pre_hamiltonian + r1 + r2 is what the remainder terms certify.
inline double finite_n_pre_hamiltonian(const CylindricalPolynomial& phi, const ModelSpec& m,
                                       double t, const std::vector<double>& xs, int i,
                                       const std::vector<double>& v) {
    const auto N = static_cast<double>(xs.size());
    const std::vector<double> feat = features_of(xs, m.feature_moments);
    if (!m.gamma.is_discrete())
        throw UnsupportedJumpFamily("direct finite-N assembly needs a discrete jump law");
    CompensatedSum s;
    for (double x : xs) s.add(phi.inner()(x));
    const double y = s.value() / N;
    const auto deriv = projection_derivatives(phi, t, xs, i);
    CompensatedSum acc;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double x = xs[k];
        const double sig = m.sigma(t, x, feat, v, i);
        const double lam = m.lambda(t, x, feat, v, i);
        acc.add(m.f(t, x, feat, v, i) / N);
        acc.add(m.b(t, x, feat, v, i) * deriv.first[k]);
        acc.add(0.5 * sig * sig * deriv.second[k]);
        if (lam != 0.0) {
            CompensatedSum jump;
            for (std::size_t a = 0; a < m.gamma.atoms().size(); ++a) {
                const double ya = y + (phi.inner()(x + m.gamma.atoms()[a]) - phi.inner()(x)) / N;
                jump.add(m.gamma.weights()[a] * (phi.F(t, ya, i) - phi.F(t, y, i)));
            }
            acc.add(lam * jump.value());
        }
    }
    return -acc.value();
}

// ============================================================================
// HJB residual
// ============================================================================

inline double hjb_residual(const CylindricalPolynomial& phi, const ModelSpec& m, double t,
                           const DiscreteMeasure& mu, int i, const SupConfig& sc = {}) {
    const double y = pairing(mu, phi.inner());
    const Polynomial Dm = phi.inner() * phi.dF_dy(t, y, i);
    const double ham = hamiltonian_sup(m, t, mu, i, Dm, sc).value;
    CompensatedSum coupling;
    for (int j = 0; j < m.num_regimes(); ++j) {
        if (j == i) continue;
        coupling.add(m.Q.q[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] *
                     (phi.F(t, y, j) - phi.F(t, y, i)));
    }
    return -phi.dF_dt(t, y, i) + ham - coupling.value();
}

// ============================================================================
// Dynkin martingale statistic
// ============================================================================

struct ItoTestResult {
    MeanSe stat;  // mean of the terminal martingale increment, should be ~ 0
};

// Simulates the controlled mean-field proxy and accumulates
//   phi(T, mu_T, a_T) - phi(t0, mu_0, a_0) - integral of the full generator,
// with the time integral on the simulation grid (trapezoid). A correct
// calculus makes the replication mean vanish up to O(dt) bias and MC noise.
inline ItoTestResult ito_martingale_test(const CylindricalPolynomial& phi, const ModelSpec& m,
                                         const FeedbackControl& ctrl, const SimConfig& cfg,
                                         const DiscreteMeasure& rho0, int i0) {
    validate_generator(m.Q);
    rho0.validate();
    const int steps = static_cast<int>(std::llround((m.T - m.t0) / cfg.dt));
    if (steps < 1) throw ConfigError("horizon shorter than one time step");
    const auto cdf = detail::cdf_of(rho0);
    const int deg = std::max(1, phi.inner().degree());
    const Polynomial di = phi.inner().derivative();
    const Polynomial d2i = phi.inner().derivative(2);
    const Polynomial jimg = jump_image(phi.inner(), m.gamma.scaled_moments(deg));

    std::vector<double> stats(static_cast<std::size_t>(cfg.mc_reps));
    parallel_for(static_cast<std::size_t>(cfg.mc_reps), cfg.threads, [&](std::size_t rep) {
        const RegimePath path =
            sample_path(m.Q, i0, m.t0, m.T, derive_seed(cfg.seed, {stream::regime, rep}));
        detail::RegimeCursor cursor(path);
        std::vector<RngStream> streams;
        const auto N = static_cast<std::size_t>(cfg.N_mf);
        streams.reserve(N);
        std::vector<double> xs(N);
        for (std::size_t k = 0; k < N; ++k) {
            streams.emplace_back(derive_seed(cfg.seed, {stream::particle, rep, k}));
            xs[k] = detail::sample_measure(rho0, cdf, streams.back().unif());
        }
        double y0 = 0.0;
        CompensatedSum integral;
        double prev_g = 0.0;
        for (int n = 0; n <= steps; ++n) {
            const double t = m.t0 + n * cfg.dt;
            const int regime = cursor.at(t);
            const std::vector<double> feat = features_of(xs, m.feature_moments);
            CompensatedSum ysum;
            for (double x : xs) ysum.add(phi.inner()(x));
            const double y = ysum.value() / static_cast<double>(cfg.N_mf);
            if (n == 0) y0 = y;
            const std::vector<double> v = ctrl(t, feat, regime);
            const double dyF = phi.dF_dy(t, y, regime);
            CompensatedSum gen;
            for (double x : xs) {
                const double sig = m.sigma(t, x, feat, v, regime);
                gen.add(m.b(t, x, feat, v, regime) * di(x) + 0.5 * sig * sig * d2i(x) +
                        m.lambda(t, x, feat, v, regime) * jimg(x));
            }
            CompensatedSum coupling;
            for (int j = 0; j < m.num_regimes(); ++j) {
                if (j == regime) continue;
                coupling.add(
                    m.Q.q[static_cast<std::size_t>(regime)][static_cast<std::size_t>(j)] *
                    (phi.F(t, y, j) - phi.F(t, y, regime)));
            }
            const double g = phi.dF_dt(t, y, regime) +
                             dyF * gen.value() / static_cast<double>(cfg.N_mf) +
                             coupling.value();
            if (n > 0) integral.add(0.5 * (prev_g + g) * cfg.dt);
            prev_g = g;
            if (n == steps) {
                stats[rep] = phi.F(t, y, regime) - phi.F(m.t0, y0, i0) - integral.value();
                break;
            }
            detail::ensemble_step(m, cfg.thinning, t, cfg.dt, regime, feat, v, xs, streams,
                                  nullptr);
        }
    });
    return {mean_and_se(stats)};
}

// ============================================================================
// Dynamic programming consistency
// ============================================================================

struct DppResult {
    double direct = 0.0, direct_se = 0.0;
    double composed = 0.0, composed_se = 0.0;
    double gap = 0.0, tolerance = 0.0;
    int best_direct = -1, best_composed = -1;
    bool pass = false;
};

// Compares the best full-horizon candidate cost with the composed two-stage
// cost (run to theta, then restart with the per-regime best candidate from a
// tabulated continuation). The state flow must be deterministic given the
// control (point initial law, no diffusion or jumps in the state), so the
// continuation table only depends on the split regime; this is verified, not
// assumed.
inline DppResult dpp_check(const ModelSpec& m, const std::vector<FeedbackControl>& candidates,
                           double theta, const SimConfig& cfg, const DiscreteMeasure& rho0,
                           int i0) {
    if (candidates.empty()) throw UsageError("dpp_check needs at least one candidate control");
    if (rho0.size() != 1)
        throw UsageError("dpp_check needs a point initial law for a deterministic state flow");
    if (!(theta > m.t0 && theta < m.T)) throw UsageError("split time must be interior");
    const int steps1 = static_cast<int>(std::llround((theta - m.t0) / cfg.dt));
    if (std::abs(m.t0 + steps1 * cfg.dt - theta) > 1e-9)
        throw ConfigError("split time must land on the simulation grid");

    const auto cdf = detail::cdf_of(rho0);
    const auto n_cand = candidates.size();
    DppResult res;

    // Direct: best candidate over the full horizon under common random numbers.
    std::vector<MeanSe> direct(n_cand);
    for (std::size_t c = 0; c < n_cand; ++c)
        direct[c] = cost_estimate(m, candidates[c], cfg, rho0, i0);
    res.best_direct = 0;
    for (std::size_t c = 1; c < n_cand; ++c)
        if (direct[c].mean < direct[static_cast<std::size_t>(res.best_direct)].mean)
            res.best_direct = static_cast<int>(c);
    res.direct = direct[static_cast<std::size_t>(res.best_direct)].mean;
    res.direct_se = direct[static_cast<std::size_t>(res.best_direct)].se;

    // Composed: outer stage to theta, then the tabulated continuation.
    double best_comp = std::numeric_limits<double>::infinity(), best_comp_se = 0.0;
    for (std::size_t c = 0; c < n_cand; ++c) {
        std::vector<double> outer_cost(static_cast<std::size_t>(cfg.mc_reps));
        std::vector<int> outer_regime(static_cast<std::size_t>(cfg.mc_reps));
        std::array<std::vector<double>, 3> probes;
        for (std::size_t rep = 0; rep < static_cast<std::size_t>(cfg.mc_reps); ++rep) {
            const RegimePath path =
                sample_path(m.Q, i0, m.t0, theta, derive_seed(cfg.seed, {stream::regime, rep}));
            detail::RegimeCursor cursor(path);
            std::vector<RngStream> streams;
            const auto N = static_cast<std::size_t>(cfg.N);
            streams.reserve(N);
            std::vector<double> xs(N);
            for (std::size_t k = 0; k < N; ++k) {
                streams.emplace_back(derive_seed(cfg.seed, {stream::particle, rep, k}));
                xs[k] = detail::sample_measure(rho0, cdf, streams.back().unif());
            }
            double cost = 0.0;
            for (int n = 0; n < steps1; ++n) {
                const double t = m.t0 + n * cfg.dt;
                const int regime = cursor.at(t);
                const std::vector<double> feat = features_of(xs, m.feature_moments);
                const std::vector<double> v = candidates[c](t, feat, regime);
                detail::ensemble_step(m, cfg.thinning, t, cfg.dt, regime, feat, v, xs, streams,
                                      &cost);
            }
            outer_cost[rep] = cost;
            outer_regime[rep] = cursor.at(theta);
            if (rep < probes.size()) probes[rep] = xs;
        }
        for (std::size_t p = 1; p < probes.size() && p < static_cast<std::size_t>(cfg.mc_reps);
             ++p)
            for (std::size_t k = 0; k < probes[0].size(); ++k)
                if (std::abs(probes[p][k] - probes[0][k]) > 1e-10)
                    throw UsageError(
                        "dpp_check: state flow at the split time varies across replications");

        ModelSpec tail = m;
        tail.t0 = theta;
        const auto split_law = DiscreteMeasure::point(probes[0][0]);
        std::vector<double> cont(static_cast<std::size_t>(m.num_regimes()));
        double cont_se = 0.0;
        for (int j = 0; j < m.num_regimes(); ++j) {
            double best = std::numeric_limits<double>::infinity(), best_se = 0.0;
            for (std::size_t c2 = 0; c2 < n_cand; ++c2) {
                SimConfig inner = cfg;
                inner.seed = derive_seed(cfg.seed, {stream::scratch, c, static_cast<std::uint64_t>(j), c2});
                const MeanSe est = cost_estimate(tail, candidates[c2], inner, split_law, j);
                if (est.mean < best) {
                    best = est.mean;
                    best_se = est.se;
                }
            }
            cont[static_cast<std::size_t>(j)] = best;
            cont_se = std::max(cont_se, best_se);
        }
        std::vector<double> composite(outer_cost.size());
        for (std::size_t rep = 0; rep < outer_cost.size(); ++rep)
            composite[rep] =
                outer_cost[rep] + cont[static_cast<std::size_t>(outer_regime[rep])];
        const MeanSe est = mean_and_se(composite);
        const double se = std::sqrt(est.se * est.se + cont_se * cont_se);
        if (est.mean < best_comp) {
            best_comp = est.mean;
            best_comp_se = se;
            res.best_composed = static_cast<int>(c);
        }
    }
    res.composed = best_comp;
    res.composed_se = best_comp_se;
    res.gap = std::abs(res.direct - res.composed);
    res.tolerance = std::max(
        3.0 * std::sqrt(res.direct_se * res.direct_se + res.composed_se * res.composed_se),
        0.01 * std::abs(res.direct));
    res.pass = res.gap <= res.tolerance;
    return res;
}

// ============================================================================
// Reference value function for uncontrolled linear models
// ============================================================================

// For dX = b_{regime} dt (plus any zero-mean noise) with terminal cost <mu, x>
// and no running cost, the value function is <mu, x> + c_i(t) where
//   c_i'(t) = -b_i - sum_j q_ij c_j(t),   c_i(T) = 0.
// The ODE system is integrated with RK4 and interpolated at Chebyshev nodes,
// so the returned cylindrical polynomial satisfies the equation to roughly
// interpolation accuracy (far below 1e-6 for moderate rates).
inline CylindricalPolynomial build_linear_value_function(const std::vector<double>& b_regime,
                                                         const GeneratorMatrix& Q, double t0,
                                                         double T, int degree = 12,
                                                         double rk_dt = 1e-4) {
    validate_generator(Q);
    const int R = Q.size();
    if (static_cast<int>(b_regime.size()) != R)
        throw ConfigError("need one drift per regime");
    // g(s) = c(T - s): g' = b + Q g, g(0) = 0.
    auto rhs = [&](const std::vector<double>& g) {
        std::vector<double> out(b_regime);
        for (int i = 0; i < R; ++i)
            for (int j = 0; j < R; ++j)
                out[static_cast<std::size_t>(i)] +=
                    Q.q[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] *
                    g[static_cast<std::size_t>(j)];
        return out;
    };
    auto integrate_to = [&](double s_end) {
        std::vector<double> g(static_cast<std::size_t>(R), 0.0);
        if (s_end <= 0.0) return g;
        const int steps = std::max(1, static_cast<int>(std::ceil(s_end / rk_dt)));
        const double h = s_end / steps;
        std::vector<double> k1, k2, k3, k4, tmp(static_cast<std::size_t>(R));
        for (int n = 0; n < steps; ++n) {
            k1 = rhs(g);
            for (int i = 0; i < R; ++i)
                tmp[static_cast<std::size_t>(i)] =
                    g[static_cast<std::size_t>(i)] + 0.5 * h * k1[static_cast<std::size_t>(i)];
            k2 = rhs(tmp);
            for (int i = 0; i < R; ++i)
                tmp[static_cast<std::size_t>(i)] =
                    g[static_cast<std::size_t>(i)] + 0.5 * h * k2[static_cast<std::size_t>(i)];
            k3 = rhs(tmp);
            for (int i = 0; i < R; ++i)
                tmp[static_cast<std::size_t>(i)] =
                    g[static_cast<std::size_t>(i)] + h * k3[static_cast<std::size_t>(i)];
            k4 = rhs(tmp);
            for (int i = 0; i < R; ++i)
                g[static_cast<std::size_t>(i)] +=
                    h / 6.0 *
                    (k1[static_cast<std::size_t>(i)] + 2.0 * k2[static_cast<std::size_t>(i)] +
                     2.0 * k3[static_cast<std::size_t>(i)] + k4[static_cast<std::size_t>(i)]);
        }
        return g;
    };

    // Chebyshev nodes in t on [t0, T]; Newton divided differences per regime.
    const int n_nodes = degree + 1;
    std::vector<long double> nodes(static_cast<std::size_t>(n_nodes));
    std::vector<std::vector<long double>> vals(
        static_cast<std::size_t>(R), std::vector<long double>(static_cast<std::size_t>(n_nodes)));
    for (int k = 0; k < n_nodes; ++k) {
        const double ck = std::cos(M_PI * (2.0 * k + 1.0) / (2.0 * n_nodes));
        const double tk = 0.5 * (t0 + T) + 0.5 * (T - t0) * ck;
        nodes[static_cast<std::size_t>(k)] = static_cast<long double>(tk);
        const auto g = integrate_to(T - tk);
        for (int i = 0; i < R; ++i)
            vals[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
                static_cast<long double>(g[static_cast<std::size_t>(i)]);
    }
    std::vector<std::vector<Polynomial>> tcoefs(static_cast<std::size_t>(R));
    for (int i = 0; i < R; ++i) {
        // divided difference table
        std::vector<long double> dd = vals[static_cast<std::size_t>(i)];
        for (int lvl = 1; lvl < n_nodes; ++lvl)
            for (int k = n_nodes - 1; k >= lvl; --k)
                dd[static_cast<std::size_t>(k)] =
                    (dd[static_cast<std::size_t>(k)] - dd[static_cast<std::size_t>(k - 1)]) /
                    (nodes[static_cast<std::size_t>(k)] - nodes[static_cast<std::size_t>(k - lvl)]);
        // expand Newton form to monomial coefficients
        std::vector<long double> coef(static_cast<std::size_t>(n_nodes), 0.0L);
        for (int k = n_nodes - 1; k >= 0; --k) {
            // coef <- coef * (t - nodes[k]) + dd[k]
            for (int d = n_nodes - 1; d >= 1; --d)
                coef[static_cast<std::size_t>(d)] =
                    coef[static_cast<std::size_t>(d - 1)] -
                    nodes[static_cast<std::size_t>(k)] * coef[static_cast<std::size_t>(d)];
            coef[0] = dd[static_cast<std::size_t>(k)] - nodes[static_cast<std::size_t>(k)] * coef[0];
        }
        std::vector<double> cd(coef.size());
        for (std::size_t d = 0; d < coef.size(); ++d) cd[d] = static_cast<double>(coef[d]);
        tcoefs[static_cast<std::size_t>(i)] = {Polynomial(cd), Polynomial::constant(1.0)};
    }
    return {Polynomial::monomial(1), std::move(tcoefs)};
}

}  // namespace mfrs
