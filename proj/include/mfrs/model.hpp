#pragma once

// Model data: jump laws (closed-form moments + inverse-transform sampler),
// the control box, the coefficient bundle (b, sigma, lambda, f, h) with its
// regularity constants, a statistical assumption validator, and the built-in
// model library used by the shipped experiments.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mfrs/common.hpp"
#include "mfrs/measure.hpp"
#include "mfrs/regime.hpp"
#include "mfrs/rng.hpp"

namespace mfrs {

enum class JumpFamily { point_mass, finite_discrete, uniform };

class JumpLaw {
  public:
    static JumpLaw point_mass(double a) {
        JumpLaw g;
        g.family_ = JumpFamily::point_mass;
        g.atoms_ = {a};
        g.weights_ = {1.0};
        return g;
    }
    static JumpLaw finite_discrete(std::vector<double> atoms, std::vector<double> weights) {
        if (atoms.empty() || atoms.size() != weights.size())
            throw UnsupportedFamily("finite_discrete law needs aligned atoms and weights");
        double total = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw UnsupportedFamily("finite_discrete weights must be nonnegative");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw UnsupportedFamily("finite_discrete weights must sum to 1");
        JumpLaw g;
        g.family_ = JumpFamily::finite_discrete;
        g.atoms_ = std::move(atoms);
        g.weights_ = std::move(weights);
        return g;
    }
    static JumpLaw uniform(double a, double b) {
        if (!(a < b)) throw UnsupportedFamily("uniform law needs a < b");
        JumpLaw g;
        g.family_ = JumpFamily::uniform;
        g.lo_ = a;
        g.hi_ = b;
        return g;
    }

    [[nodiscard]] JumpFamily family() const { return family_; }
    [[nodiscard]] bool is_discrete() const { return family_ != JumpFamily::uniform; }
    [[nodiscard]] const std::vector<double>& atoms() const { return atoms_; }
    [[nodiscard]] const std::vector<double>& weights() const { return weights_; }
    [[nodiscard]] double lo() const { return lo_; }
    [[nodiscard]] double hi() const { return hi_; }

    // m_k = (1/k!) Integral y^k gamma(dy)
    [[nodiscard]] double scaled_moment(int k) const {
        double fact = 1.0;
        for (int i = 2; i <= k; ++i) fact *= i;
        if (family_ == JumpFamily::uniform) {
            // Integral y^k dy / (hi - lo) = (hi^{k+1} - lo^{k+1}) / ((k+1)(hi-lo))
            const double num = std::pow(hi_, k + 1) - std::pow(lo_, k + 1);
            return num / ((hi_ - lo_) * (k + 1) * fact);
        }
        CompensatedSum s;
        for (std::size_t i = 0; i < atoms_.size(); ++i)
            s.add(weights_[i] * std::pow(atoms_[i], k));
        return s.value() / fact;
    }

    [[nodiscard]] std::vector<double> scaled_moments(int upto) const {
        std::vector<double> out;
        out.reserve(upto);
        for (int k = 1; k <= upto; ++k) out.push_back(scaled_moment(k));
        return out;
    }

    // Integral e^{delta |y|} gamma(dy)
    [[nodiscard]] double abs_exp_moment(double delta) const {
        if (family_ == JumpFamily::uniform) {
            auto piece = [&](double a, double b) {  // over [a,b] with a >= 0
                return (std::exp(delta * b) - std::exp(delta * a)) / delta;
            };
            double acc = 0.0;
            if (hi_ > 0.0) acc += piece(std::max(lo_, 0.0), hi_);
            if (lo_ < 0.0) acc += piece(std::max(-hi_, 0.0), -lo_);
            return acc / (hi_ - lo_);
        }
        CompensatedSum s;
        for (std::size_t i = 0; i < atoms_.size(); ++i)
            s.add(weights_[i] * std::exp(delta * std::abs(atoms_[i])));
        return s.value();
    }

    // Inverse transform of u in [0,1).
    [[nodiscard]] double sample(double u) const {
        if (family_ == JumpFamily::uniform) return lo_ + u * (hi_ - lo_);
        double acc = 0.0;
        for (std::size_t i = 0; i < atoms_.size(); ++i) {
            acc += weights_[i];
            if (u < acc) return atoms_[i];
        }
        return atoms_.back();
    }

  private:
    JumpFamily family_ = JumpFamily::point_mass;
    std::vector<double> atoms_{0.0};
    std::vector<double> weights_{1.0};
    double lo_ = 0.0, hi_ = 1.0;
};

struct Box {
    std::vector<double> lo{-1.0};
    std::vector<double> hi{1.0};

    [[nodiscard]] int dim() const { return static_cast<int>(lo.size()); }
    void validate() const {
        if (lo.size() != hi.size() || lo.empty())
            throw ConfigError("control box bounds must be nonempty and aligned");
        for (std::size_t i = 0; i < lo.size(); ++i)
            if (!(lo[i] <= hi[i])) throw ConfigError("control box has lo > hi");
    }
    [[nodiscard]] std::vector<double> clamp(std::vector<double> v) const {
        if (v.size() != lo.size()) throw UsageError("control dimension mismatch");
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = std::min(hi[i], std::max(lo[i], v[i]));
        return v;
    }
};

// Coefficient signature: (t, x, moment features, control, regime).
using Coefficient =
    std::function<double(double, double, const std::vector<double>&, const std::vector<double>&, int)>;
using TerminalCost = std::function<double(double, double, const std::vector<double>&, int)>;

struct ModelSpec {
    std::string name = "custom";
    GeneratorMatrix Q{{{0.0}}};
    Coefficient b, sigma, lambda, f;
    TerminalCost h;
    JumpLaw gamma = JumpLaw::point_mass(0.0);
    std::vector<int> feature_moments{1};  // the moment orders fed to coefficients/controls
    Box A;
    double C0 = 1.0, kappa0 = 1.0, kappa1 = 1.0, delta = 1.0;
    double t0 = 0.0, T = 1.0;
    // Set when the pre-Hamiltonian is concave quadratic in a scalar control:
    // drift is ... + drift_vcoef * v and f = fq v^2 + fl v + (v-free part),
    // with (fq, fl) possibly state dependent through f_v_coeffs.
    bool concave_quadratic = false;
    double drift_vcoef = 0.0;
    std::function<std::array<double, 2>(double, const std::vector<double>&, int)> f_v_coeffs;

    [[nodiscard]] int num_regimes() const { return Q.size(); }
};

inline std::vector<double> features_of(const std::vector<double>& xs,
                                       const std::vector<int>& orders) {
    std::vector<double> out;
    out.reserve(orders.size());
    const double inv = 1.0 / static_cast<double>(xs.size());
    for (int k : orders) {
        CompensatedSum s;
        for (double x : xs) {
            double p = 1.0;
            for (int j = 0; j < k; ++j) p *= x;
            s.add(p);
        }
        out.push_back(s.value() * inv);
    }
    return out;
}

inline std::vector<double> features_of(const DiscreteMeasure& mu, const std::vector<int>& orders) {
    std::vector<double> out;
    out.reserve(orders.size());
    for (int k : orders) out.push_back(raw_moment(mu, k));
    return out;
}

// ============================================================================
// Assumption validator
// ============================================================================

struct ValidationConfig {
    int n_samples = 2048;
    std::uint64_t seed = 17;
    double x_span = 2.0;        // sample |x| up to this
    double feature_span = 1.5;  // sample each feature coordinate in [-span, span]
    double perturbation = 0.25;
};

struct ValidationReport {
    double max_abs_b = 0.0, max_abs_sigma = 0.0, max_abs_lambda = 0.0;
    double max_abs_f = 0.0, max_abs_h = 0.0;
    double min_lambda = 0.0;
    double max_lip_coefficients = 0.0;  // vs kappa0
    double max_lip_costs = 0.0;         // vs kappa1
    double gamma_abs_exp_moment = 0.0;
    std::vector<std::string> violations;

    [[nodiscard]] bool ok() const { return violations.empty(); }
};

inline ValidationReport validate_assumptions(const ModelSpec& m,
                                             const ValidationConfig& vc = {}) {
    validate_generator(m.Q);
    m.A.validate();
    ValidationReport rep;
    rep.gamma_abs_exp_moment = m.gamma.abs_exp_moment(m.delta);
    if (!std::isfinite(rep.gamma_abs_exp_moment))
        rep.violations.push_back("jump law lacks a finite delta-exponential moment");
    rep.min_lambda = std::numeric_limits<double>::infinity();

    RngStream rng(vc.seed);
    const int nf = static_cast<int>(m.feature_moments.size());
    auto draw_point = [&](double& t, double& x, std::vector<double>& feat,
                          std::vector<double>& v, int& i) {
        t = m.t0 + (m.T - m.t0) * rng.unif();
        x = -vc.x_span + 2.0 * vc.x_span * rng.unif();
        feat.resize(nf);
        for (auto& fv : feat) fv = -vc.feature_span + 2.0 * vc.feature_span * rng.unif();
        v.resize(m.A.dim());
        for (int d = 0; d < m.A.dim(); ++d)
            v[d] = m.A.lo[d] + (m.A.hi[d] - m.A.lo[d]) * rng.unif();
        i = static_cast<int>(rng.unif() * m.num_regimes());
        if (i >= m.num_regimes()) i = m.num_regimes() - 1;
    };

    for (int s = 0; s < vc.n_samples; ++s) {
        double t, x;
        std::vector<double> feat, v;
        int i;
        draw_point(t, x, feat, v, i);
        const double bv = m.b(t, x, feat, v, i);
        const double sv = m.sigma(t, x, feat, v, i);
        const double lv = m.lambda(t, x, feat, v, i);
        const double fv = m.f(t, x, feat, v, i);
        const double hv = m.h(m.T, x, feat, i);
        rep.max_abs_b = std::max(rep.max_abs_b, std::abs(bv));
        rep.max_abs_sigma = std::max(rep.max_abs_sigma, std::abs(sv));
        rep.max_abs_lambda = std::max(rep.max_abs_lambda, std::abs(lv));
        rep.max_abs_f = std::max(rep.max_abs_f, std::abs(fv));
        rep.max_abs_h = std::max(rep.max_abs_h, std::abs(hv));
        rep.min_lambda = std::min(rep.min_lambda, lv);

        // Lipschitz probes in (t, x, features) jointly and coordinate-wise;
        // the control and regime stay fixed within a pair.
        for (int mode = 0; mode < 3; ++mode) {
            double t2 = t, x2 = x;
            std::vector<double> feat2 = feat;
            const double d1 = vc.perturbation * (2.0 * rng.unif() - 1.0);
            if (mode == 0) t2 = std::min(m.T, std::max(m.t0, t + d1));
            if (mode == 1) x2 = x + d1;
            if (mode == 2 && nf > 0) {
                const int c = static_cast<int>(rng.unif() * nf) % nf;
                feat2[c] += d1;
            }
            double modulus = std::abs(t2 - t) + std::abs(x2 - x);
            for (int c = 0; c < nf; ++c) modulus += std::abs(feat2[c] - feat[c]);
            if (modulus < 1e-12) continue;
            const double db = std::abs(m.b(t2, x2, feat2, v, i) - bv);
            const double ds = std::abs(m.sigma(t2, x2, feat2, v, i) - sv);
            const double dl = std::abs(m.lambda(t2, x2, feat2, v, i) - lv);
            const double df = std::abs(m.f(t2, x2, feat2, v, i) - fv);
            const double dh = std::abs(m.h(m.T, x2, feat2, i) - hv);
            rep.max_lip_coefficients =
                std::max({rep.max_lip_coefficients, db / modulus, ds / modulus, dl / modulus});
            rep.max_lip_costs = std::max({rep.max_lip_costs, df / modulus, dh / modulus});
        }
    }

    auto flag = [&](bool bad, const std::string& msg) {
        if (bad) rep.violations.push_back(msg);
    };
    flag(rep.max_abs_b > m.C0, "drift exceeds C0: max |b| = " + std::to_string(rep.max_abs_b));
    flag(rep.max_abs_sigma > m.C0,
         "volatility exceeds C0: max |sigma| = " + std::to_string(rep.max_abs_sigma));
    flag(rep.max_abs_lambda > m.C0,
         "intensity exceeds C0: max |lambda| = " + std::to_string(rep.max_abs_lambda));
    flag(rep.min_lambda < 0.0, "negative jump intensity sampled");
    flag(rep.max_lip_coefficients > m.kappa0,
         "coefficient Lipschitz ratio " + std::to_string(rep.max_lip_coefficients) +
             " exceeds kappa0");
    flag(rep.max_lip_costs > m.kappa1,
         "cost Lipschitz ratio " + std::to_string(rep.max_lip_costs) + " exceeds kappa1");
    return rep;
}

// ============================================================================
// Built-in model library
// ============================================================================

// Constant coefficients with a per-regime drift; terminal cost selectable.
// h_kind: "zero" | "linear_x" (h = x) | "indicator" (h = 1 at h_regime).
struct ConstantModelParams {
    std::vector<double> b_regime{0.0};
    double sigma = 0.0;
    double lambda = 0.0;
    JumpLaw gamma = JumpLaw::point_mass(0.0);
    double f_const = 0.0;
    std::string h_kind = "zero";
    int h_regime = 1;
    double mean_field_drift = 0.0;  // adds mf * <mu, x> to the drift
};

inline ModelSpec make_constant_model(const ConstantModelParams& p, GeneratorMatrix Q,
                                     double t0, double T) {
    ModelSpec m;
    m.name = "constant";
    m.Q = std::move(Q);
    validate_generator(m.Q);
    if (static_cast<int>(p.b_regime.size()) != m.num_regimes())
        throw ConfigError("constant model: b_regime size must match generator");
    m.gamma = p.gamma;
    m.t0 = t0;
    m.T = T;
    m.feature_moments = {1};
    const auto br = p.b_regime;
    const double mf = p.mean_field_drift;
    m.b = [br, mf](double, double, const std::vector<double>& feat, const std::vector<double>&,
                   int i) { return br[static_cast<std::size_t>(i)] + mf * feat[0]; };
    const double sg = p.sigma;
    m.sigma = [sg](double, double, const std::vector<double>&, const std::vector<double>&, int) {
        return sg;
    };
    const double lam = p.lambda;
    m.lambda = [lam](double, double, const std::vector<double>&, const std::vector<double>&, int) {
        return lam;
    };
    const double fc = p.f_const;
    m.f = [fc](double, double, const std::vector<double>&, const std::vector<double>&, int) {
        return fc;
    };
    if (p.h_kind == "zero") {
        m.h = [](double, double, const std::vector<double>&, int) { return 0.0; };
    } else if (p.h_kind == "linear_x") {
        m.h = [](double, double x, const std::vector<double>&, int) { return x; };
    } else if (p.h_kind == "indicator") {
        const int hr = p.h_regime;
        m.h = [hr](double, double, const std::vector<double>&, int i) {
            return i == hr ? 1.0 : 0.0;
        };
    } else {
        throw ConfigError("constant model: unknown h_kind " + p.h_kind);
    }
    double cb = std::abs(p.sigma) + std::abs(p.lambda);
    for (double bi : br) cb = std::max(cb, std::abs(bi) + std::abs(mf) * 3.0);
    m.C0 = std::max(1.0, cb);
    m.kappa0 = std::max(1.0, std::abs(mf));
    m.kappa1 = 1.0;
    return m;
}

// Mean-reverting drift with control shift, optional state/mean dependent jump
// intensity, control-tracking running cost, and a soft-clipped terminal cost
// on the mean. b = a_i + bv v - r x + s m1; lambda = clip(l0 + l1 x + l2 m1).
struct LinearMRParams {
    std::vector<double> a_regime{0.0, 0.0};
    double bv = 1.0;
    double r = 0.5;
    double s = 0.3;
    double sigma0 = 0.2;
    double l0 = 0.0, l1 = 0.0, l2 = 0.0, lmax = 3.0;
    JumpLaw gamma = JumpLaw::point_mass(0.0);
    double fq = 0.0, fl = 0.0;
    // optional tracking target table on m1 (f = fq (v - target)^2)
    std::vector<double> target_edges;
    std::vector<std::vector<double>> target_values;  // [regime][bin]
    std::vector<double> theta{0.0, 0.0};             // h = min(|m1 - theta_i|, hmax) * hw
    double hmax = 10.0, hw = 0.0;
};

inline ModelSpec make_linear_mr_model(const LinearMRParams& p, GeneratorMatrix Q, Box A,
                                      double t0, double T) {
    ModelSpec m;
    m.name = "linear_mean_reverting";
    m.Q = std::move(Q);
    validate_generator(m.Q);
    if (static_cast<int>(p.a_regime.size()) != m.num_regimes())
        throw ConfigError("linear_mean_reverting: a_regime size must match generator");
    m.A = std::move(A);
    m.A.validate();
    m.gamma = p.gamma;
    m.t0 = t0;
    m.T = T;
    m.feature_moments = {1};
    const auto pa = p;
    m.b = [pa](double, double x, const std::vector<double>& feat, const std::vector<double>& v,
               int i) {
        return pa.a_regime[static_cast<std::size_t>(i)] + pa.bv * v[0] - pa.r * x +
               pa.s * feat[0];
    };
    m.sigma = [pa](double, double, const std::vector<double>&, const std::vector<double>&, int) {
        return pa.sigma0;
    };
    m.lambda = [pa](double, double x, const std::vector<double>& feat, const std::vector<double>&,
                    int) {
        const double raw = pa.l0 + pa.l1 * x + pa.l2 * feat[0];
        return std::min(pa.lmax, std::max(0.0, raw));
    };
    const bool tracking = !pa.target_edges.empty() || !pa.target_values.empty();
    if (tracking && pa.target_values.size() != static_cast<std::size_t>(m.num_regimes()))
        throw ConfigError("linear_mean_reverting: target_values must have one row per regime");
    auto target_at = [pa](const std::vector<double>& feat, int i) {
        const auto& row = pa.target_values[static_cast<std::size_t>(i)];
        std::size_t bin = 0;
        while (bin < pa.target_edges.size() && feat[0] >= pa.target_edges[bin]) ++bin;
        return row[std::min(bin, row.size() - 1)];
    };
    if (tracking) {
        m.f = [pa, target_at](double, double, const std::vector<double>& feat,
                              const std::vector<double>& v, int i) {
            const double dv = v[0] - target_at(feat, i);
            return pa.fq * dv * dv;
        };
        m.f_v_coeffs = [pa, target_at](double, const std::vector<double>& feat, int i) {
            const double tar = target_at(feat, i);
            return std::array<double, 2>{pa.fq, -2.0 * pa.fq * tar};
        };
    } else {
        m.f = [pa](double, double, const std::vector<double>&, const std::vector<double>& v,
                   int) { return pa.fq * v[0] * v[0] + pa.fl * v[0]; };
        m.f_v_coeffs = [pa](double, const std::vector<double>&, int) {
            return std::array<double, 2>{pa.fq, pa.fl};
        };
    }
    m.h = [pa](double, double, const std::vector<double>& feat, int i) {
        return pa.hw * std::min(std::abs(feat[0] - pa.theta[static_cast<std::size_t>(i)]), pa.hmax);
    };
    m.concave_quadratic = pa.fq > 0.0;
    m.drift_vcoef = pa.bv;
    m.C0 = 4.0;
    m.kappa0 = std::max({1.0, pa.r, std::abs(pa.s), std::abs(pa.l1) + std::abs(pa.l2)});
    m.kappa1 = std::max(1.0, pa.hw);
    return m;
}

// Controlled mean with a kinked terminal cost: b = bv v + s m1, f = fq v^2,
// h = hw min(|m1 - theta_i|, hmax). The kink at the reachable optimum is what
// produces a first-order (root-N) value gap.
struct LqRegimeParams {
    double bv = 1.0;
    double s = 0.0;
    double sigma0 = 0.2;
    std::vector<double> sigma_regime;  // optional; overrides sigma0 per regime
    double lambda0 = 0.0;
    JumpLaw gamma = JumpLaw::point_mass(0.0);
    double fq = 0.05;
    std::vector<double> theta{0.3, -0.3};
    double hmax = 10.0, hw = 1.0;
};

inline ModelSpec make_lq_regime_model(const LqRegimeParams& p, GeneratorMatrix Q, Box A,
                                      double t0, double T) {
    ModelSpec m;
    m.name = "lq_regime";
    m.Q = std::move(Q);
    validate_generator(m.Q);
    if (static_cast<int>(p.theta.size()) != m.num_regimes())
        throw ConfigError("lq_regime: theta size must match generator");
    if (!p.sigma_regime.empty() &&
        static_cast<int>(p.sigma_regime.size()) != m.num_regimes())
        throw ConfigError("lq_regime: sigma_regime size must match generator");
    m.A = std::move(A);
    m.A.validate();
    m.gamma = p.gamma;
    m.t0 = t0;
    m.T = T;
    m.feature_moments = {1};
    auto pa = p;
    if (pa.sigma_regime.empty())
        pa.sigma_regime.assign(static_cast<std::size_t>(m.num_regimes()), pa.sigma0);
    m.b = [pa](double, double, const std::vector<double>& feat, const std::vector<double>& v,
               int) { return pa.bv * v[0] + pa.s * feat[0]; };
    m.sigma = [pa](double, double, const std::vector<double>&, const std::vector<double>&,
                   int i) { return pa.sigma_regime[static_cast<std::size_t>(i)]; };
    m.lambda = [pa](double, double, const std::vector<double>&, const std::vector<double>&, int) {
        return pa.lambda0;
    };
    m.f = [pa](double, double, const std::vector<double>&, const std::vector<double>& v, int) {
        return pa.fq * v[0] * v[0];
    };
    m.f_v_coeffs = [pa](double, const std::vector<double>&, int) {
        return std::array<double, 2>{pa.fq, 0.0};
    };
    m.h = [pa](double, double, const std::vector<double>& feat, int i) {
        return pa.hw * std::min(std::abs(feat[0] - pa.theta[static_cast<std::size_t>(i)]), pa.hmax);
    };
    m.concave_quadratic = pa.fq > 0.0;
    m.drift_vcoef = pa.bv;
    m.C0 = 4.0;
    m.kappa0 = std::max(1.0, std::abs(pa.s));
    m.kappa1 = std::max(1.0, pa.hw);
    return m;
}

}  // namespace mfrs
