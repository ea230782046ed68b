#pragma once

// Feedback controls (four representations with a flat parameter view and JSON
// round trip), generator application, pre-Hamiltonian, Hamiltonian supremum,
// a semiconcavity probe, and the cross-entropy policy optimizer.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfrs/common.hpp"
#include "mfrs/measure.hpp"
#include "mfrs/model.hpp"
#include "mfrs/polynomial.hpp"
#include "mfrs/rng.hpp"

namespace mfrs {

// ============================================================================
// FeedbackControl
// ============================================================================

class FeedbackControl {
  public:
    enum class Kind { constant, piecewise_time, linear_features, tabular };

    // values[regime] = control vector for that regime
    static FeedbackControl constant(Box box, std::vector<std::vector<double>> values) {
        FeedbackControl c;
        c.kind_ = Kind::constant;
        c.box_ = std::move(box);
        c.box_.validate();
        c.dim_ = c.box_.dim();
        c.regimes_ = static_cast<int>(values.size());
        if (c.regimes_ == 0) throw ConfigError("constant control needs at least one regime row");
        for (const auto& row : values) {
            if (static_cast<int>(row.size()) != c.dim_)
                throw ConfigError("constant control row has wrong dimension");
            c.values_.insert(c.values_.end(), row.begin(), row.end());
        }
        return c;
    }

    // knots[0] <= t0; segment s covers [knots[s], knots[s+1]).
    // values[segment][regime] = control vector.
    static FeedbackControl piecewise_time(Box box, std::vector<double> knots,
                                          std::vector<std::vector<std::vector<double>>> values) {
        FeedbackControl c;
        c.kind_ = Kind::piecewise_time;
        c.box_ = std::move(box);
        c.box_.validate();
        c.dim_ = c.box_.dim();
        c.time_knots_ = std::move(knots);
        if (c.time_knots_.empty() || !std::is_sorted(c.time_knots_.begin(), c.time_knots_.end()))
            throw ConfigError("piecewise control needs sorted nonempty time knots");
        if (values.size() != c.time_knots_.size())
            throw ConfigError("piecewise control needs one value block per knot");
        c.regimes_ = static_cast<int>(values.front().size());
        for (const auto& seg : values) {
            if (static_cast<int>(seg.size()) != c.regimes_)
                throw ConfigError("piecewise control segment has wrong regime count");
            for (const auto& row : seg) {
                if (static_cast<int>(row.size()) != c.dim_)
                    throw ConfigError("piecewise control row has wrong dimension");
                c.values_.insert(c.values_.end(), row.begin(), row.end());
            }
        }
        return c;
    }

    // weights[regime][d] has 1 + n_features entries: affine in the features.
    static FeedbackControl linear_in_features(
        Box box, int n_features, std::vector<std::vector<std::vector<double>>> weights) {
        FeedbackControl c;
        c.kind_ = Kind::linear_features;
        c.box_ = std::move(box);
        c.box_.validate();
        c.dim_ = c.box_.dim();
        c.n_features_ = n_features;
        c.regimes_ = static_cast<int>(weights.size());
        if (c.regimes_ == 0 || n_features < 0)
            throw ConfigError("linear control needs regimes and nonnegative feature count");
        for (const auto& reg : weights) {
            if (static_cast<int>(reg.size()) != c.dim_)
                throw ConfigError("linear control block has wrong dimension");
            for (const auto& row : reg) {
                if (static_cast<int>(row.size()) != n_features + 1)
                    throw ConfigError("linear control weight row needs 1 + n_features entries");
                c.values_.insert(c.values_.end(), row.begin(), row.end());
            }
        }
        return c;
    }

    // table[segment][regime][bin] = control vector; bins are defined by
    // feature_edges on the first feature coordinate.
    static FeedbackControl tabular(Box box, std::vector<double> time_knots,
                                   std::vector<double> feature_edges,
                                   std::vector<std::vector<std::vector<std::vector<double>>>> table) {
        FeedbackControl c;
        c.kind_ = Kind::tabular;
        c.box_ = std::move(box);
        c.box_.validate();
        c.dim_ = c.box_.dim();
        c.time_knots_ = std::move(time_knots);
        c.feature_edges_ = std::move(feature_edges);
        if (c.time_knots_.empty() || !std::is_sorted(c.time_knots_.begin(), c.time_knots_.end()))
            throw ConfigError("tabular control needs sorted nonempty time knots");
        if (!std::is_sorted(c.feature_edges_.begin(), c.feature_edges_.end()))
            throw ConfigError("tabular control needs sorted feature edges");
        if (table.size() != c.time_knots_.size())
            throw ConfigError("tabular control needs one block per time knot");
        c.regimes_ = static_cast<int>(table.front().size());
        const std::size_t bins = c.feature_edges_.size() + 1;
        for (const auto& seg : table) {
            if (static_cast<int>(seg.size()) != c.regimes_)
                throw ConfigError("tabular control segment has wrong regime count");
            for (const auto& reg : seg) {
                if (reg.size() != bins)
                    throw ConfigError("tabular control needs feature_edges.size()+1 bins");
                for (const auto& row : reg) {
                    if (static_cast<int>(row.size()) != c.dim_)
                        throw ConfigError("tabular control row has wrong dimension");
                    c.values_.insert(c.values_.end(), row.begin(), row.end());
                }
            }
        }
        return c;
    }

    [[nodiscard]] std::vector<double> operator()(double t, const std::vector<double>& feat,
                                                 int regime) const {
        if (regime < 0 || regime >= regimes_) throw UsageError("control regime out of range");
        std::vector<double> v(static_cast<std::size_t>(dim_));
        const std::size_t r = static_cast<std::size_t>(regime);
        const std::size_t d = static_cast<std::size_t>(dim_);
        switch (kind_) {
            case Kind::constant:
                for (std::size_t k = 0; k < d; ++k) v[k] = values_[r * d + k];
                break;
            case Kind::piecewise_time: {
                const std::size_t s = segment_of(t);
                for (std::size_t k = 0; k < d; ++k)
                    v[k] = values_[(s * static_cast<std::size_t>(regimes_) + r) * d + k];
                break;
            }
            case Kind::linear_features: {
                const std::size_t w = static_cast<std::size_t>(n_features_) + 1;
                for (std::size_t k = 0; k < d; ++k) {
                    const double* row = &values_[(r * d + k) * w];
                    double acc = row[0];
                    for (int j = 0; j < n_features_; ++j)
                        acc += row[static_cast<std::size_t>(j) + 1] *
                               feat[static_cast<std::size_t>(j)];
                    v[k] = acc;
                }
                break;
            }
            case Kind::tabular: {
                const std::size_t s = segment_of(t);
                const std::size_t bins = feature_edges_.size() + 1;
                std::size_t bin = 0;
                while (bin < feature_edges_.size() && feat[0] >= feature_edges_[bin]) ++bin;
                const std::size_t base =
                    ((s * static_cast<std::size_t>(regimes_) + r) * bins + bin) * d;
                for (std::size_t k = 0; k < d; ++k) v[k] = values_[base + k];
                break;
            }
        }
        return box_.clamp(std::move(v));
    }

    [[nodiscard]] Kind kind() const { return kind_; }
    [[nodiscard]] int dim() const { return dim_; }
    [[nodiscard]] int regimes() const { return regimes_; }
    [[nodiscard]] const Box& box() const { return box_; }

    [[nodiscard]] std::size_t param_count() const { return values_.size(); }
    [[nodiscard]] const std::vector<double>& params() const { return values_; }
    void set_params(std::vector<double> p) {
        if (p.size() != values_.size()) throw UsageError("parameter vector size mismatch");
        values_ = std::move(p);
    }

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        j["kind"] = kind_name(kind_);
        j["dim"] = dim_;
        j["regimes"] = regimes_;
        j["box"] = {{"lo", box_.lo}, {"hi", box_.hi}};
        j["values"] = values_;
        if (!time_knots_.empty()) j["time_knots"] = time_knots_;
        if (kind_ == Kind::tabular) j["feature_edges"] = feature_edges_;
        if (kind_ == Kind::linear_features) j["n_features"] = n_features_;
        return j;
    }

    static FeedbackControl from_json(const nlohmann::json& j) {
        FeedbackControl c;
        const std::string kind = j.at("kind").get<std::string>();
        c.dim_ = j.at("dim").get<int>();
        c.regimes_ = j.at("regimes").get<int>();
        c.box_.lo = j.at("box").at("lo").get<std::vector<double>>();
        c.box_.hi = j.at("box").at("hi").get<std::vector<double>>();
        c.box_.validate();
        if (c.box_.dim() != c.dim_) throw ConfigError("control box dimension mismatch");
        c.values_ = j.at("values").get<std::vector<double>>();
        if (j.contains("time_knots"))
            c.time_knots_ = j.at("time_knots").get<std::vector<double>>();
        if (j.contains("feature_edges"))
            c.feature_edges_ = j.at("feature_edges").get<std::vector<double>>();
        if (j.contains("n_features")) c.n_features_ = j.at("n_features").get<int>();
        std::size_t expect = 0;
        const auto d = static_cast<std::size_t>(c.dim_);
        const auto r = static_cast<std::size_t>(c.regimes_);
        if (kind == "constant") {
            c.kind_ = Kind::constant;
            expect = r * d;
        } else if (kind == "piecewise_time") {
            c.kind_ = Kind::piecewise_time;
            expect = c.time_knots_.size() * r * d;
        } else if (kind == "linear_features") {
            c.kind_ = Kind::linear_features;
            expect = r * d * (static_cast<std::size_t>(c.n_features_) + 1);
        } else if (kind == "tabular") {
            c.kind_ = Kind::tabular;
            expect = c.time_knots_.size() * r * (c.feature_edges_.size() + 1) * d;
        } else {
            throw ConfigError("unknown control kind: " + kind);
        }
        if (c.values_.size() != expect || (c.kind_ != Kind::constant && c.time_knots_.empty() &&
                                           c.kind_ != Kind::linear_features))
            throw ConfigError("control value block has wrong size");
        return c;
    }

  private:
    [[nodiscard]] std::size_t segment_of(double t) const {
        auto it = std::upper_bound(time_knots_.begin(), time_knots_.end(), t);
        if (it == time_knots_.begin()) return 0;
        return static_cast<std::size_t>(std::distance(time_knots_.begin(), it)) - 1;
    }
    static const char* kind_name(Kind k) {
        switch (k) {
            case Kind::constant: return "constant";
            case Kind::piecewise_time: return "piecewise_time";
            case Kind::linear_features: return "linear_features";
            case Kind::tabular: return "tabular";
        }
        return "?";
    }

    Kind kind_ = Kind::constant;
    Box box_;
    int dim_ = 1, regimes_ = 1, n_features_ = 0;
    std::vector<double> time_knots_, feature_edges_, values_;
};

// ============================================================================
// Generator calculus
// ============================================================================

// b u' + (sigma^2/2) u'' + lambda * (integral of u(.+y) - u(.) against gamma),
// all arguments polynomials in x; scaled_moments[k-1] = (1/k!) E[Y^k].
inline Polynomial apply_generator(const Polynomial& u, const Polynomial& drift,
                                  const Polynomial& sigma, const Polynomial& intensity,
                                  const std::vector<double>& scaled_moments) {
    Polynomial out = drift * u.derivative();
    out += (sigma * sigma) * u.derivative(2) * 0.5;
    if (u.degree() >= 1) out += intensity * jump_image(u, scaled_moments);
    return out;
}

// Cached derivative/jump images of a test function for pointwise evaluation.
struct GeneratorTerms {
    Polynomial u, du, ddu, jump;
};

inline GeneratorTerms make_generator_terms(const Polynomial& u, const JumpLaw& gamma) {
    GeneratorTerms g;
    g.u = u;
    g.du = u.derivative();
    g.ddu = u.derivative(2);
    g.jump = u.degree() >= 1 ? jump_image(u, gamma.scaled_moments(u.degree())) : Polynomial{};
    return g;
}

inline double generator_value(const ModelSpec& m, const GeneratorTerms& g, double t, double x,
                              const std::vector<double>& feat, const std::vector<double>& v,
                              int i) {
    const double s = m.sigma(t, x, feat, v, i);
    return m.b(t, x, feat, v, i) * g.du(x) + 0.5 * s * s * g.ddu(x) +
           m.lambda(t, x, feat, v, i) * g.jump(x);
}

// H^v = - < mu, f(., v) + L[Dm](.) > with Dm the x-slot derivative polynomial.
inline double pre_hamiltonian(const ModelSpec& m, double t, const DiscreteMeasure& mu, int i,
                              const std::vector<double>& v, const Polynomial& Dm) {
    const GeneratorTerms g = make_generator_terms(Dm, m.gamma);
    const std::vector<double> feat = features_of(mu, m.feature_moments);
    CompensatedSum s;
    for (std::size_t k = 0; k < mu.size(); ++k)
        s.add(mu.w[k] *
              (m.f(t, mu.x[k], feat, v, i) + generator_value(m, g, t, mu.x[k], feat, v, i)));
    return -s.value();
}

struct HamiltonianResult {
    double value = 0.0;
    std::vector<double> argmax;
};

struct SupConfig {
    int grid = 33;
    int golden_iters = 60;
    int sweeps = 2;  // coordinate-descent passes for vector controls
};

inline HamiltonianResult hamiltonian_sup(const ModelSpec& m, double t, const DiscreteMeasure& mu,
                                         int i, const Polynomial& Dm, const SupConfig& sc = {}) {
    const GeneratorTerms g = make_generator_terms(Dm, m.gamma);
    const std::vector<double> feat = features_of(mu, m.feature_moments);
    auto eval = [&](const std::vector<double>& v) {
        CompensatedSum s;
        for (std::size_t k = 0; k < mu.size(); ++k)
            s.add(mu.w[k] *
                  (m.f(t, mu.x[k], feat, v, i) + generator_value(m, g, t, mu.x[k], feat, v, i)));
        return -s.value();
    };

    if (m.concave_quadratic && m.f_v_coeffs && m.A.dim() == 1) {
        const auto fc = m.f_v_coeffs(t, feat, i);
        if (fc[0] > 0.0) {
            const double pair_dm = pairing(mu, Dm.derivative());
            double vstar = -(fc[1] + m.drift_vcoef * pair_dm) / (2.0 * fc[0]);
            vstar = std::min(m.A.hi[0], std::max(m.A.lo[0], vstar));
            return {eval({vstar}), {vstar}};
        }
    }

    // 1-d search on a closed interval: coarse grid then golden-section.
    auto line_search = [&](std::vector<double> v, int coord, double lo, double hi) {
        double best_v = lo, best_val = -std::numeric_limits<double>::infinity();
        const int n = std::max(2, sc.grid);
        for (int k = 0; k < n; ++k) {
            v[static_cast<std::size_t>(coord)] = lo + (hi - lo) * k / (n - 1);
            const double val = eval(v);
            if (val > best_val) {
                best_val = val;
                best_v = v[static_cast<std::size_t>(coord)];
            }
        }
        const double h = (hi - lo) / (n - 1);
        double a = std::max(lo, best_v - h), b = std::min(hi, best_v + h);
        const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
        double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
        v[static_cast<std::size_t>(coord)] = x1;
        double f1 = eval(v);
        v[static_cast<std::size_t>(coord)] = x2;
        double f2 = eval(v);
        for (int it = 0; it < sc.golden_iters && b - a > 1e-14; ++it) {
            if (f1 < f2) {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                v[static_cast<std::size_t>(coord)] = x2;
                f2 = eval(v);
            } else {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                v[static_cast<std::size_t>(coord)] = x1;
                f1 = eval(v);
            }
        }
        const double mid = 0.5 * (a + b);
        v[static_cast<std::size_t>(coord)] = mid;
        const double fm = eval(v);
        if (fm >= best_val) return std::make_pair(mid, fm);
        return std::make_pair(best_v, best_val);
    };

    std::vector<double> v(static_cast<std::size_t>(m.A.dim()));
    for (int d = 0; d < m.A.dim(); ++d)
        v[static_cast<std::size_t>(d)] = 0.5 * (m.A.lo[static_cast<std::size_t>(d)] +
                                                m.A.hi[static_cast<std::size_t>(d)]);
    double value = eval(v);
    const int passes = m.A.dim() == 1 ? 1 : sc.sweeps;
    for (int pass = 0; pass < passes; ++pass) {
        for (int d = 0; d < m.A.dim(); ++d) {
            auto [vd, val] = line_search(v, d, m.A.lo[static_cast<std::size_t>(d)],
                                         m.A.hi[static_cast<std::size_t>(d)]);
            v[static_cast<std::size_t>(d)] = vd;
            value = val;
        }
    }
    return {value, v};
}

// Empirical semiconcavity modulus of v -> H^v over sampled control pairs:
// the largest lambda with H^{v2} <= H^{v1} - dH(v1) |v1 - v2| - lambda |v1 - v2|^2.
struct ConcavityReport {
    double lambda_hat = 0.0;
    int pairs = 0;
};

inline ConcavityReport concavity_check(const ModelSpec& m, double t, const DiscreteMeasure& mu,
                                       int i, const Polynomial& Dm, int n_pairs = 200,
                                       std::uint64_t seed = 7) {
    if (m.A.dim() != 1) throw UsageError("concavity_check supports scalar controls only");
    const GeneratorTerms g = make_generator_terms(Dm, m.gamma);
    const std::vector<double> feat = features_of(mu, m.feature_moments);
    auto eval = [&](double v0) {
        const std::vector<double> v{v0};
        CompensatedSum s;
        for (std::size_t k = 0; k < mu.size(); ++k)
            s.add(mu.w[k] *
                  (m.f(t, mu.x[k], feat, v, i) + generator_value(m, g, t, mu.x[k], feat, v, i)));
        return -s.value();
    };
    RngStream rng(seed);
    const double lo = m.A.lo[0], hi = m.A.hi[0];
    double lam = std::numeric_limits<double>::infinity();
    int used = 0;
    while (used < n_pairs) {
        const double v1 = lo + (hi - lo) * rng.unif();
        const double v2 = lo + (hi - lo) * rng.unif();
        const double gap = std::abs(v1 - v2);
        if (gap < 1e-3) continue;
        const double fd = 1e-5 * (1.0 + std::abs(v1));
        const double dh1 = (eval(v1 + fd) - eval(v1 - fd)) / (2.0 * fd);
        const double cand = (eval(v1) - eval(v2) - dh1 * gap) / (gap * gap);
        lam = std::min(lam, cand);
        ++used;
    }
    return {lam, used};
}

// ============================================================================
// Cross-entropy policy search
// ============================================================================

struct CemConfig {
    int population = 64;
    double elite_frac = 0.125;
    int generations = 30;
    double init_sd = 0.5;
    double sd_floor = 1e-3;
    std::uint64_t seed = 1;
    double budget_seconds = std::numeric_limits<double>::infinity();
    unsigned threads = 1;
};

struct CemResult {
    FeedbackControl control;
    double best_cost = 0.0;
    std::vector<double> best_history;  // best-so-far after each generation
    int evaluations = 0;
};

// Minimizes cost over the control's flat parameters. The cost functional must
// be deterministic in its argument (fix simulation seeds) so that re-evaluating
// the carried elite reproduces its score and the best-so-far curve is
// non-increasing.
inline CemResult optimize_control(const FeedbackControl& init,
                                  const std::function<double(const FeedbackControl&)>& cost,
                                  const CemConfig& cc = {}) {
    if (cc.population < 2 || cc.generations < 1)
        throw UsageError("cross-entropy search needs population >= 2 and generations >= 1");
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };
    const std::size_t n = init.param_count();
    if (n == 0) throw UsageError("control has no free parameters");

    CemResult res{init, cost(init), {}, 1};
    std::vector<double> best_params = init.params();
    std::vector<double> mu = best_params, sd(n, cc.init_sd);
    RngStream rng(derive_seed(cc.seed, {stream::optimizer}));
    const int elite = std::max(1, static_cast<int>(std::lround(cc.population * cc.elite_frac)));

    std::vector<std::vector<double>> cand(static_cast<std::size_t>(cc.population));
    std::vector<double> score(static_cast<std::size_t>(cc.population));
    for (int gen = 0; gen < cc.generations; ++gen) {
        if (elapsed() > cc.budget_seconds)
            throw BudgetExceeded("optimizer budget exhausted after " + std::to_string(gen) +
                                 " generations");
        cand[0] = best_params;  // elitism: carry the incumbent
        for (int c = 1; c < cc.population; ++c) {
            auto& p = cand[static_cast<std::size_t>(c)];
            p.resize(n);
            for (std::size_t k = 0; k < n; ++k) p[k] = mu[k] + sd[k] * rng.gauss();
        }
        parallel_for(static_cast<std::size_t>(cc.population), cc.threads, [&](std::size_t c) {
            FeedbackControl trial = init;
            trial.set_params(cand[c]);
            score[c] = cost(trial);
        });
        res.evaluations += cc.population;

        std::vector<int> order(static_cast<std::size_t>(cc.population));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return score[static_cast<std::size_t>(a)] < score[static_cast<std::size_t>(b)];
        });
        const auto top = static_cast<std::size_t>(order.front());
        if (score[top] < res.best_cost) {
            res.best_cost = score[top];
            best_params = cand[top];
        }
        res.best_history.push_back(res.best_cost);

        for (std::size_t k = 0; k < n; ++k) {
            CompensatedSum sm, sv;
            for (int e = 0; e < elite; ++e)
                sm.add(cand[static_cast<std::size_t>(order[static_cast<std::size_t>(e)])][k]);
            const double mean = sm.value() / elite;
            for (int e = 0; e < elite; ++e) {
                const double d =
                    cand[static_cast<std::size_t>(order[static_cast<std::size_t>(e)])][k] - mean;
                sv.add(d * d);
            }
            mu[k] = mean;
            sd[k] = std::max(cc.sd_floor, std::sqrt(sv.value() / elite));
        }
    }
    res.control.set_params(best_params);
    return res;
}

}  // namespace mfrs
