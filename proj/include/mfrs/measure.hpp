#pragma once

// Discrete measures, moment pairings, the exponential-moment gauges, and the
// weighted-moment metric d together with its squared companion dhat.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mfrs/basis.hpp"
#include "mfrs/common.hpp"
#include "mfrs/polynomial.hpp"

namespace mfrs {

struct DiscreteMeasure {
    std::vector<double> x;  // atom locations
    std::vector<double> w;  // nonnegative weights summing to 1

    static DiscreteMeasure point(double a) { return {{a}, {1.0}}; }

    static DiscreteMeasure empirical(const std::vector<double>& xs) {
        DiscreteMeasure mu;
        mu.x = xs;
        mu.w.assign(xs.size(), 1.0 / static_cast<double>(xs.size()));
        return mu;
    }

    [[nodiscard]] std::size_t size() const { return x.size(); }

    void validate(double tol = 1e-12) const {
        if (x.size() != w.size() || x.empty())
            throw UsageError("measure atoms and weights must be nonempty and aligned");
        CompensatedSum s;
        for (double wi : w) {
            if (wi < -tol) throw UsageError("measure has a negative weight");
            s.add(wi);
        }
        if (std::abs(s.value() - 1.0) > 1e-9)
            throw UsageError("measure weights must sum to 1");
    }
};

inline double pairing(const DiscreteMeasure& mu, const Polynomial& f) {
    CompensatedSum s;
    for (std::size_t i = 0; i < mu.x.size(); ++i) s.add(mu.w[i] * f(mu.x[i]));
    return s.value();
}

inline double raw_moment(const DiscreteMeasure& mu, int k) {
    CompensatedSum s;
    for (std::size_t i = 0; i < mu.x.size(); ++i) {
        double p = 1.0;
        for (int j = 0; j < k; ++j) p *= mu.x[i];
        s.add(mu.w[i] * p);
    }
    return s.value();
}

// e_delta(x) = exp(delta (sqrt(x^2+1) - 1)); <mu, e_delta> is the gauge that
// defines M_b and the confinement tube O_M.
inline double exp_gauge(double x, double delta) {
    return std::exp(delta * (std::sqrt(x * x + 1.0) - 1.0));
}

inline double exp_moment(const DiscreteMeasure& mu, double delta) {
    CompensatedSum s;
    for (std::size_t i = 0; i < mu.x.size(); ++i) s.add(mu.w[i] * exp_gauge(mu.x[i], delta));
    return s.value();
}

// K* = (delta C0 / 2)(2 + C0 + delta C0) + C0 (Integral e^{delta|y|} gamma(dy) - 1).
inline double kstar(double delta, double C0, double gamma_abs_exp_moment) {
    if (!std::isfinite(gamma_abs_exp_moment))
        throw DivergentJumpMoment("jump law lacks a finite delta-exponential moment");
    return 0.5 * delta * C0 * (2.0 + C0 + delta * C0) +
           C0 * (gamma_abs_exp_moment - 1.0);
}

inline bool in_O_M(const DiscreteMeasure& mu, double delta, double M, double t,
                   double kstar_value) {
    return exp_moment(mu, delta) <= M * std::exp(kstar_value * t);
}

inline bool moments_equal(const DiscreteMeasure& mu, const DiscreteMeasure& nu, int max_degree,
                          double tol = 1e-10) {
    for (int k = 1; k <= max_degree; ++k)
        if (std::abs(raw_moment(mu, k) - raw_moment(nu, k)) > tol) return false;
    return true;
}

inline double metric_d(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                       const PolynomialBasis& basis, const WeightSequence& weights) {
    if (weights.size() != basis.size())
        throw UsageError("weight sequence does not match basis");
    CompensatedSum s;
    for (std::size_t j = 0; j < basis.size(); ++j)
        s.add(weights.c[j] * std::abs(pairing(mu, basis.elements[j]) -
                                      pairing(nu, basis.elements[j])));
    return s.value();
}

// dhat = sum_j c_j <mu - nu, f_j>^2; since sum_j c_j <= 1, d^2 <= dhat by
// Cauchy-Schwarz.
inline double dhat(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                   const PolynomialBasis& basis, const WeightSequence& weights) {
    if (weights.size() != basis.size())
        throw UsageError("weight sequence does not match basis");
    CompensatedSum s;
    for (std::size_t j = 0; j < basis.size(); ++j) {
        const double gap = pairing(mu, basis.elements[j]) - pairing(nu, basis.elements[j]);
        s.add(weights.c[j] * gap * gap);
    }
    return s.value();
}

}  // namespace mfrs
