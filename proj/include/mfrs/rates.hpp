#pragma once

// Empirical convergence-rate fitting: ordinary least squares of log(gap)
// against log(N), with a delta-method half-width propagated from the per-N
// standard errors, plus the positivity and signal guards shared by the
// experiment drivers.

#include <cmath>
#include <string>
#include <vector>

#include "mfrs/common.hpp"

namespace mfrs {

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double half_width = 0.0;  // 1-sigma delta-method uncertainty of the slope
    int n = 0;
    double target_lo = 0.0, target_hi = 0.0;
    bool has_target = false;
    bool pass = false;
};

// Throws InsufficientSignal when a gap mean is not resolved against its
// standard error at the given factor.
inline void require_signal(const std::vector<double>& means, const std::vector<double>& ses,
                           double factor = 3.0, const std::string& what = "gap") {
    if (means.size() != ses.size()) throw UsageError("means and ses must align");
    for (std::size_t i = 0; i < means.size(); ++i)
        if (!(means[i] > factor * ses[i]))
            throw InsufficientSignal(what + " mean " + std::to_string(means[i]) +
                                     " is within " + std::to_string(factor) +
                                     " standard errors (" + std::to_string(ses[i]) + ")");
}

inline RateFit fit_rate(const std::vector<double>& Ns, const std::vector<double>& means,
                        const std::vector<double>& ses) {
    if (Ns.size() != means.size() || Ns.size() != ses.size())
        throw UsageError("rate fit needs aligned N, mean, and se vectors");
    if (Ns.size() < 2) throw UsageError("rate fit needs at least two points");
    for (double N : Ns)
        if (!(N > 0.0)) throw UsageError("rate fit needs positive N");
    for (double g : means)
        if (!(g > 0.0))
            throw NonPositiveGap("cannot fit a log-log rate through a non-positive gap");

    const auto n = static_cast<double>(Ns.size());
    std::vector<double> x(Ns.size()), y(Ns.size());
    for (std::size_t i = 0; i < Ns.size(); ++i) {
        x[i] = std::log(Ns[i]);
        y[i] = std::log(means[i]);
    }
    CompensatedSum sx, sy;
    for (double v : x) sx.add(v);
    for (double v : y) sy.add(v);
    const double xbar = sx.value() / n, ybar = sy.value() / n;
    CompensatedSum sxx, sxy;
    for (std::size_t i = 0; i < Ns.size(); ++i) {
        sxx.add((x[i] - xbar) * (x[i] - xbar));
        sxy.add((x[i] - xbar) * (y[i] - ybar));
    }
    if (!(sxx.value() > 0.0)) throw UsageError("rate fit needs at least two distinct N");

    RateFit fit;
    fit.n = static_cast<int>(Ns.size());
    fit.slope = sxy.value() / sxx.value();
    fit.intercept = ybar - fit.slope * xbar;
    // slope = sum a_i y_i with a_i = (x_i - xbar) / Sxx, and
    // var(y_i) = var(log mean_i) ~ (se_i / mean_i)^2
    CompensatedSum var;
    for (std::size_t i = 0; i < Ns.size(); ++i) {
        const double a = (x[i] - xbar) / sxx.value();
        const double r = ses[i] / means[i];
        var.add(a * a * r * r);
    }
    fit.half_width = std::sqrt(var.value());
    return fit;
}

inline RateFit& apply_target(RateFit& fit, double lo, double hi) {
    fit.target_lo = lo;
    fit.target_hi = hi;
    fit.has_target = true;
    fit.pass = fit.slope >= lo && fit.slope <= hi;
    return fit;
}

}  // namespace mfrs
