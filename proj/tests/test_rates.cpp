#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mfrs/rates.hpp"
#include "mfrs/rng.hpp"

using namespace mfrs;

TEST_CASE("exact power law is recovered to machine precision", "[rates]") {
    const std::vector<double> Ns{8.0, 16.0, 32.0, 64.0, 128.0};
    std::vector<double> means, ses(Ns.size(), 0.0);
    for (double N : Ns) means.push_back(4.0 / N);
    auto fit = fit_rate(Ns, means, ses);
    CHECK(fit.slope == Catch::Approx(-1.0).epsilon(1e-12));
    CHECK(fit.intercept == Catch::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(fit.half_width == 0.0);
    CHECK(fit.n == 5);
    apply_target(fit, -1.2, -0.8);
    CHECK(fit.pass);
    apply_target(fit, -0.7, -0.3);
    CHECK_FALSE(fit.pass);
}

TEST_CASE("noisy half-power law lands inside the stated uncertainty", "[rates]") {
    const std::vector<double> Ns{8.0, 16.0, 32.0, 64.0, 128.0, 256.0};
    RngStream rng(404);
    std::vector<double> means, ses;
    for (double N : Ns) {
        const double clean = 2.0 / std::sqrt(N);
        const double rel = 0.03;
        means.push_back(clean * std::exp(rel * rng.gauss()));
        ses.push_back(rel * clean);
    }
    auto fit = fit_rate(Ns, means, ses);
    CHECK(std::abs(fit.slope + 0.5) < 3.0 * fit.half_width + 1e-12);
    CHECK(fit.half_width > 0.0);
    CHECK(fit.half_width < 0.1);
}

TEST_CASE("degenerate inputs raise typed errors", "[rates]") {
    CHECK_THROWS_AS(fit_rate({8.0, 16.0}, {0.5, -0.1}, {0.0, 0.0}), NonPositiveGap);
    CHECK_THROWS_AS(fit_rate({8.0, 16.0}, {0.5, 0.0}, {0.0, 0.0}), NonPositiveGap);
    CHECK_THROWS_AS(fit_rate({8.0}, {0.5}, {0.0}), UsageError);
    CHECK_THROWS_AS(fit_rate({8.0, 8.0}, {0.5, 0.4}, {0.0, 0.0}), UsageError);
    CHECK_THROWS_AS(fit_rate({8.0, -16.0}, {0.5, 0.4}, {0.0, 0.0}), UsageError);
    CHECK_THROWS_AS(fit_rate({8.0, 16.0}, {0.5}, {0.0}), UsageError);
}

TEST_CASE("signal guard separates resolved from unresolved gaps", "[rates]") {
    CHECK_NOTHROW(require_signal({0.5, 0.2}, {0.1, 0.05}, 3.0));
    CHECK_THROWS_AS(require_signal({0.5, 0.2}, {0.1, 0.07}, 3.0), InsufficientSignal);
    CHECK_THROWS_AS(require_signal({0.0}, {0.0}, 3.0), InsufficientSignal);
    CHECK_THROWS_AS(require_signal({0.5}, {0.1, 0.2}, 3.0), UsageError);
}
