#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mfrs/control.hpp"

using namespace mfrs;

namespace {

// Coefficients are v-free except for the running cost, which the caller picks.
ModelSpec bare_model(Coefficient f, Box A, double bv = 0.0) {
    ModelSpec m;
    m.Q = GeneratorMatrix{{{0.0}}};
    m.A = std::move(A);
    const double bvc = bv;
    m.b = [bvc](double, double, const std::vector<double>&, const std::vector<double>& v, int) {
        return v.empty() ? 0.0 : bvc * v[0];
    };
    m.sigma = [](double, double, const std::vector<double>&, const std::vector<double>&, int) {
        return 0.0;
    };
    m.lambda = [](double, double, const std::vector<double>&, const std::vector<double>&, int) {
        return 0.0;
    };
    m.f = std::move(f);
    m.h = [](double, double, const std::vector<double>&, int) { return 0.0; };
    m.drift_vcoef = bv;
    return m;
}

}  // namespace

TEST_CASE("feedback control representations evaluate and clamp", "[control]") {
    SECTION("constant per regime") {
        auto c = FeedbackControl::constant(Box{{-1.0}, {1.0}}, {{0.3}, {5.0}});
        CHECK(c(0.0, {}, 0)[0] == 0.3);
        CHECK(c(0.0, {}, 1)[0] == 1.0);  // clamped into the box
        CHECK_THROWS_AS(c(0.0, {}, 2), UsageError);
    }
    SECTION("piecewise in time") {
        auto c = FeedbackControl::piecewise_time(Box{{-1.0}, {1.0}}, {0.0, 0.5},
                                                 {{{0.1}}, {{-0.2}}});
        CHECK(c(0.25, {}, 0)[0] == 0.1);
        CHECK(c(0.5, {}, 0)[0] == -0.2);
        CHECK(c(0.75, {}, 0)[0] == -0.2);
        CHECK(c(-1.0, {}, 0)[0] == 0.1);  // before the first knot: first segment
    }
    SECTION("affine in features") {
        auto c = FeedbackControl::linear_in_features(Box{{-0.5}, {0.5}}, 1, {{{0.1, 2.0}}});
        CHECK(c(0.0, {0.1}, 0)[0] == Catch::Approx(0.3).epsilon(1e-15));
        CHECK(c(0.0, {3.0}, 0)[0] == 0.5);  // clamped
    }
    SECTION("tabular in time, regime, and mean bin") {
        auto c = FeedbackControl::tabular(
            Box{{-1.0}, {1.0}}, {0.0, 0.5}, {0.0},
            {{{{0.1}, {0.2}}, {{0.3}, {0.4}}}, {{{0.5}, {0.6}}, {{0.7}, {0.8}}}});
        CHECK(c(0.2, {-1.0}, 0)[0] == 0.1);
        CHECK(c(0.2, {1.0}, 0)[0] == 0.2);
        CHECK(c(0.2, {1.0}, 1)[0] == 0.4);
        CHECK(c(0.9, {-1.0}, 1)[0] == 0.7);
    }
}

TEST_CASE("feedback control JSON round trip", "[control]") {
    std::vector<FeedbackControl> cases;
    cases.push_back(FeedbackControl::constant(Box{{-1.0}, {1.0}}, {{0.3}, {-0.4}}));
    cases.push_back(
        FeedbackControl::piecewise_time(Box{{-1.0}, {1.0}}, {0.0, 0.5}, {{{0.1}}, {{-0.2}}}));
    cases.push_back(
        FeedbackControl::linear_in_features(Box{{-2.0}, {2.0}}, 2, {{{0.1, 0.5, -0.25}}}));
    cases.push_back(FeedbackControl::tabular(
        Box{{-1.0}, {1.0}}, {0.0, 0.5}, {0.0},
        {{{{0.1}, {0.2}}, {{0.3}, {0.4}}}, {{{0.5}, {0.6}}, {{0.7}, {0.8}}}}));
    for (const auto& c : cases) {
        const auto j = c.to_json();
        const auto back = FeedbackControl::from_json(j);
        CHECK(back.to_json() == j);
        for (double t : {0.0, 0.4, 0.9})
            for (double m1 : {-0.7, 0.6})
                for (int i = 0; i < c.regimes(); ++i)
                    CHECK(back(t, {m1, 0.2}, i) == c(t, {m1, 0.2}, i));
    }
    auto j = cases[0].to_json();
    j["kind"] = "mystery";
    CHECK_THROWS_AS(FeedbackControl::from_json(j), ConfigError);
}

TEST_CASE("generator application on polynomials", "[control]") {
    const Polynomial x2 = Polynomial::monomial(2);
    SECTION("pure diffusion with unit drift: L x^2 = 2x + 1") {
        auto out = apply_generator(x2, Polynomial::constant(1.0), Polynomial::constant(1.0),
                                   Polynomial{}, {});
        CHECK(out == Polynomial({1.0, 2.0}));
    }
    SECTION("pure unit-rate jumps with unit size: L x^2 = 2x + 1") {
        auto g = JumpLaw::point_mass(1.0);
        auto out = apply_generator(x2, Polynomial{}, Polynomial{}, Polynomial::constant(1.0),
                                   g.scaled_moments(2));
        CHECK(out == Polynomial({1.0, 2.0}));
    }
    SECTION("all three pieces superpose") {
        auto g = JumpLaw::point_mass(1.0);
        auto out = apply_generator(x2, Polynomial::constant(1.0), Polynomial::constant(1.0),
                                   Polynomial::constant(1.0), g.scaled_moments(2));
        CHECK(out == Polynomial({2.0, 4.0}));
    }
    SECTION("state-dependent drift stays polynomial") {
        // b(x) = -x on u = x^2 gives -2x^2; sigma = 0
        auto out = apply_generator(x2, Polynomial({0.0, -1.0}), Polynomial{}, Polynomial{}, {});
        CHECK(out == Polynomial({0.0, 0.0, -2.0}));
    }
}

TEST_CASE("pre-Hamiltonian pairs the generator against the measure", "[control]") {
    // f = v^2, v-free unit drift, Dm = x: H^v = -v^2 - <mu, 1> = -v^2 - 1
    auto m = bare_model(
        [](double, double, const std::vector<double>&, const std::vector<double>& v, int) {
            return v[0] * v[0];
        },
        Box{{-1.0}, {1.0}});
    m.b = [](double, double, const std::vector<double>&, const std::vector<double>&, int) {
        return 1.0;
    };
    const auto mu = DiscreteMeasure::empirical({0.2, -0.4, 1.0});
    const Polynomial Dm = Polynomial::monomial(1);
    CHECK(pre_hamiltonian(m, 0.0, mu, 0, {0.5}, Dm) == Catch::Approx(-1.25).epsilon(1e-14));
    CHECK(pre_hamiltonian(m, 0.0, mu, 0, {0.0}, Dm) == Catch::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("Hamiltonian supremum: quadratic running cost on [0,1]", "[control]") {
    // f = v^2 - v and no v in the dynamics: sup_v -(v^2 - v) = 1/4 at v = 1/2
    auto f = [](double, double, const std::vector<double>&, const std::vector<double>& v, int) {
        return v[0] * v[0] - v[0];
    };
    const auto mu = DiscreteMeasure::point(0.3);
    const Polynomial Dm = Polynomial::monomial(1);

    SECTION("grid plus golden-section") {
        auto m = bare_model(f, Box{{0.0}, {1.0}});
        auto res = hamiltonian_sup(m, 0.0, mu, 0, Dm);
        CHECK(res.value == Catch::Approx(0.25).margin(1e-10));
        CHECK(res.argmax[0] == Catch::Approx(0.5).margin(1e-6));
    }
    SECTION("closed form for the concave-quadratic flag") {
        auto m = bare_model(f, Box{{0.0}, {1.0}});
        m.concave_quadratic = true;
        m.f_v_coeffs = [](double, const std::vector<double>&, int) {
            return std::array<double, 2>{1.0, -1.0};
        };
        auto res = hamiltonian_sup(m, 0.0, mu, 0, Dm);
        CHECK(res.value == Catch::Approx(0.25).epsilon(1e-14));
        CHECK(res.argmax[0] == Catch::Approx(0.5).epsilon(1e-14));
    }
    SECTION("clamped optimum lands on the box edge") {
        auto m = bare_model(f, Box{{0.6}, {1.0}});
        auto res = hamiltonian_sup(m, 0.0, mu, 0, Dm);
        CHECK(res.argmax[0] == Catch::Approx(0.6).margin(1e-6));
        CHECK(res.value == Catch::Approx(-(0.36 - 0.6)).margin(1e-9));
    }
    SECTION("drift coupling shifts the optimum") {
        // b = v, f = v^2: H^v = -v^2 - v <mu, Dm'> so v* = -<mu,1>/2 = -1/2,
        // clamped to 0 on [0,1]; with box [-1,1] it is interior.
        auto m = bare_model(
            [](double, double, const std::vector<double>&, const std::vector<double>& v, int) {
                return v[0] * v[0];
            },
            Box{{-1.0}, {1.0}}, 1.0);
        auto res = hamiltonian_sup(m, 0.0, mu, 0, Dm);
        CHECK(res.argmax[0] == Catch::Approx(-0.5).margin(1e-6));
        CHECK(res.value == Catch::Approx(0.25).margin(1e-9));
    }
}

TEST_CASE("semiconcavity probe recovers the quadratic modulus", "[control]") {
    // f = v^2 on A = [0,1]: H^v = -v^2 and the probe minimum is exactly 1
    auto m = bare_model(
        [](double, double, const std::vector<double>&, const std::vector<double>& v, int) {
            return v[0] * v[0];
        },
        Box{{0.0}, {1.0}});
    const auto mu = DiscreteMeasure::point(0.0);
    auto rep = concavity_check(m, 0.0, mu, 0, Polynomial::monomial(1), 300, 11);
    CHECK(rep.pairs == 300);
    CHECK(rep.lambda_hat == Catch::Approx(1.0).margin(1e-5));
    Box vec{{0.0, 0.0}, {1.0, 1.0}};
    auto mv = bare_model(
        [](double, double, const std::vector<double>&, const std::vector<double>& v, int) {
            return v[0] * v[0];
        },
        vec);
    CHECK_THROWS_AS(concavity_check(mv, 0.0, mu, 0, Polynomial::monomial(1)), UsageError);
}

TEST_CASE("cross-entropy search on a deterministic objective", "[control]") {
    const auto init = FeedbackControl::constant(Box{{-1.0}, {1.0}}, {{0.9}});
    auto cost = [](const FeedbackControl& c) {
        const double p = c.params()[0];
        return (p - 0.3) * (p - 0.3) + 1.0;
    };
    CemConfig cc;
    cc.population = 32;
    cc.generations = 20;
    cc.seed = 5;
    auto res = optimize_control(init, cost, cc);
    CHECK(res.best_cost == Catch::Approx(1.0).margin(1e-3));
    CHECK(res.control.params()[0] == Catch::Approx(0.3).margin(0.05));
    CHECK(res.evaluations == 1 + 32 * 20);
    REQUIRE(res.best_history.size() == 20);
    for (std::size_t g = 1; g < res.best_history.size(); ++g)
        CHECK(res.best_history[g] <= res.best_history[g - 1]);

    SECTION("budget exhaustion raises") {
        CemConfig tight = cc;
        tight.budget_seconds = 0.0;
        CHECK_THROWS_AS(optimize_control(init, cost, tight), BudgetExceeded);
    }
    SECTION("thread count does not change the trajectory") {
        CemConfig two = cc;
        two.threads = 2;
        auto res2 = optimize_control(init, cost, two);
        CHECK(res2.best_cost == res.best_cost);
        CHECK(res2.control.params() == res.control.params());
    }
}
