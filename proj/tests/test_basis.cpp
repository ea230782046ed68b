#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "mfrs/basis.hpp"
#include "mfrs/measure.hpp"
#include "mfrs/rng.hpp"

using namespace mfrs;

TEST_CASE("hand closure for D=1", "[basis]") {
    // Monomial x; its derivative adds the constant 1; nothing else appears
    // when the jump law has no mass.
    auto basis = build_basis(1, {});
    REQUIRE(basis.size() == 2);
    REQUIRE(basis.elements[0] == Polynomial::monomial(1));
    REQUIRE(basis.elements[1] == Polynomial::constant(1.0));
    REQUIRE(basis.jump_image_index[0] == -1);
    REQUIRE(basis.derivative_index[0][0] == 1);
}

TEST_CASE("hand closure for D=2 under point mass at 1", "[basis]") {
    // m_1 = 1, m_2 = 1/2. Discovery order: x, x^2, 1, 2x, 2, 2x+1.
    auto basis = build_basis(2, {1.0, 0.5});
    REQUIRE(basis.size() == 6);
    REQUIRE(basis.elements[0] == Polynomial::monomial(1));
    REQUIRE(basis.elements[1] == Polynomial::monomial(2));
    REQUIRE(basis.elements[2] == Polynomial::constant(1.0));
    REQUIRE(basis.elements[3] == Polynomial({0.0, 2.0}));
    REQUIRE(basis.elements[4] == Polynomial::constant(2.0));
    REQUIRE(basis.elements[5] == Polynomial({1.0, 2.0}));
    // wiring: x^2 has derivative chain (2x, 2) and jump image 2x+1
    REQUIRE(basis.derivative_index[1] == std::vector<int>{3, 4});
    REQUIRE(basis.jump_image_index[1] == 5);
}

TEST_CASE("centered law closure contains the derivative family", "[basis]") {
    auto basis = build_basis(2, {0.0, 0.0});
    REQUIRE(basis.size() == 5);  // x, x^2, 1, 2x, 2
    std::set<std::vector<double>> coefs;
    for (const auto& e : basis.elements) coefs.insert(e.coefficients());
    REQUIRE(coefs.count({0.0, 1.0}) == 1);
    REQUIRE(coefs.count({0.0, 0.0, 1.0}) == 1);
    REQUIRE(coefs.count({1.0}) == 1);
    REQUIRE(coefs.count({0.0, 2.0}) == 1);
}

TEST_CASE("degree cap", "[basis]") {
    REQUIRE_THROWS_AS(build_basis(13, {}), DegreeTooLarge);
    REQUIRE_NOTHROW(build_basis(13, {}, 14));
}

TEST_CASE("closure is closed and deterministic", "[basis]") {
    const std::vector<double> m{0.7, 0.7 * 0.7 / 2.0, 0.7 * 0.7 * 0.7 / 6.0};
    auto a = build_basis(3, m);
    auto b = build_basis(3, m);
    REQUIRE(a.size() == b.size());
    for (std::size_t j = 0; j < a.size(); ++j) REQUIRE(a.elements[j] == b.elements[j]);

    // Every derivative and jump image of a member resolves inside the family.
    for (std::size_t j = 0; j < a.size(); ++j) {
        Polynomial d = a.elements[j];
        for (int k = 1; k <= a.elements[j].degree(); ++k) {
            d = d.derivative();
            const int idx = a.derivative_index[j][k - 1];
            REQUIRE(idx >= 0);
            REQUIRE(a.elements[idx] == d);
        }
        Polynomial img = jump_image(a.elements[j], m);
        if (img.is_zero()) {
            REQUIRE(a.jump_image_index[j] == -1);
        } else {
            REQUIRE(a.jump_image_index[j] >= 0);
            REQUIRE(a.elements[a.jump_image_index[j]] == img);
        }
    }
}

TEST_CASE("weight invariants across a parameter scan", "[basis]") {
    std::vector<double> m{0.7, 0.245, 0.057166666666666664};
    for (int D : {1, 2, 3, 4, 6, 8}) {
        auto basis = build_basis(D, m);
        for (double b : {1.0, 10.0, 100.0}) {
            for (double delta : {0.5, 1.0, 2.0}) {
                auto w = make_weights(basis, b, delta);
                REQUIRE(w.size() == basis.size());
                double pow2 = 0.5;
                CompensatedSum weighted_bound;
                for (std::size_t j = 0; j < w.size(); ++j) {
                    REQUIRE(w.c[j] > 0.0);
                    REQUIRE(w.c[j] <= pow2 * (1.0 + 1e-15));
                    pow2 *= 0.5;
                    weighted_bound.add(w.c[j] * w.certified_bounds[j] * w.certified_bounds[j]);
                    for (int child : basis.children(j))
                        REQUIRE(w.c[j] <= w.c[static_cast<std::size_t>(child)] * (1.0 + 1e-15));
                }
                REQUIRE(weighted_bound.value() <= 1.0 + 1e-12);
            }
        }
    }
}

TEST_CASE("certified bounds dominate sampled pairings on M_b", "[basis]") {
    auto basis = build_basis(4, {0.5, 0.125});
    const double b = 10.0, delta = 1.0;
    auto w = make_weights(basis, b, delta);
    RngStream rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        DiscreteMeasure mu;
        const int atoms = 1 + static_cast<int>(rng.unif() * 6);
        double total = 0.0;
        for (int a = 0; a < atoms; ++a) {
            mu.x.push_back(-2.0 + 4.0 * rng.unif());
            mu.w.push_back(0.05 + rng.unif());
            total += mu.w.back();
        }
        for (auto& wt : mu.w) wt /= total;
        REQUIRE(exp_moment(mu, delta) <= b);  // sampled inside M_b
        for (std::size_t j = 0; j < basis.size(); ++j)
            REQUIRE(std::abs(pairing(mu, basis.elements[j])) <= w.certified_bounds[j]);
    }
}
