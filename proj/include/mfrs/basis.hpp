#pragma once

// The closed polynomial family Theta and its summable weight sequence.
//
// build_basis starts from the monomials x^1..x^D and closes under (i) all
// derivatives and (ii) the jump image g -> sum_{k=1}^{deg g} m_k g^{(k)}.
// Both operations strictly reduce degree, so the closure terminates; elements
// are deduplicated by exact coefficient equality and enumerated in discovery
// order (that order is part of the weight contract c_j <= 2^{-j}).
//
// make_weights certifies sup_{M_b} |<mu, f_j>| <= B_j from |x|^k <= k!
// e^{delta |x|} / delta^k and <mu, e^{delta|x|}> <= e^delta b, normalizes
// c_j = 2^{-j} / max(1, B_j^2 J), then lowers parents below children so that
// the closure-monotonicity invariant holds.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

#include "mfrs/common.hpp"
#include "mfrs/polynomial.hpp"

namespace mfrs {

struct PolynomialBasis {
    std::vector<Polynomial> elements;                 // f_1..f_J at indices 0..J-1
    std::vector<std::vector<int>> derivative_index;   // [j][k-1] -> index of f_j^(k), -1 if zero
    std::vector<int> jump_image_index;                // [j] -> index of jump image, -1 if zero
    std::vector<double> scaled_moments;               // m_1..m_D of the jump law used
    int max_degree = 0;

    [[nodiscard]] std::size_t size() const { return elements.size(); }

    // Indices of all closure children of element j (derivatives and jump
    // image), i.e. every f_i obtained from f_j by one closure operation.
    [[nodiscard]] std::vector<int> children(std::size_t j) const {
        std::vector<int> out;
        for (int idx : derivative_index[j])
            if (idx >= 0) out.push_back(idx);
        if (jump_image_index[j] >= 0) out.push_back(jump_image_index[j]);
        return out;
    }
};

inline PolynomialBasis build_basis(int max_degree, const std::vector<double>& scaled_moments,
                                   int degree_cap = 12) {
    if (max_degree < 1) throw UsageError("build_basis requires max_degree >= 1");
    if (max_degree > degree_cap)
        throw DegreeTooLarge("max_degree " + std::to_string(max_degree) +
                             " exceeds cap " + std::to_string(degree_cap));
    PolynomialBasis basis;
    basis.max_degree = max_degree;
    basis.scaled_moments = scaled_moments;

    std::map<std::vector<double>, int> seen;
    auto add = [&](const Polynomial& p) -> int {
        if (p.is_zero()) return -1;
        auto it = seen.find(p.coefficients());
        if (it != seen.end()) return it->second;
        const int idx = static_cast<int>(basis.elements.size());
        basis.elements.push_back(p);
        seen.emplace(p.coefficients(), idx);
        return idx;
    };

    for (int k = 1; k <= max_degree; ++k) add(Polynomial::monomial(k));

    // Closure by worklist: elements.size() grows while we scan, which mirrors
    // breadth-first discovery order.
    for (std::size_t j = 0; j < basis.elements.size(); ++j) {
        const Polynomial g = basis.elements[j];
        std::vector<int> didx;
        Polynomial d = g;
        for (int k = 1; k <= g.degree(); ++k) {
            d = d.derivative();
            didx.push_back(add(d));
        }
        basis.derivative_index.push_back(std::move(didx));
        basis.jump_image_index.push_back(add(jump_image(g, scaled_moments)));
    }
    return basis;
}

struct WeightSequence {
    std::vector<double> c;
    double b = 1.0;
    double delta = 1.0;
    std::vector<double> certified_bounds;  // B_j

    [[nodiscard]] std::size_t size() const { return c.size(); }
};

inline WeightSequence make_weights(const PolynomialBasis& basis, double b, double delta) {
    if (b < 1.0) throw UsageError("make_weights requires b >= 1 (M_b nonempty)");
    if (delta <= 0.0) throw UsageError("make_weights requires delta > 0");
    const std::size_t n = basis.size();
    WeightSequence w;
    w.b = b;
    w.delta = delta;
    w.c.resize(n);
    w.certified_bounds.resize(n);

    const double eb = std::exp(delta) * b;
    std::vector<double> factorial{1.0};
    for (std::size_t j = 0; j < n; ++j) {
        const auto& coefs = basis.elements[j].coefficients();
        double bound = 0.0;
        double dpow = 1.0;  // delta^k
        for (std::size_t k = 0; k < coefs.size(); ++k) {
            if (k >= factorial.size())
                factorial.push_back(factorial.back() * static_cast<double>(k));
            bound += std::abs(coefs[k]) * factorial[k] * eb / dpow;
            dpow *= delta;
        }
        w.certified_bounds[j] = bound;
    }

    double two_pow = 0.5;  // 2^{-(j+1)} for 0-based j
    for (std::size_t j = 0; j < n; ++j) {
        const double bj = w.certified_bounds[j];
        w.c[j] = two_pow / std::max(1.0, bj * bj * static_cast<double>(n));
        two_pow *= 0.5;
    }

    // Closure monotonicity: each parent weight must not exceed any child
    // weight. Children have strictly smaller degree, so one pass in
    // increasing degree order settles transitive constraints.
    std::vector<std::size_t> order(n);
    for (std::size_t j = 0; j < n; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t bb) {
        return basis.elements[a].degree() < basis.elements[bb].degree();
    });
    for (std::size_t pos = 0; pos < n; ++pos) {
        const std::size_t j = order[pos];
        for (int child : basis.children(j))
            w.c[j] = std::min(w.c[j], w.c[static_cast<std::size_t>(child)]);
    }
    return w;
}

}  // namespace mfrs
