#pragma once

// One-dimensional polynomials with canonical (trimmed, ascending) coefficient
// storage. These are the test functions of the measure metric and of all
// generator calculus, so equality must be exact coefficient equality and all
// structural operations (derivative, jump image) must be closed form.

#include <cstddef>
#include <string>
#include <vector>

#include "mfrs/common.hpp"

namespace mfrs {

class Polynomial {
  public:
    Polynomial() = default;
    explicit Polynomial(std::vector<double> coefs) : c_(std::move(coefs)) { trim(); }

    static Polynomial monomial(int k, double a = 1.0) {
        std::vector<double> c(static_cast<std::size_t>(k) + 1, 0.0);
        c.back() = a;
        return Polynomial(std::move(c));
    }
    static Polynomial constant(double a) { return Polynomial({a}); }

    // Degree of the zero polynomial is -1 by convention.
    [[nodiscard]] int degree() const { return static_cast<int>(c_.size()) - 1; }
    [[nodiscard]] bool is_zero() const { return c_.empty(); }
    [[nodiscard]] const std::vector<double>& coefficients() const { return c_; }
    [[nodiscard]] double coefficient(std::size_t k) const {
        return k < c_.size() ? c_[k] : 0.0;
    }

    [[nodiscard]] double operator()(double x) const {
        double acc = 0.0;
        for (std::size_t i = c_.size(); i-- > 0;) acc = acc * x + c_[i];
        return acc;
    }
    [[nodiscard]] long double eval_ld(long double x) const {
        long double acc = 0.0L;
        for (std::size_t i = c_.size(); i-- > 0;) acc = acc * x + static_cast<long double>(c_[i]);
        return acc;
    }

    [[nodiscard]] Polynomial derivative(int order = 1) const {
        Polynomial g = *this;
        for (int o = 0; o < order && !g.is_zero(); ++o) {
            std::vector<double> d;
            d.reserve(g.c_.size() > 0 ? g.c_.size() - 1 : 0);
            for (std::size_t k = 1; k < g.c_.size(); ++k)
                d.push_back(static_cast<double>(k) * g.c_[k]);
            g = Polynomial(std::move(d));
        }
        return g;
    }

    Polynomial& operator+=(const Polynomial& o) {
        if (o.c_.size() > c_.size()) c_.resize(o.c_.size(), 0.0);
        for (std::size_t k = 0; k < o.c_.size(); ++k) c_[k] += o.c_[k];
        trim();
        return *this;
    }
    Polynomial& operator*=(double a) {
        for (double& x : c_) x *= a;
        trim();
        return *this;
    }
    friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
    friend Polynomial operator*(Polynomial a, double s) { return a *= s; }
    friend Polynomial operator*(double s, Polynomial a) { return a *= s; }

    friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
        if (a.is_zero() || b.is_zero()) return {};
        std::vector<double> p(a.c_.size() + b.c_.size() - 1, 0.0);
        for (std::size_t i = 0; i < a.c_.size(); ++i)
            for (std::size_t j = 0; j < b.c_.size(); ++j) p[i + j] += a.c_[i] * b.c_[j];
        return Polynomial(std::move(p));
    }

    bool operator==(const Polynomial& o) const { return c_ == o.c_; }

    [[nodiscard]] std::string to_string() const {
        if (c_.empty()) return "0";
        std::string s;
        for (std::size_t k = c_.size(); k-- > 0;) {
            if (c_[k] == 0.0) continue;
            if (!s.empty()) s += " + ";
            s += std::to_string(c_[k]);
            if (k >= 1) s += "*x^" + std::to_string(k);
        }
        return s.empty() ? "0" : s;
    }

  private:
    void trim() {
        while (!c_.empty() && c_.back() == 0.0) c_.pop_back();
        for (double& x : c_)
            if (x == 0.0) x = 0.0;  // normalize -0.0 so equality is canonical
    }

    std::vector<double> c_;  // ascending powers, no trailing zeros
};

// Jump image under a law with scaled moments m_k = (1/k!) Integral y^k: the
// Taylor-exact value of Integral (g(x+y) - g(x)) gamma(dy) for polynomial g.
inline Polynomial jump_image(const Polynomial& g, const std::vector<double>& scaled_moments) {
    Polynomial out;
    Polynomial d = g;
    for (int k = 1; k <= g.degree(); ++k) {
        d = d.derivative();
        if (k - 1 < static_cast<int>(scaled_moments.size()))
            out += d * scaled_moments[static_cast<std::size_t>(k - 1)];
    }
    return out;
}

}  // namespace mfrs
