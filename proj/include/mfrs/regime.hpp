#pragma once

// Finite-state regime chain: generator validation, exponential-holding-time
// path sampling, occupation/counting functionals, the compensated counting
// martingale, and e^{Qt} via uniformization.

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "mfrs/common.hpp"
#include "mfrs/rng.hpp"

namespace mfrs {

struct GeneratorMatrix {
    std::vector<std::vector<double>> q;
    [[nodiscard]] int size() const { return static_cast<int>(q.size()); }
};

inline void validate_generator(const GeneratorMatrix& g, double tol = 1e-12) {
    const int n = g.size();
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(g.q[i].size()) != n)
            throw RowSumViolation("generator row " + std::to_string(i) + " has wrong length");
        double row = 0.0;
        for (int j = 0; j < n; ++j) {
            if (i != j && g.q[i][j] < 0.0)
                throw NegativeRate("negative off-diagonal rate at (" + std::to_string(i) +
                                   "," + std::to_string(j) + ")");
            row += g.q[i][j];
        }
        if (std::abs(row) > tol)
            throw RowSumViolation("generator row " + std::to_string(i) +
                                  " sums to " + std::to_string(row));
    }
}

struct RegimeJump {
    double time;
    int from;
    int to;
};

struct RegimePath {
    double t0 = 0.0;
    double T = 1.0;
    int initial = 0;
    std::vector<RegimeJump> jumps;  // strictly increasing times in (t0, T]
};

inline RegimePath sample_path(const GeneratorMatrix& g, int i0, double t0, double T,
                              std::uint64_t seed) {
    validate_generator(g);
    if (i0 < 0 || i0 >= g.size()) throw UsageError("initial regime out of range");
    if (!(t0 < T)) throw OutOfHorizon("sample_path requires t0 < T");
    RegimePath path{t0, T, i0, {}};
    RngStream rng(seed);
    double t = t0;
    int state = i0;
    while (true) {
        const double rate = -g.q[state][state];
        if (rate <= 0.0) break;  // absorbing
        t += rng.expo(rate);
        if (t > T) break;
        // next state proportional to off-diagonal rates
        double u = rng.unif() * rate;
        int next = state;
        for (int j = 0; j < g.size(); ++j) {
            if (j == state) continue;
            u -= g.q[state][j];
            if (u <= 0.0) {
                next = j;
                break;
            }
        }
        if (next == state) {  // numerical edge of the partition
            for (int j = g.size() - 1; j >= 0; --j)
                if (j != state && g.q[state][j] > 0.0) {
                    next = j;
                    break;
                }
        }
        path.jumps.push_back({t, state, next});
        state = next;
    }
    return path;
}

// Returns (left limit, right value) at time t; they differ exactly at jump
// times.
inline std::pair<int, int> state_at(const RegimePath& p, double t) {
    if (t < p.t0 || t > p.T) throw OutOfHorizon("state_at: time outside [t0, T]");
    int left = p.initial;
    int right = p.initial;
    for (const auto& j : p.jumps) {
        if (j.time < t) {
            left = j.to;
            right = j.to;
        } else if (j.time == t) {
            right = j.to;
        } else {
            break;
        }
    }
    return {left, right};
}

inline double occupation_time(const RegimePath& p, int i, double t) {
    if (t < p.t0 || t > p.T) throw OutOfHorizon("occupation_time: time outside [t0, T]");
    double acc = 0.0;
    double seg_start = p.t0;
    int state = p.initial;
    for (const auto& j : p.jumps) {
        const double seg_end = std::min(j.time, t);
        if (seg_end > seg_start && state == i) acc += seg_end - seg_start;
        if (j.time >= t) return acc;
        seg_start = j.time;
        state = j.to;
    }
    if (t > seg_start && state == i) acc += t - seg_start;
    return acc;
}

inline int jump_count(const RegimePath& p, int i0, int j0, double t) {
    int n = 0;
    for (const auto& j : p.jumps)
        if (j.time <= t && j.from == i0 && j.to == j0) ++n;
    return n;
}

// Compensated counting martingale M_{i0 j0}(t) = N_{i0 j0}(t) - q_{i0 j0} *
// occupation(i0, t).
inline double counting_martingale(const RegimePath& p, const GeneratorMatrix& g, int i0,
                                  int j0, double t) {
    if (i0 == j0) throw SameStatePair("counting_martingale requires i0 != j0");
    if (i0 < 0 || i0 >= g.size() || j0 < 0 || j0 >= g.size())
        throw UsageError("regime index out of range");
    return static_cast<double>(jump_count(p, i0, j0, t)) -
           g.q[i0][j0] * occupation_time(p, i0, t);
}

// e^{Qt} by uniformization: P = sum_k Pois(k; Lambda t) (I + Q/Lambda)^k,
// truncated when the remaining Poisson tail mass is below 1e-12.
inline std::vector<std::vector<double>> transition_matrix(const GeneratorMatrix& g, double t) {
    validate_generator(g);
    if (t < 0.0) throw OutOfHorizon("transition_matrix requires t >= 0");
    const int n = g.size();
    std::vector<std::vector<double>> ident(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) ident[i][i] = 1.0;
    double lam = 0.0;
    for (int i = 0; i < n; ++i) lam = std::max(lam, -g.q[i][i]);
    if (lam <= 0.0 || t == 0.0) return ident;

    std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m[i][j] = ident[i][j] + g.q[i][j] / lam;

    const double a = lam * t;
    double weight = std::exp(-a);  // Pois(0)
    double cumulative = weight;
    std::vector<std::vector<double>> power = ident;
    std::vector<std::vector<double>> out(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) out[i][i] = weight;

    for (int k = 1; k < 100000; ++k) {
        // power <- power * m
        std::vector<std::vector<double>> next(n, std::vector<double>(n, 0.0));
        for (int i = 0; i < n; ++i)
            for (int l = 0; l < n; ++l) {
                const double p = power[i][l];
                if (p == 0.0) continue;
                for (int j = 0; j < n; ++j) next[i][j] += p * m[l][j];
            }
        power = std::move(next);
        weight *= a / static_cast<double>(k);
        cumulative += weight;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) out[i][j] += weight * power[i][j];
        if (1.0 - cumulative < 1e-12 && k > a) break;
    }
    return out;
}

}  // namespace mfrs
