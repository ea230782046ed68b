#pragma once

// Shared plumbing: the error taxonomy, compensated accumulation, and the
// deterministic parallel partitioner used by every replicated estimator.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mfrs {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NegativeRate : Error { using Error::Error; };
struct RowSumViolation : Error { using Error::Error; };
struct OutOfHorizon : Error { using Error::Error; };
struct SameStatePair : Error { using Error::Error; };
struct DegreeTooLarge : Error { using Error::Error; };
struct DivergentJumpMoment : Error { using Error::Error; };
struct UnsupportedFamily : Error { using Error::Error; };
struct UnsupportedJumpFamily : Error { using Error::Error; };
struct NonFiniteState : Error { using Error::Error; };
struct InsufficientReplications : Error { using Error::Error; };
struct BudgetExceeded : Error { using Error::Error; };
struct NonPositiveGap : Error { using Error::Error; };
struct InsufficientSignal : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct UsageError : Error { using Error::Error; };

// Neumaier-compensated accumulator. Reductions over replications always run
// in replication index order, so reported means do not depend on the thread
// count.
class CompensatedSum {
  public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    [[nodiscard]] double value() const { return sum_ + comp_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_total(const std::vector<double>& xs) {
    CompensatedSum s;
    for (double x : xs) s.add(x);
    return s.value();
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

inline MeanSe mean_and_se(const std::vector<double>& xs) {
    if (xs.size() < 2)
        throw InsufficientReplications("mean_and_se requires at least 2 samples");
    const double n = static_cast<double>(xs.size());
    const double mean = compensated_total(xs) / n;
    CompensatedSum sq;
    for (double x : xs) sq.add((x - mean) * (x - mean));
    const double var = sq.value() / (n - 1.0);
    return {mean, std::sqrt(var / n), xs.size()};
}

// Runs body(i) for i in [0, n). Each index owns its output slot, so the
// partition never changes results; it only changes wall time.
inline void parallel_for(std::size_t n, unsigned threads,
                         const std::function<void(std::size_t)>& body) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    const unsigned workers = std::min<std::size_t>(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) body(i);
        });
    }
    for (auto& th : pool) th.join();
}

inline void check_finite(double x, const char* what) {
    if (!std::isfinite(x)) throw NonFiniteState(std::string(what) + " is not finite");
}

}  // namespace mfrs
