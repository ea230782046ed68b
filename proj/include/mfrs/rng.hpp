#pragma once

// Deterministic stream-keyed randomness. Every consumer (regime path r,
// particle k of replication r, optimizer generation g, ...) derives its own
// stream from (base seed, key path), so results are independent of thread
// scheduling and two runs with the same seed are bit-identical.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mfrs {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(base);
    for (std::uint64_t p : path) s = splitmix64(s ^ splitmix64(p));
    return s;
}

// Stream key tags. Fixed constants so that ladder layouts are stable across
// refactors (they are part of the reproducibility contract).
namespace stream {
inline constexpr std::uint64_t regime = 0x01;
inline constexpr std::uint64_t particle = 0x02;
inline constexpr std::uint64_t init = 0x03;
inline constexpr std::uint64_t optimizer = 0x04;
inline constexpr std::uint64_t scratch = 0x05;
}  // namespace stream

class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : eng_(seed) {}

    double gauss() { return normal_(eng_); }
    double unif() { return unif_(eng_); }
    double expo(double rate) {
        return std::exponential_distribution<double>(rate)(eng_);
    }
    int poisson(double mean) {
        return std::poisson_distribution<int>(mean)(eng_);
    }
    std::mt19937_64& engine() { return eng_; }

  private:
    std::mt19937_64 eng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

inline RngStream make_stream(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    return RngStream(derive_seed(base, path));
}

}  // namespace mfrs
