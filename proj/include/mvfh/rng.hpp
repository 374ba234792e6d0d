#pragma once

#include <cstdint>
#include <random>

namespace mvfh {

namespace detail {

// splitmix64; used to decorrelate user seeds and to derive substream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// Seeded random stream. Substreams derived from (seed, id) are independent of
// execution order, which keeps parallel replicates / LOO refits deterministic.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), gen_(detail::splitmix64(seed)) {}

  RngStream substream(std::uint64_t id) const {
    return RngStream(detail::splitmix64(seed_ ^ detail::splitmix64(id + 0x632be59bd9b4e019ULL)));
  }
  RngStream substream(std::uint64_t a, std::uint64_t b) const {
    return substream(a).substream(b);
  }

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return gen_; }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double gamma(double shape, double scale) {
    return std::gamma_distribution<double>(shape, scale)(gen_);
  }
  double chi_squared(double df) { return gamma(0.5 * df, 2.0); }
  // Uniform integer on [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(gen_);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace mvfh
