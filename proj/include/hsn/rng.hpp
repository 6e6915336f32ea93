#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace hsn {

/// Seeded random stream. Distributions are computed from raw engine bits so
/// that sequences are reproducible across standard library implementations
/// and the full state round-trips through a string.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent child stream derived from this stream's seed and `stream_id`.
  Rng split(std::uint64_t stream_id) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in (eps, 1 - eps).
  double uniform_open(double eps = 1e-10);
  double normal(double mean = 0.0, double stddev = 1.0);
  /// Standard Gumbel draw -log(-log(u)).
  double gumbel();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  /// Sample an index from unnormalized nonnegative weights.
  std::size_t categorical(const double* weights, std::size_t n);

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  std::uint64_t seed() const { return seed_; }
  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace hsn
