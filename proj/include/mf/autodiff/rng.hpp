#pragma once

#include <cstddef>
#include <cstdint>

namespace mf {

/// Counter-based generator: each draw hashes (key, counter). split() derives an
/// independent stream, so results never depend on call order across streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  Rng split(std::uint64_t tag) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Normal resampled until within +-2 std.
  double truncated_normal(double std);
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace mf
