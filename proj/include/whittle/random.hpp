#pragma once

#include "whittle/types.hpp"

#include <cstdint>

namespace whittle {

/// Counter-based generator: draw k of a stream is a pure function of
/// (key, k), built from the SplitMix64 finalizer. Normals use Box-Muller, so
/// identical seeds give bitwise-identical draws on every platform.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0);

  /// Independent child stream; the parent is not advanced.
  RandomStream split(std::uint64_t stream_id) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double normal();
  double rademacher() { return (next_u64() >> 63) ? 1.0 : -1.0; }

  Vector normal_vector(Index n);
  Matrix normal_matrix(Index rows, Index cols);
  Vector rademacher_vector(Index n);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  RandomStream(std::uint64_t key, bool) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace whittle
