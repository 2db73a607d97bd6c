#include "whittle/random.hpp"

#include <cmath>
#include <numbers>

namespace whittle {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed) : key_(mix64(seed + kGolden)) {}

RandomStream RandomStream::split(std::uint64_t stream_id) const {
  return RandomStream(mix64(key_ ^ mix64(stream_id * kGolden + 0x632BE59BD9B4E019ULL)), true);
}

std::uint64_t RandomStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double RandomStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Vector RandomStream::normal_vector(Index n) {
  Vector out(n);
  for (Index i = 0; i < n; ++i) out(i) = normal();
  return out;
}

Matrix RandomStream::normal_matrix(Index rows, Index cols) {
  Matrix out(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) out(i, j) = normal();
  return out;
}

Vector RandomStream::rademacher_vector(Index n) {
  Vector out(n);
  for (Index i = 0; i < n; ++i) out(i) = rademacher();
  return out;
}

}  // namespace whittle
