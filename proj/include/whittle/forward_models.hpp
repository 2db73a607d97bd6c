#pragma once

#include "whittle/grid_fem.hpp"
#include "whittle/random.hpp"

#include <optional>
#include <string>
#include <vector>

namespace whittle {

/// Linear parameter-to-observable map F: R^{N_h} -> R^{N_y}.
struct LinearForward {
  LinearMap apply;
  LinearMap apply_transpose;
  Index n_data = 0;
  Index n_params = 0;
  std::string description;
  std::optional<SparseMatrix> matrix;  // explicit form when one exists
  std::vector<std::string> warnings;

  static LinearForward from_matrix(SparseMatrix a, std::string description);
  static LinearForward from_dense(const Matrix& a, std::string description);
};

/// Gaussian noise with diagonal covariance.
struct NoiseModel {
  Vector variance;
  double noise_level = 0.0;

  Vector inverse_variance() const { return variance.cwiseInverse(); }
  /// sqrt(r^T Gamma^{-1} r)
  double weighted_norm(const Vector& r) const { return std::sqrt(r.cwiseAbs2().cwiseQuotient(variance).sum()); }
};

enum class RayGeometry { kCrossWell, kParallel };

RayGeometry parse_geometry(const std::string& name);

/// Uniform pixel image of nx x ny pixels covering the grid's rectangle; pixel
/// (i, j) carries the value of node index j * nx + i.
struct PixelGrid {
  Index nx = 1, ny = 1;
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;

  static PixelGrid from_grid(const Grid& g) { return {g.nx, g.ny, g.x0, g.x1, g.y0, g.y1}; }
};

struct Ray {
  Eigen::Vector2d start;
  Eigen::Vector2d end;
};

/// Exact intersection lengths of a straight segment with every pixel it
/// crosses, as (pixel index, length) pairs.
std::vector<std::pair<Index, double>> trace_ray(const PixelGrid& pixels, const Ray& ray);

/// Cross-well: sources on the left edge, receivers on the right edge, one ray
/// per pair. Parallel: n_sources angles in [0, pi), n_receivers offsets each.
std::vector<Ray> ray_set(const PixelGrid& pixels, Index n_sources, Index n_receivers, RayGeometry geometry);

SparseMatrix tomo_matrix(const PixelGrid& pixels, const std::vector<Ray>& rays, std::vector<std::string>* warnings = nullptr);

LinearForward tomo_operator(const Grid& grid, Index n_sources, Index n_receivers,
                            RayGeometry geometry = RayGeometry::kCrossWell);

/// Heat equation M u' = -K0 u with K0 the Neumann Laplacian stiffness,
/// Crank-Nicolson in time, observed at sensor nodes at the final time.
class HeatModel {
 public:
  HeatModel(const Grid& grid, double final_time, int n_steps, Index sensor_stride = 4);

  const Grid& grid() const { return grid_; }
  const std::vector<Index>& sensors() const { return sensors_; }
  const SparseMatrix& mass() const { return mass_; }
  double dt() const { return dt_; }
  int n_steps() const { return n_steps_; }

  /// One step: (M + dt/2 K0) u+ = (M - dt/2 K0) u.
  Vector step(const Vector& u) const;
  Vector propagate(const Vector& u0) const;
  /// Adjoint of propagate.
  Vector propagate_transpose(const Vector& w) const;

  Vector observe(const Vector& m) const;
  Vector observe_transpose(const Vector& y) const;

  LinearForward as_forward() const;

 private:
  Grid grid_;
  double dt_;
  int n_steps_;
  SparseMatrix mass_;
  SparseMatrix explicit_part_;
  SparseFactorization implicit_factor_;
  std::vector<Index> sensors_;
};

/// Interior nodes (i, j) with i and j both multiples of `stride`.
std::vector<Index> sensor_subgrid(const Grid& grid, Index stride);

LinearForward heat_operator(const Grid& grid, double final_time, int n_steps);

struct SyntheticData {
  Vector y;
  Vector clean;
  NoiseModel noise;
};

/// y = F m + eta with per-component std noise_level * ||F m|| / sqrt(N_y).
SyntheticData make_data(const LinearForward& f, const Vector& m_true, double noise_level, RandomStream& stream);

/// Smooth phantom: sum of Gaussian bumps on the grid's rectangle.
Vector gaussian_bumps_phantom(const Grid& grid);

}  // namespace whittle
