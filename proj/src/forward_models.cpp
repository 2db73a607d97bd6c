#include "whittle/forward_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>

namespace whittle {

LinearForward LinearForward::from_matrix(SparseMatrix a, std::string description) {
  LinearForward f;
  f.n_data = a.rows();
  f.n_params = a.cols();
  f.description = std::move(description);
  auto shared = std::make_shared<const SparseMatrix>(std::move(a));
  f.matrix = *shared;
  f.apply = [shared](const Vector& x) { return Vector(*shared * x); };
  f.apply_transpose = [shared](const Vector& y) { return Vector(shared->transpose() * y); };
  return f;
}

LinearForward LinearForward::from_dense(const Matrix& a, std::string description) {
  LinearForward f;
  f.n_data = a.rows();
  f.n_params = a.cols();
  f.description = std::move(description);
  f.apply = [a](const Vector& x) { return Vector(a * x); };
  f.apply_transpose = [a](const Vector& y) { return Vector(a.transpose() * y); };
  return f;
}

RayGeometry parse_geometry(const std::string& name) {
  if (name == "cross-well" || name == "crosswell") return RayGeometry::kCrossWell;
  if (name == "parallel") return RayGeometry::kParallel;
  throw ValidationError("unknown ray geometry '" + name + "'");
}

std::vector<std::pair<Index, double>> trace_ray(const PixelGrid& px, const Ray& ray) {
  std::vector<std::pair<Index, double>> out;
  const Eigen::Vector2d d = ray.end - ray.start;
  const double length = d.norm();
  if (length == 0.0) return out;

  double a_min = 0.0, a_max = 1.0;
  const double lo[2] = {px.x0, px.y0};
  const double hi[2] = {px.x1, px.y1};
  for (int k = 0; k < 2; ++k) {
    if (d(k) == 0.0) {
      if (ray.start(k) < lo[k] || ray.start(k) > hi[k]) return out;
      continue;
    }
    double a0 = (lo[k] - ray.start(k)) / d(k);
    double a1 = (hi[k] - ray.start(k)) / d(k);
    if (a0 > a1) std::swap(a0, a1);
    a_min = std::max(a_min, a0);
    a_max = std::min(a_max, a1);
  }
  if (!(a_max > a_min)) return out;

  const double sx = (px.x1 - px.x0) / static_cast<double>(px.nx);
  const double sy = (px.y1 - px.y0) / static_cast<double>(px.ny);
  std::vector<double> alphas{a_min, a_max};
  auto add_planes = [&](int k, Index count, double origin, double step) {
    if (d(k) == 0.0) return;
    for (Index i = 0; i <= count; ++i) {
      const double a = (origin + static_cast<double>(i) * step - ray.start(k)) / d(k);
      if (a > a_min && a < a_max) alphas.push_back(a);
    }
  };
  add_planes(0, px.nx, px.x0, sx);
  add_planes(1, px.ny, px.y0, sy);
  std::sort(alphas.begin(), alphas.end());

  for (std::size_t k = 0; k + 1 < alphas.size(); ++k) {
    const double seg = (alphas[k + 1] - alphas[k]) * length;
    if (seg <= 0.0) continue;
    const Eigen::Vector2d mid = ray.start + 0.5 * (alphas[k] + alphas[k + 1]) * d;
    const Index i = std::clamp<Index>(static_cast<Index>(std::floor((mid(0) - px.x0) / sx)), 0, px.nx - 1);
    const Index j = std::clamp<Index>(static_cast<Index>(std::floor((mid(1) - px.y0) / sy)), 0, px.ny - 1);
    const Index idx = j * px.nx + i;
    if (!out.empty() && out.back().first == idx)
      out.back().second += seg;
    else
      out.emplace_back(idx, seg);
  }
  return out;
}

std::vector<Ray> ray_set(const PixelGrid& px, Index n_sources, Index n_receivers, RayGeometry geometry) {
  if (n_sources < 1 || n_receivers < 1) throw ValidationError("tomography needs at least one source and receiver");
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(n_sources * n_receivers));
  const double lx = px.x1 - px.x0, ly = px.y1 - px.y0;
  if (geometry == RayGeometry::kCrossWell) {
    for (Index s = 0; s < n_sources; ++s) {
      const double ys = px.y0 + (static_cast<double>(s) + 0.5) * ly / static_cast<double>(n_sources);
      for (Index r = 0; r < n_receivers; ++r) {
        const double yr = px.y0 + (static_cast<double>(r) + 0.5) * ly / static_cast<double>(n_receivers);
        rays.push_back({{px.x0, ys}, {px.x1, yr}});
      }
    }
    return rays;
  }
  const Eigen::Vector2d center(0.5 * (px.x0 + px.x1), 0.5 * (px.y0 + px.y1));
  const double radius = 0.5 * std::hypot(lx, ly);
  for (Index a = 0; a < n_sources; ++a) {
    const double theta = std::numbers::pi * static_cast<double>(a) / static_cast<double>(n_sources);
    const Eigen::Vector2d dir(std::cos(theta), std::sin(theta));
    const Eigen::Vector2d normal(-dir(1), dir(0));
    for (Index b = 0; b < n_receivers; ++b) {
      const double t = -radius + (static_cast<double>(b) + 0.5) * 2.0 * radius / static_cast<double>(n_receivers);
      const Eigen::Vector2d foot = center + t * normal;
      rays.push_back({foot - radius * dir, foot + radius * dir});
    }
  }
  return rays;
}

SparseMatrix tomo_matrix(const PixelGrid& px, const std::vector<Ray>& rays, std::vector<std::string>* warnings) {
  std::vector<Eigen::Triplet<double, int>> triplets;
  Index missed = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const auto hits = trace_ray(px, rays[r]);
    if (hits.empty()) ++missed;
    for (const auto& [idx, len] : hits) triplets.emplace_back(static_cast<int>(r), static_cast<int>(idx), len);
  }
  if (missed > 0 && warnings)
    warnings->push_back(std::to_string(missed) + " ray(s) miss the domain and give zero rows");
  SparseMatrix a(static_cast<Index>(rays.size()), px.nx * px.ny);
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();
  return a;
}

LinearForward tomo_operator(const Grid& grid, Index n_sources, Index n_receivers, RayGeometry geometry) {
  grid.validate();
  const PixelGrid px = PixelGrid::from_grid(grid);
  std::vector<std::string> warnings;
  SparseMatrix a = tomo_matrix(px, ray_set(px, n_sources, n_receivers, geometry), &warnings);
  LinearForward f = LinearForward::from_matrix(std::move(a), geometry == RayGeometry::kCrossWell
                                                                 ? "cross-well ray tomography"
                                                                 : "parallel-beam ray tomography");
  f.warnings = std::move(warnings);
  return f;
}

std::vector<Index> sensor_subgrid(const Grid& grid, Index stride) {
  if (stride < 1) throw ValidationError("sensor stride must be positive");
  std::vector<Index> out;
  for (Index j = stride; j < grid.ny - 1; j += stride)
    for (Index i = stride; i < grid.nx - 1; i += stride) out.push_back(grid.index(i, j));
  return out;
}

HeatModel::HeatModel(const Grid& grid, double final_time, int n_steps, Index sensor_stride)
    : grid_(grid), n_steps_(n_steps) {
  grid_.validate();
  if (!(final_time > 0.0)) throw ValidationError("heat model: final time must be positive");
  if (n_steps < 1) throw ValidationError("heat model: need at least one time step");
  dt_ = final_time / n_steps;
  mass_ = assemble_mass(grid_);
  const SparseMatrix laplace = assemble_stiffness(grid_, Coefficients::constant(0.0));
  explicit_part_ = mass_ - 0.5 * dt_ * laplace;
  implicit_factor_ = factorize(SparseMatrix(mass_ + 0.5 * dt_ * laplace));
  sensors_ = sensor_subgrid(grid_, sensor_stride);
  if (sensors_.empty()) throw ValidationError("heat model: grid too coarse for the sensor stride");
}

Vector HeatModel::step(const Vector& u) const { return implicit_factor_.solve(Vector(explicit_part_ * u)); }

Vector HeatModel::propagate(const Vector& u0) const {
  Vector u = u0;
  for (int k = 0; k < n_steps_; ++k) u = step(u);
  return u;
}

Vector HeatModel::propagate_transpose(const Vector& w) const {
  Vector u = w;
  for (int k = 0; k < n_steps_; ++k) u = explicit_part_ * implicit_factor_.solve(u);
  return u;
}

Vector HeatModel::observe(const Vector& m) const {
  if (m.size() != grid_.num_nodes()) throw ValidationError("heat model: parameter does not match the grid");
  const Vector u = propagate(m);
  Vector y(static_cast<Index>(sensors_.size()));
  for (std::size_t k = 0; k < sensors_.size(); ++k) y(static_cast<Index>(k)) = u(sensors_[k]);
  return y;
}

Vector HeatModel::observe_transpose(const Vector& y) const {
  if (y.size() != static_cast<Index>(sensors_.size())) throw ValidationError("heat model: data has wrong length");
  Vector w = Vector::Zero(grid_.num_nodes());
  for (std::size_t k = 0; k < sensors_.size(); ++k) w(sensors_[k]) = y(static_cast<Index>(k));
  return propagate_transpose(w);
}

LinearForward HeatModel::as_forward() const {
  LinearForward f;
  f.n_data = static_cast<Index>(sensors_.size());
  f.n_params = grid_.num_nodes();
  f.description = "heat equation, terminal observations";
  f.apply = [self = *this](const Vector& m) { return self.observe(m); };
  f.apply_transpose = [self = *this](const Vector& y) { return self.observe_transpose(y); };
  return f;
}

LinearForward heat_operator(const Grid& grid, double final_time, int n_steps) {
  return HeatModel(grid, final_time, n_steps).as_forward();
}

SyntheticData make_data(const LinearForward& f, const Vector& m_true, double noise_level, RandomStream& stream) {
  if (!(noise_level >= 0.0)) throw ValidationError("noise level must be nonnegative");
  SyntheticData out;
  out.clean = f.apply(m_true);
  const Index ny = out.clean.size();
  const double sigma = noise_level * out.clean.norm() / std::sqrt(static_cast<double>(ny));
  out.y = out.clean;
  if (sigma > 0.0) out.y += sigma * stream.normal_vector(ny);
  // Exact data still needs a positive weighting; unit variances are used then.
  out.noise.variance = Vector::Constant(ny, sigma > 0.0 ? sigma * sigma : 1.0);
  out.noise.noise_level = noise_level;
  return out;
}

Vector gaussian_bumps_phantom(const Grid& grid) {
  struct Bump {
    double cx, cy, width, height;
  };
  const Bump bumps[] = {{0.30, 0.35, 0.12, 1.0}, {0.68, 0.62, 0.15, 0.8}, {0.55, 0.22, 0.08, -0.5}};
  Vector m(grid.num_nodes());
  for (Index j = 0; j < grid.ny; ++j) {
    for (Index i = 0; i < grid.nx; ++i) {
      const double x = (grid.x(i) - grid.x0) / (grid.x1 - grid.x0);
      const double y = (grid.y(j) - grid.y0) / (grid.y1 - grid.y0);
      double v = 0.0;
      for (const auto& b : bumps) {
        const double r2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
        v += b.height * std::exp(-0.5 * r2 / (b.width * b.width));
      }
      m(grid.index(i, j)) = v;
    }
  }
  return m;
}

}  // namespace whittle
