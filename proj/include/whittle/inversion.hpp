#pragma once

#include "whittle/forward_models.hpp"
#include "whittle/types.hpp"

#include <optional>
#include <vector>

namespace whittle {

/// Generalized Golub-Kahan bidiagonalization of F Q with the Gamma^{-1}
/// inner product on data and the Q inner product on parameters:
///   F Q V_k = U_{k+1} B_k,  U^T Gamma^{-1} U = I,  V^T Q V = I.
/// Q V is cached, so each step costs one Q, one F and one F^T application.
class GenGK {
 public:
  GenGK(LinearForward forward, Vector inverse_variance, LinearMap q_apply, const Vector& b, bool reorthogonalize = true);

  /// Adds v_{k+1}, gamma_{k+1}, u_{k+2}, delta_{k+2}. Returns false, and
  /// leaves the basis untouched, on breakdown.
  bool expand();
  /// Expands up to k steps or breakdown; returns the reached k.
  Index expand_to(Index k);

  Index k() const { return static_cast<Index>(v_.size()); }
  Index n_data() const { return f_.n_data; }
  bool broken_down() const { return breakdown_; }
  double delta1() const { return deltas_.front(); }

  /// Lower bidiagonal (k+1) x k: gamma on the diagonal, delta_{i+1} below it.
  Matrix bidiagonal() const;
  Matrix u() const;
  Matrix v() const;
  Matrix qv() const;
  const std::vector<double>& gammas() const { return gammas_; }
  const std::vector<double>& deltas() const { return deltas_; }
  const Vector& inverse_variance() const { return inv_var_; }

 private:
  LinearForward f_;
  Vector inv_var_;
  LinearMap q_;
  bool reorth_;
  bool breakdown_ = false;
  std::vector<Vector> u_;
  std::vector<Vector> v_;
  std::vector<Vector> qv_;
  std::vector<double> gammas_;
  std::vector<double> deltas_;
};

struct ProjectedSolution {
  Vector y;
  double residual = 0.0;  // ||B y - delta1 e1||
};

/// argmin ||B y - delta1 e1||^2 + lambda^2 ||y||^2 by QR of [B; lambda I].
ProjectedSolution solve_projected(const Matrix& b, double delta1, double lambda);

struct GcvResult {
  double lambda = 0.0;
  double value = 0.0;
  bool flat = false;
};

inline constexpr double kGcvLambdaMin = 1e-10;
inline constexpr double kGcvLambdaMax = 1e10;

/// Projected GCV function
///   G(lambda) = k ||(I - B B_lambda^+) delta1 e1||^2 / trace(I - B B_lambda^+)^2
/// evaluated through the SVD of B. A weight w != 1 gives the weighted variant
/// with trace(I - w B B_lambda^+) in the denominator.
class ProjectedGcv {
 public:
  ProjectedGcv(const Matrix& b, double delta1, double weight = 1.0);
  double operator()(double lambda) const;
  /// GCV of the full problem with n_data observations at this lambda:
  /// n ||r||^2 / (n - sum of filter factors)^2. Drives the stopping rule.
  double full(double lambda, Index n_data) const;
  /// Weight that puts the stationary point of the weighted G at the smallest
  /// singular value of B (the adaptive choice of weighted-GCV hybrid methods).
  double adaptive_weight() const;

 private:
  Index k_;
  Vector sigma2_;
  Vector coeff2_;
  double outside_;
  double rows_;
  double weight_;
};

/// Minimizes G over [1e-10, 1e10] by a log-spaced scan refined with golden
/// section on log lambda. A constant G returns the log-midpoint with flat = true.
GcvResult select_lambda_gcv(const Matrix& b, double delta1, double weight = 1.0);

struct MapOptions {
  int max_iter = 100;
  int min_iter = 5;
  double stop_tol = 1e-6;
  int stop_window = 3;
  bool reorthogonalize = true;
  std::optional<double> fixed_lambda;
  std::optional<double> gcv_weight;
  /// Weighted GCV with the running mean of adaptive weights (overrides gcv_weight).
  bool adaptive_weight = false;
  std::optional<Vector> truth;  // enables the relative-error history column
};

struct MapIteration {
  Index k = 0;
  double lambda = 0.0;
  double gcv = 0.0;
  double full_gcv = 0.0;
  double rel_residual = 0.0;
  double rel_error = 0.0;  // NaN without truth
};

struct MapResult {
  Vector m_post;
  Vector z;  // projected coefficients, m_post = m_pr + Q V z
  double lambda = 0.0;
  Index iterations = 0;
  bool converged = false;
  bool gcv_flat = false;
  std::vector<MapIteration> history;
};

/// MAP estimate by gen-GK with hybrid regularization. The returned GenGK
/// state can be expanded further for uncertainty quantification.
MapResult map_estimate(GenGK& gk, const Vector& m_prior, const MapOptions& opts = {});

/// Convenience form that builds the GenGK state from b = y - F m_pr.
struct MapRun {
  MapResult result;
  GenGK state;
};
MapRun map_estimate(const LinearForward& f, const NoiseModel& noise, LinearMap q_apply, const Vector& m_prior,
                    const Vector& y, const MapOptions& opts = {});

/// Low-rank posterior variance: diag(lambda^{-2} Q - Z Delta Z^T) with
/// Z = Q V W, B^T B = W Phi W^T, Delta_i = lambda^{-2} phi_i / (phi_i + lambda^2).
struct PosteriorApprox {
  Matrix z;
  Vector phi;    // descending
  Vector delta;
  double lambda = 1.0;

  /// v -> lambda^{-2} Q v - Z Delta Z^T v
  Vector apply(const LinearMap& q_apply, const Vector& v) const;
};

PosteriorApprox posterior_approx(const GenGK& gk, double lambda);

struct PosteriorVariance {
  Vector variance;
  Vector prior;
  Vector update;  // diag(Z Delta Z^T)
  Index clamped = 0;
};

PosteriorVariance posterior_variance(const GenGK& gk, double lambda, const Vector& diag_q);

}  // namespace whittle
