#pragma once

#include "whittle/grid_fem.hpp"
#include "whittle/random.hpp"
#include "whittle/shifted_krylov.hpp"
#include "whittle/sinc_quadrature.hpp"

#include <optional>

namespace whittle {

/// Whittle-Matern prior: covariance (kappa^2 - div(Theta grad))^{-alpha},
/// scaled by lambda_c^{-2} when used as a prior.
struct PriorConfig {
  double alpha = 2.5;
  Coefficients coeff = Coefficients::constant(100.0);
  double lambda_c = 1.0;

  int integer_part() const { return static_cast<int>(std::floor(alpha)); }
  double fractional_part() const { return alpha - std::floor(alpha); }
  /// Gamma(nu) / ((4 pi)^{d/2} Gamma(nu + d/2)) with nu = alpha - 1, d = 2.
  double marginal_variance() const;
  /// alpha > 1 is required for a trace-class prior in two dimensions.
  void validate_as_prior() const;
};

struct CovarianceOptions {
  std::vector<double> taus = PreconditionerSet::default_taus();
  double tol = 1e-8;
  int max_iter = 100;
  std::optional<double> zeta;
};

/// Applies C_alpha = (sum_j w_j (K + z_j M)^{-1} M) (K^{-1} M)^r without
/// forming it. The fractional sum runs as one MPGMRES-Sh solve over the
/// shifts 1/z_j. Immutable after construction; apply calls are reentrant.
class CovarianceApplicator {
 public:
  CovarianceApplicator(const Grid& grid, const Coefficients& coeff, double alpha, CovarianceOptions opts = {});
  CovarianceApplicator(const Grid& grid, const PriorConfig& prior, CovarianceOptions opts = {})
      : CovarianceApplicator(grid, prior.coeff, prior.alpha, std::move(opts)) {}

  const Grid& grid() const { return grid_; }
  double alpha() const { return alpha_; }
  int integer_part() const { return r_; }
  double fractional_part() const { return s_; }
  const SparseMatrix& mass() const { return mass_; }
  const SparseMatrix& stiffness() const { return stiffness_; }
  const SincRule& rule() const { return rule_; }
  const CovarianceOptions& options() const { return opts_; }
  Index size() const { return grid_.num_nodes(); }

  /// u = C_alpha f. `report` receives the shifted solve's report when s > 0.
  Vector apply_cov(const Vector& f, ShiftedReport* report = nullptr) const;
  /// Same operator with the fractional sum applied before the integer part.
  Vector apply_cov_fractional_first(const Vector& f) const;
  /// Q v = C_alpha M^{-1} v, symmetric positive definite.
  Vector apply_Q(const Vector& v, ShiftedReport* report = nullptr) const;

  LinearMap cov_map() const;
  LinearMap q_map() const;

  Vector solve_mass(const Vector& b) const { return mass_factor_.solve(b); }

 private:
  Vector apply_integer(const Vector& f) const;
  Vector apply_fractional(const Vector& c, ShiftedReport* report) const;

  Grid grid_;
  double alpha_;
  int r_;
  double s_;
  CovarianceOptions opts_;
  SparseMatrix mass_;
  SparseMatrix stiffness_;
  SparseFactorization mass_factor_;
  SparseFactorization stiffness_factor_;
  PreconditionerSet precs_;
  SincRule rule_;
  ShiftedWeights shifted_;
};

/// Dense spectral reference for small grids: with K psi = lambda M psi and
/// Psi^T M Psi = I, C = Psi Lambda^{-alpha} Psi^T M and Q = Psi Lambda^{-alpha} Psi^T.
struct DenseCovariance {
  Matrix c;
  Matrix q;
  Vector pencil_eigenvalues;  // ascending
  Matrix pencil_eigenvectors;
};

inline constexpr Index kDenseCovarianceLimit = 1100;

DenseCovariance dense_cov(const Grid& grid, const Coefficients& coeff, double alpha);
inline DenseCovariance dense_cov(const Grid& grid, const PriorConfig& prior) {
  return dense_cov(grid, prior.coeff, prior.alpha);
}

/// Diag++ estimate of diag(A) for symmetric A given by matvecs: a rank-`rank`
/// range sketch captured exactly, plus Hutchinson with Rademacher probes on
/// the remainder. Uses rank + rank + (n_samples - 2 rank) matvecs.
Vector estimate_diagonal(const LinearMap& op, Index n, int n_samples, int rank, RandomStream& stream);

/// diag(Q) with the default split rank = n_samples / 3.
Vector estimate_diag_Q(const CovarianceApplicator& app, int n_samples, std::optional<int> rank, RandomStream& stream);

}  // namespace whittle
