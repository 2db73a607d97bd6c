#pragma once

#include "whittle/covariance.hpp"

namespace whittle {

/// Draws u = A^{-alpha/2} M^{-1} L w, w ~ N(0, I), M = L L^T, 0 < alpha < 2.
/// The sinc sum over (K + z_j M)^{-1} runs through one MPGMRES-Sh solve in
/// the rescaled (M + z_j^{-1} K) form. Samples have covariance Q = C_alpha M^{-1}.
class SpdeSampler {
 public:
  SpdeSampler(const Grid& grid, const Coefficients& coeff, double alpha, CovarianceOptions opts = {});

  const Grid& grid() const { return grid_; }
  const SincRule& rule() const { return rule_; }
  double alpha() const { return alpha_; }

  Vector sample(RandomStream& stream, ShiftedReport* report = nullptr) const;
  /// Sample for a given white-noise vector w.
  Vector sample_from_noise(const Vector& w, ShiftedReport* report = nullptr) const;

 private:
  Grid grid_;
  double alpha_;
  CovarianceOptions opts_;
  SparseMatrix mass_;
  SparseMatrix stiffness_;
  SparseFactorization mass_chol_;
  PreconditionerSet precs_;
  SincRule rule_;
  ShiftedWeights shifted_;
};

Vector sample_spde(const Grid& grid, const Coefficients& coeff, double alpha, RandomStream& stream);

/// Leading pairs of M C psi = lambda M psi with Psi^T M Psi = I.
struct KLBasis {
  Vector eigenvalues;  // descending
  Matrix eigenvectors;

  Index size() const { return eigenvalues.size(); }
};

struct KLOptions {
  int oversample = 20;
  int power_iterations = 1;
};

/// Two-pass randomized solver for the generalized eigenproblem, touching C
/// only through apply_cov.
KLBasis kl_eigs(const CovarianceApplicator& app, Index n_modes, RandomStream& stream, const KLOptions& opts = {});

/// Same algorithm for an arbitrary covariance map and mass matrix.
KLBasis randomized_ghep(const LinearMap& cov, const SparseMatrix& mass, Index n_modes, RandomStream& stream,
                        const KLOptions& opts = {});

/// mean + sum_j sqrt(lambda_j) xi_j psi_j.
Vector sample_kl(const KLBasis& basis, const Vector& mean, RandomStream& stream);
Vector sample_kl_from_coefficients(const KLBasis& basis, const Vector& mean, const Vector& xi);

}  // namespace whittle
