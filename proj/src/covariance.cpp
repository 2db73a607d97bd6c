#include "whittle/covariance.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <numbers>

namespace whittle {

double PriorConfig::marginal_variance() const {
  const double nu = alpha - 1.0;
  return std::tgamma(nu) / (4.0 * std::numbers::pi * std::tgamma(nu + 1.0));
}

void PriorConfig::validate_as_prior() const {
  if (!(alpha > 1.0) || !std::isfinite(alpha))
    throw ValidationError("prior exponent alpha must exceed 1 (trace class in two dimensions)");
  if (!(lambda_c > 0.0)) throw ValidationError("prior scale lambda_c must be positive");
}

CovarianceApplicator::CovarianceApplicator(const Grid& grid, const Coefficients& coeff, double alpha,
                                           CovarianceOptions opts)
    : grid_(grid), alpha_(alpha), opts_(std::move(opts)) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("covariance exponent alpha must be positive");
  grid_.validate();
  r_ = static_cast<int>(std::floor(alpha));
  s_ = alpha - std::floor(alpha);
  mass_ = assemble_mass(grid_);
  stiffness_ = assemble_stiffness(grid_, coeff);
  mass_factor_ = factorize(mass_);
  if (r_ > 0) stiffness_factor_ = factorize(stiffness_);
  if (s_ > 0.0) {
    precs_ = PreconditionerSet(mass_, stiffness_, opts_.taus);
    rule_ = inverse_rule(s_, grid_.quad_h(), opts_.zeta);
    shifted_ = rescaled_weights(rule_);
  }
}

Vector CovarianceApplicator::apply_integer(const Vector& f) const {
  Vector c = f;
  for (int k = 0; k < r_; ++k) c = stiffness_factor_.solve(Vector(mass_ * c));
  return c;
}

Vector CovarianceApplicator::apply_fractional(const Vector& c, ShiftedReport* report) const {
  if (s_ == 0.0) return c;
  const ShiftedFamily family{mass_, stiffness_, shifted_.sigma};
  KrylovOptions kopts;
  kopts.tol = opts_.tol;
  kopts.max_iter = opts_.max_iter;
  ShiftedSolution sol = solve_shifted(family, precs_, mass_ * c, kopts);
  if (report) *report = sol.report;
  return sol.combine(shifted_.weight);
}

Vector CovarianceApplicator::apply_cov(const Vector& f, ShiftedReport* report) const {
  if (f.size() != size()) throw ValidationError("apply_cov: vector does not match the grid");
  return apply_fractional(apply_integer(f), report);
}

Vector CovarianceApplicator::apply_cov_fractional_first(const Vector& f) const {
  if (f.size() != size()) throw ValidationError("apply_cov: vector does not match the grid");
  return apply_integer(apply_fractional(f, nullptr));
}

Vector CovarianceApplicator::apply_Q(const Vector& v, ShiftedReport* report) const {
  return apply_cov(mass_factor_.solve(v), report);
}

LinearMap CovarianceApplicator::cov_map() const {
  return [this](const Vector& f) { return apply_cov(f); };
}

LinearMap CovarianceApplicator::q_map() const {
  return [this](const Vector& v) { return apply_Q(v); };
}

DenseCovariance dense_cov(const Grid& grid, const Coefficients& coeff, double alpha) {
  grid.validate();
  if (grid.num_nodes() > kDenseCovarianceLimit)
    throw ValidationError("dense_cov: grid too large for a dense oracle (" + std::to_string(grid.num_nodes()) + " nodes)");
  const Matrix m = Matrix(assemble_mass(grid));
  const Matrix k = Matrix(assemble_stiffness(grid, coeff));
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> eig(k, m);
  if (eig.info() != Eigen::Success) throw Error("dense_cov: generalized eigensolve failed");
  DenseCovariance out;
  out.pencil_eigenvalues = eig.eigenvalues();
  out.pencil_eigenvectors = eig.eigenvectors();
  if (!(out.pencil_eigenvalues.minCoeff() > 0.0))
    throw ValidationError("dense_cov: stiffness matrix is singular (kappa^2 must be positive somewhere)");
  const Vector scale = out.pencil_eigenvalues.array().pow(-alpha).matrix();
  const Matrix& psi = out.pencil_eigenvectors;
  out.q = psi * scale.asDiagonal() * psi.transpose();
  out.q = 0.5 * (out.q + out.q.transpose()).eval();
  out.c = out.q * m;
  return out;
}

Vector estimate_diagonal(const LinearMap& op, Index n, int n_samples, int rank, RandomStream& stream) {
  if (n_samples < 2) throw ValidationError("diagonal estimation needs at least 2 samples");
  if (rank < 0 || 2 * rank > n_samples) throw ValidationError("diagonal estimation: rank must satisfy 0 <= 2 rank <= samples");
  const Index r = std::min<Index>(rank, n);
  Vector diag = Vector::Zero(n);
  Matrix basis(n, 0);
  if (r > 0) {
    Matrix sketch(n, r);
    for (Index j = 0; j < r; ++j) sketch.col(j) = op(stream.normal_vector(n));
    Eigen::HouseholderQR<Matrix> qr(sketch);
    basis = qr.householderQ() * Matrix::Identity(n, r);
    Matrix image(n, r);
    for (Index j = 0; j < r; ++j) image.col(j) = op(basis.col(j));
    diag = basis.cwiseProduct(image).rowwise().sum();
  }
  const int probes = n_samples - 2 * static_cast<int>(r);
  if (probes > 0 && r < n) {
    Vector acc = Vector::Zero(n);
    for (int p = 0; p < probes; ++p) {
      const Vector omega = stream.rademacher_vector(n);
      Vector image = op(omega);
      if (r > 0) image -= basis * (basis.transpose() * image);
      acc += omega.cwiseProduct(image);
    }
    diag += acc / static_cast<double>(probes);
  }
  return diag;
}

Vector estimate_diag_Q(const CovarianceApplicator& app, int n_samples, std::optional<int> rank, RandomStream& stream) {
  return estimate_diagonal(app.q_map(), app.size(), n_samples, rank.value_or(n_samples / 3), stream);
}

}  // namespace whittle
