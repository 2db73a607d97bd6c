#include "whittle/sampling.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>

namespace whittle {

SpdeSampler::SpdeSampler(const Grid& grid, const Coefficients& coeff, double alpha, CovarianceOptions opts)
    : grid_(grid), alpha_(alpha), opts_(std::move(opts)) {
  grid_.validate();
  rule_ = spde_rule(alpha, grid_.quad_h(), opts_.zeta);
  shifted_ = rescaled_weights(rule_);
  mass_ = assemble_mass(grid_);
  stiffness_ = assemble_stiffness(grid_, coeff);
  mass_chol_ = cholesky_mass(mass_);
  precs_ = PreconditionerSet(mass_, stiffness_, opts_.taus);
}

Vector SpdeSampler::sample_from_noise(const Vector& w, ShiftedReport* report) const {
  if (w.size() != grid_.num_nodes()) throw ValidationError("sample_spde: noise vector does not match the grid");
  const ShiftedFamily family{mass_, stiffness_, shifted_.sigma};
  KrylovOptions kopts;
  kopts.tol = opts_.tol;
  kopts.max_iter = opts_.max_iter;
  ShiftedSolution sol = solve_shifted(family, precs_, mass_chol_.apply_lower(w), kopts);
  if (report) *report = sol.report;
  return sol.combine(shifted_.weight);
}

Vector SpdeSampler::sample(RandomStream& stream, ShiftedReport* report) const {
  return sample_from_noise(stream.normal_vector(grid_.num_nodes()), report);
}

Vector sample_spde(const Grid& grid, const Coefficients& coeff, double alpha, RandomStream& stream) {
  return SpdeSampler(grid, coeff, alpha).sample(stream);
}

namespace {

// Modified Gram-Schmidt in the M inner product, two passes.
Matrix m_orthonormalize(const Matrix& y, const SparseMatrix& mass) {
  Matrix q = y;
  Matrix mq(q.rows(), q.cols());
  Index kept = 0;
  for (Index j = 0; j < q.cols(); ++j) {
    Vector col = q.col(j);
    const double before = std::sqrt(col.dot(mass * col));
    for (int pass = 0; pass < 2; ++pass)
      for (Index i = 0; i < kept; ++i) col -= mq.col(i).dot(col) * q.col(i);
    Vector mcol = mass * col;
    const double norm = std::sqrt(col.dot(mcol));
    if (!(norm > 1e-12 * before)) continue;
    q.col(kept) = col / norm;
    mq.col(kept) = mcol / norm;
    ++kept;
  }
  return q.leftCols(kept);
}

}  // namespace

KLBasis randomized_ghep(const LinearMap& cov, const SparseMatrix& mass, Index n_modes, RandomStream& stream,
                        const KLOptions& opts) {
  const Index n = mass.rows();
  const Index block = n_modes + opts.oversample;
  if (n_modes < 1 || opts.oversample < 0 || block > n)
    throw ValidationError("kl_eigs: need 1 <= modes and modes + oversample <= number of nodes");
  auto apply_block = [&](const Matrix& x) {
    Matrix out(n, x.cols());
    for (Index j = 0; j < x.cols(); ++j) out.col(j) = cov(x.col(j));
    return out;
  };
  Matrix y = apply_block(stream.normal_matrix(n, block));
  for (int q = 0; q < opts.power_iterations; ++q) y = apply_block(m_orthonormalize(y, mass));
  const Matrix basis = m_orthonormalize(y, mass);
  if (basis.cols() < n_modes) throw Error("kl_eigs: sketch lost rank; reduce the number of modes");
  const Matrix image = apply_block(basis);
  Matrix t = basis.transpose() * (mass * image);
  t = 0.5 * (t + t.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(t);
  KLBasis out;
  out.eigenvalues = eig.eigenvalues().reverse().head(n_modes);
  out.eigenvectors = basis * eig.eigenvectors().rowwise().reverse().leftCols(n_modes);
  return out;
}

KLBasis kl_eigs(const CovarianceApplicator& app, Index n_modes, RandomStream& stream, const KLOptions& opts) {
  return randomized_ghep(app.cov_map(), app.mass(), n_modes, stream, opts);
}

Vector sample_kl_from_coefficients(const KLBasis& basis, const Vector& mean, const Vector& xi) {
  if (xi.size() != basis.size()) throw ValidationError("sample_kl: coefficient count mismatch");
  if (mean.size() != basis.eigenvectors.rows()) throw ValidationError("sample_kl: mean does not match the basis");
  return mean + basis.eigenvectors * basis.eigenvalues.cwiseMax(0.0).cwiseSqrt().cwiseProduct(xi);
}

Vector sample_kl(const KLBasis& basis, const Vector& mean, RandomStream& stream) {
  return sample_kl_from_coefficients(basis, mean, stream.normal_vector(basis.size()));
}

}  // namespace whittle
