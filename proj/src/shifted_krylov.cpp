#include "whittle/shifted_krylov.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>

namespace whittle {

namespace {

constexpr double kDeflationTolerance = 1e-12;

struct ProjectedSolve {
  Vector y;
  double residual;
};

// Builds [E; 0] + Hbar (sigma I - T) for the leading rows x cols block.
Matrix shifted_projection(const Matrix& hbar, Index rows, Index cols, const std::vector<Index>& source,
                          const std::vector<double>& tau, double sigma) {
  Matrix h(rows, cols);
  for (Index c = 0; c < cols; ++c) {
    h.col(c) = (sigma - tau[static_cast<std::size_t>(c)]) * hbar.col(c).head(rows);
    h(source[static_cast<std::size_t>(c)], c) += 1.0;
  }
  return h;
}

ProjectedSolve solve_projected_ls(const Matrix& h, double beta) {
  Vector rhs = Vector::Zero(h.rows());
  rhs(0) = beta;
  if (h.rows() <= h.cols()) {
    // Deflated columns leave fewer basis rows than directions.
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(h);
    Vector y = cod.solve(rhs);
    const double res = (rhs - h * y).norm();
    return {std::move(y), res};
  }
  Eigen::HouseholderQR<Matrix> qr(h);
  const Vector qtb = qr.householderQ().transpose() * rhs;
  const Index n = h.cols();
  Vector y = qr.matrixQR().topLeftCorner(n, n).triangularView<Eigen::Upper>().solve(qtb.head(n));
  return {std::move(y), qtb.tail(h.rows() - n).norm()};
}

std::vector<Index> verification_indices(Index n_shifts, int count) {
  std::vector<Index> out;
  if (count <= 0 || n_shifts == 0) return out;
  if (count == 1 || n_shifts == 1) return {n_shifts / 2};
  for (int k = 0; k < count; ++k) {
    const Index idx = static_cast<Index>(std::llround(static_cast<double>(k) * static_cast<double>(n_shifts - 1) / (count - 1)));
    if (std::find(out.begin(), out.end(), idx) == out.end()) out.push_back(idx);
  }
  return out;
}

}  // namespace

void ShiftedFamily::validate() const {
  if (a1.rows() != a1.cols() || a2.rows() != a2.cols() || a1.rows() != a2.rows())
    throw ValidationError("shifted family: operators must be square and of equal size");
  if (!shifts.allFinite()) throw ValidationError("shifted family: shifts must be finite");
}

PreconditionerSet::PreconditionerSet(const SparseMatrix& a1, const SparseMatrix& a2, std::vector<double> taus)
    : taus_(std::move(taus)) {
  if (taus_.empty()) throw ValidationError("preconditioner set needs at least one shift");
  factors_.reserve(taus_.size());
  for (double tau : taus_) {
    const SparseMatrix p = a1 + tau * a2;
    factors_.push_back(factorize(p));
  }
}

Matrix MPArnoldiState::shifted_hessenberg(double sigma) const {
  return shifted_projection(hbar, hbar.rows(), hbar.cols(), source, tau, sigma);
}

ShiftedSolution solve_shifted(const ShiftedFamily& family, const PreconditionerSet& precs, const Vector& d,
                              const KrylovOptions& opts) {
  family.validate();
  const Index n = family.size();
  if (d.size() != n) throw ValidationError("solve_shifted: right-hand side has wrong length");
  if (!(opts.tol > 0.0)) throw ValidationError("solve_shifted: tolerance must be positive");
  if (precs.count() < 1) throw ValidationError("solve_shifted: no preconditioners");
  const Index n_shifts = family.num_shifts();
  const Index np = precs.count();

  ShiftedSolution out;
  out.report.residuals = Vector::Zero(n_shifts);
  const double beta = d.norm();
  if (beta == 0.0) {
    out.z = Matrix::Zero(n, 0);
    out.coeffs = Matrix::Zero(0, n_shifts);
    out.report.converged = true;
    return out;
  }

  std::vector<Vector> v{d / beta};
  std::vector<Vector> z;
  std::vector<Index> source;
  std::vector<double> tau;
  const Index max_cols = static_cast<Index>(opts.max_iter) * np;
  Matrix hbar = Matrix::Zero(max_cols + 1, max_cols);
  Matrix coeffs;
  const auto verify_at = verification_indices(n_shifts, opts.verify_shifts);

  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    const Index src = static_cast<Index>(v.size()) - 1;
    std::vector<Vector> w(static_cast<std::size_t>(np));
    double block_norm = 0.0;
    for (Index p = 0; p < np; ++p) {
      z.push_back(precs.apply_inverse(p, v.back()));
      source.push_back(src);
      tau.push_back(precs.tau(p));
      w[static_cast<std::size_t>(p)] = family.a2 * z.back();
      block_norm = std::max(block_norm, w[static_cast<std::size_t>(p)].norm());
    }
    bool grew = false;
    for (Index p = 0; p < np; ++p) {
      const Index col = static_cast<Index>(z.size()) - np + p;
      Vector& wp = w[static_cast<std::size_t>(p)];
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i < v.size(); ++i) {
          const double hij = v[i].dot(wp);
          hbar(static_cast<Index>(i), col) += hij;
          wp.noalias() -= hij * v[i];
        }
      }
      const double norm = wp.norm();
      if (norm > kDeflationTolerance * block_norm) {
        hbar(static_cast<Index>(v.size()), col) = norm;
        v.push_back(wp / norm);
        grew = true;
      }
    }

    const Index rows = static_cast<Index>(v.size());
    const Index cols = static_cast<Index>(z.size());
    coeffs.resize(cols, n_shifts);
    Vector rel(n_shifts);
    for (Index j = 0; j < n_shifts; ++j) {
      const Matrix h = shifted_projection(hbar, rows, cols, source, tau, family.shifts(j));
      ProjectedSolve ls = solve_projected_ls(h, beta);
      coeffs.col(j) = ls.y;
      rel(j) = ls.residual / beta;
    }
    out.report.iterations = iter;
    out.report.basis_dim = cols;
    out.report.residuals = rel;
    if (opts.record_history) out.report.history.push_back(rel);

    bool converged = rel.maxCoeff() <= opts.tol;
    if (converged) {
      out.report.verified.clear();
      for (Index j : verify_at) {
        Vector x = Vector::Zero(n);
        for (Index c = 0; c < cols; ++c) x.noalias() += coeffs(c, j) * z[static_cast<std::size_t>(c)];
        const Vector r = d - family.a1 * x - family.shifts(j) * (family.a2 * x);
        const double true_rel = r.norm() / beta;
        out.report.verified.emplace_back(j, true_rel);
        if (true_rel > 10.0 * opts.tol) converged = false;
      }
    }
    if (converged) {
      out.report.converged = true;
      break;
    }
    if (!grew) throw ConvergenceError("solve_shifted: Krylov basis broke down before convergence", rel.maxCoeff());
  }

  if (!out.report.converged)
    throw ConvergenceError("solve_shifted: " + std::to_string(opts.max_iter) + " iterations without convergence",
                           out.report.worst_residual());

  const Index cols = static_cast<Index>(z.size());
  out.z.resize(n, cols);
  for (Index c = 0; c < cols; ++c) out.z.col(c) = z[static_cast<std::size_t>(c)];
  out.coeffs = std::move(coeffs);
  if (opts.keep_arnoldi) {
    const Index rows = static_cast<Index>(v.size());
    out.arnoldi.v.resize(n, rows);
    for (Index i = 0; i < rows; ++i) out.arnoldi.v.col(i) = v[static_cast<std::size_t>(i)];
    out.arnoldi.hbar = hbar.topLeftCorner(rows, cols);
    out.arnoldi.source = source;
    out.arnoldi.tau = tau;
  }
  return out;
}

const std::vector<Vector>& residual_history(const ShiftedSolution& solution) { return solution.report.history; }

namespace {

template <typename Visitor>
void for_each_direct_solution(const ShiftedFamily& family, const Vector& d, Visitor&& visit) {
  family.validate();
  if (d.size() != family.size()) throw ValidationError("direct_shifted: right-hand side has wrong length");
  using ColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
  Eigen::SimplicialLLT<ColMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt;
  bool analyzed = false;
  for (Index j = 0; j < family.num_shifts(); ++j) {
    const ColMatrix s = family.a1 + family.shifts(j) * family.a2;
    if (!analyzed) {
      llt.analyzePattern(s);
      analyzed = true;
    }
    llt.factorize(s);
    if (llt.info() != Eigen::Success) throw ShiftNotSpdError(j, -1);
    const auto& l = llt.matrixL().nestedExpression();
    const auto& perm = llt.permutationP();
    for (Index i = 0; i < s.rows(); ++i) {
      const Index k = perm.size() ? perm.indices()(i) : i;
      const double lkk = l.coeff(k, k);
      if (!(lkk * lkk > 1e-10 * std::abs(s.coeff(i, i)))) throw ShiftNotSpdError(j, i);
    }
    visit(j, Vector(llt.solve(d)));
  }
}

}  // namespace

Matrix direct_shifted(const ShiftedFamily& family, const Vector& d) {
  Matrix out(family.size(), family.num_shifts());
  for_each_direct_solution(family, d, [&](Index j, const Vector& x) { out.col(j) = x; });
  return out;
}

Vector direct_shifted_combined(const ShiftedFamily& family, const Vector& d, const Vector& weights) {
  if (weights.size() != family.num_shifts()) throw ValidationError("direct_shifted: weight count mismatch");
  Vector out = Vector::Zero(family.size());
  for_each_direct_solution(family, d, [&](Index j, const Vector& x) { out.noalias() += weights(j) * x; });
  return out;
}

}  // namespace whittle
