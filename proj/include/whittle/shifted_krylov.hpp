#pragma once

#include "whittle/grid_fem.hpp"
#include "whittle/types.hpp"

#include <vector>

namespace whittle {

/// The family (A1 + sigma_j A2) x_j = d over a list of shifts.
struct ShiftedFamily {
  const SparseMatrix& a1;
  const SparseMatrix& a2;
  Vector shifts;

  Index size() const { return a1.rows(); }
  Index num_shifts() const { return shifts.size(); }
  void validate() const;
};

/// Factorized preconditioners P_j = A1 + tau_j A2.
class PreconditionerSet {
 public:
  PreconditionerSet() = default;
  PreconditionerSet(const SparseMatrix& a1, const SparseMatrix& a2, std::vector<double> taus);

  static std::vector<double> default_taus() { return {1e-8, 1e-4, 1e-2}; }

  Index count() const { return static_cast<Index>(taus_.size()); }
  double tau(Index j) const { return taus_[static_cast<std::size_t>(j)]; }
  const std::vector<double>& taus() const { return taus_; }
  const SparseFactorization& factor(Index j) const { return factors_[static_cast<std::size_t>(j)]; }
  Vector apply_inverse(Index j, const Vector& v) const { return factor(j).solve(v); }

 private:
  std::vector<double> taus_;
  std::vector<SparseFactorization> factors_;
};

struct KrylovOptions {
  double tol = 1e-8;
  int max_iter = 100;
  bool record_history = false;
  /// Keep V, H-bar and the column bookkeeping for inspection.
  bool keep_arnoldi = false;
  /// Number of shifts whose true residual is recomputed at convergence.
  int verify_shifts = 3;
};

/// Multipreconditioned Arnoldi quantities: A2 Z = V Hbar, column c of Z is
/// P_{tau(c)}^{-1} V.col(source(c)).
struct MPArnoldiState {
  Matrix v;
  Matrix hbar;
  std::vector<Index> source;
  std::vector<double> tau;

  /// Hbar(sigma; T) = [E; 0] + Hbar (sigma I - T), restricted to the current columns.
  Matrix shifted_hessenberg(double sigma) const;
};

struct ShiftedReport {
  int iterations = 0;
  Index basis_dim = 0;
  bool converged = false;
  Vector residuals;                        // final relative residual per shift
  std::vector<Vector> history;             // one entry per iteration when recorded
  std::vector<std::pair<Index, double>> verified;  // (shift index, true relative residual)

  double worst_residual() const { return residuals.size() ? residuals.maxCoeff() : 0.0; }
};

/// Solutions x_j = Z y_j, kept in factored form so that weighted sums over
/// hundreds of shifts never materialize every x_j.
struct ShiftedSolution {
  Matrix z;       // n x (m n_p)
  Matrix coeffs;  // (m n_p) x N_sigma
  ShiftedReport report;
  MPArnoldiState arnoldi;  // filled when keep_arnoldi

  Vector solution(Index j) const { return z * coeffs.col(j); }
  Matrix solutions() const { return z * coeffs; }
  /// sum_j w_j x_j
  Vector combine(const Vector& weights) const { return z * (coeffs * weights); }
};

/// MPGMRES-Sh with linear basis growth: each iteration applies every P_j^{-1}
/// to the newest basis vector, orthonormalizes A2 Z against V (modified
/// Gram-Schmidt, one reorthogonalization pass) and solves the small
/// least-squares problem of every shift. Throws ConvergenceError when
/// max_iter passes with an unconverged shift.
ShiftedSolution solve_shifted(const ShiftedFamily& family, const PreconditionerSet& precs, const Vector& d,
                              const KrylovOptions& opts = {});

/// Per-shift residual norms per iteration (requires record_history).
const std::vector<Vector>& residual_history(const ShiftedSolution& solution);

/// Thrown by direct_shifted when a shifted matrix cannot be factorized.
class ShiftNotSpdError : public NotSpdError {
 public:
  ShiftNotSpdError(Index shift, Index pivot)
      : NotSpdError("shifted matrix " + std::to_string(shift) + " is not positive definite", pivot), shift_(shift) {}
  Index shift_index() const { return shift_; }

 private:
  Index shift_;
};

/// Factorizes every A1 + sigma_j A2 (sharing the symbolic analysis) and solves.
Matrix direct_shifted(const ShiftedFamily& family, const Vector& d);

/// sum_j w_j (A1 + sigma_j A2)^{-1} d without storing the individual solutions.
Vector direct_shifted_combined(const ShiftedFamily& family, const Vector& d, const Vector& weights);

}  // namespace whittle
