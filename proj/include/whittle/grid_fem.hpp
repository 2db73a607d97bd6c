#pragma once

#include "whittle/types.hpp"

#include <Eigen/SparseCholesky>

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace whittle {

/// Structured grid of nx * ny nodes on an axis-aligned rectangle.
/// Node (i, j) has index j * nx + i.
struct Grid {
  Index nx = 2;
  Index ny = 2;
  double x0 = 0.0, x1 = 1.0;
  double y0 = 0.0, y1 = 1.0;

  Grid() = default;
  Grid(Index nx_, Index ny_) : nx(nx_), ny(ny_) {}
  Grid(Index nx_, Index ny_, double x0_, double x1_, double y0_, double y1_)
      : nx(nx_), ny(ny_), x0(x0_), x1(x1_), y0(y0_), y1(y1_) {}

  static Grid unit_square(Index n) { return Grid(n, n); }

  Index num_nodes() const { return nx * ny; }
  Index index(Index i, Index j) const { return j * nx + i; }
  double hx() const { return (x1 - x0) / static_cast<double>(nx - 1); }
  double hy() const { return (y1 - y0) / static_cast<double>(ny - 1); }
  double x(Index i) const { return x0 + static_cast<double>(i) * hx(); }
  double y(Index j) const { return y0 + static_cast<double>(j) * hy(); }
  double area() const { return (x1 - x0) * (y1 - y0); }

  /// Mesh parameter for the sinc step: one over the points per dimension.
  double quad_h() const { return 1.0 / static_cast<double>(nx); }

  /// Throws ValidationError unless nx, ny >= 2 and the rectangle is nondegenerate.
  void validate() const;

  bool operator==(const Grid&) const = default;
};

/// Symmetric 2x2 diffusion tensor, stored by its three distinct entries.
struct Tensor2 {
  double t11 = 1.0, t12 = 0.0, t22 = 1.0;

  static Tensor2 identity() { return {}; }
  /// R diag(l1sq, l2sq) R^T with R = [cos a, sin a; -sin a, cos a].
  static Tensor2 rotated(double l1sq, double l2sq, double angle);
  static Tensor2 from_matrix(const Eigen::Matrix2d& m);

  Eigen::Matrix2d matrix() const {
    Eigen::Matrix2d m;
    m << t11, t12, t12, t22;
    return m;
  }
  bool positive_definite() const { return t11 > 0.0 && t11 * t22 - t12 * t12 > 0.0; }
};

/// Coefficients of kappa^2 - div(Theta grad). Either field holds a single
/// value (constant) or one value per node.
struct Coefficients {
  Vector kappa2 = Vector::Constant(1, 1.0);
  std::vector<Tensor2> theta{Tensor2::identity()};

  static Coefficients constant(double kappa2, Tensor2 theta = Tensor2::identity());

  bool constant_kappa2() const { return kappa2.size() == 1; }
  bool constant_theta() const { return theta.size() == 1; }
  double kappa2_at(Index node) const { return constant_kappa2() ? kappa2(0) : kappa2(node); }
  const Tensor2& theta_at(Index node) const { return constant_theta() ? theta[0] : theta[node]; }

  /// Throws ValidationError on size mismatch, negative kappa^2 or a non-SPD tensor.
  void validate(const Grid& grid) const;
};

/// Q1 mass matrix.
SparseMatrix assemble_mass(const Grid& grid);

/// Q1 stiffness matrix of kappa^2 - div(Theta grad) with natural (zero Neumann)
/// boundary conditions. Coefficients are interpolated bilinearly and integrated
/// with 2x2 Gauss points, which is exact for bilinear coefficient fields.
SparseMatrix assemble_stiffness(const Grid& grid, const Coefficients& coeff);

/// Sparse Cholesky factorization with fill-reducing ordering. Immutable and
/// cheap to copy; solves are safe from several threads.
class SparseFactorization {
 public:
  enum class Ordering { kAmd, kNatural };

  SparseFactorization() = default;
  explicit SparseFactorization(const SparseMatrix& a, Ordering ordering = Ordering::kAmd);

  Index size() const { return n_; }
  bool empty() const { return n_ == 0; }

  Vector solve(const Vector& b) const;
  Matrix solve(const Matrix& b) const;

  /// w -> L w where A = L L^T. Only defined for natural ordering.
  Vector apply_lower(const Vector& w) const;
  /// w -> L^T w. Only defined for natural ordering.
  Vector apply_lower_transpose(const Vector& w) const;
  /// Lower factor as a sparse column-major matrix (natural ordering only).
  Eigen::SparseMatrix<double> lower() const;

 private:
  using ColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
  using AmdLlt = Eigen::SimplicialLLT<ColMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;
  using NaturalLlt = Eigen::SimplicialLLT<ColMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>>;

  void require_natural(const char* what) const;

  Index n_ = 0;
  std::shared_ptr<const AmdLlt> amd_;
  std::shared_ptr<const NaturalLlt> natural_;
};

/// Factorize a symmetric positive definite matrix. Throws NotSpdError carrying
/// the (original) row index of the first pivot that is not safely positive.
SparseFactorization factorize(const SparseMatrix& a);

/// Natural-ordering Cholesky of the mass matrix, exposing the lower factor.
SparseFactorization cholesky_mass(const SparseMatrix& m);

/// Matrix Market coordinate (real general), 17 significant digits.
void write_matrix_market(std::ostream& out, const SparseMatrix& a);
SparseMatrix read_matrix_market(std::istream& in);

}  // namespace whittle
