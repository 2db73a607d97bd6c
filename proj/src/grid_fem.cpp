#include "whittle/grid_fem.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace whittle {

namespace {

// Relative pivot floor: pivots below this fraction of the matching diagonal
// entry are treated as zero.
constexpr double kPivotTolerance = 1e-10;

struct GaussPoint {
  double xi, eta;
};

constexpr double kGaussLo = 0.5 - 0.5 / 1.7320508075688772;
constexpr double kGaussHi = 0.5 + 0.5 / 1.7320508075688772;
constexpr std::array<GaussPoint, 4> kGauss{{{kGaussLo, kGaussLo},
                                            {kGaussHi, kGaussLo},
                                            {kGaussLo, kGaussHi},
                                            {kGaussHi, kGaussHi}}};

// Local node a has offsets (a & 1, a >> 1) from the element's lower-left node.
inline double shape(int a, double xi, double eta) {
  const double fx = (a & 1) ? xi : 1.0 - xi;
  const double fy = (a >> 1) ? eta : 1.0 - eta;
  return fx * fy;
}

inline Eigen::Vector2d shape_grad(int a, double xi, double eta, double hx, double hy) {
  const double fx = (a & 1) ? xi : 1.0 - xi;
  const double fy = (a >> 1) ? eta : 1.0 - eta;
  const double dx = ((a & 1) ? 1.0 : -1.0) / hx;
  const double dy = ((a >> 1) ? 1.0 : -1.0) / hy;
  return {dx * fy, fx * dy};
}

template <typename ElementKernel>
SparseMatrix assemble(const Grid& grid, ElementKernel&& kernel) {
  grid.validate();
  const Index n = grid.num_nodes();
  std::vector<Eigen::Triplet<double, int>> triplets;
  triplets.reserve(static_cast<std::size_t>((grid.nx - 1) * (grid.ny - 1) * 16));
  Eigen::Matrix4d local;
  std::array<Index, 4> nodes{};
  for (Index ej = 0; ej + 1 < grid.ny; ++ej) {
    for (Index ei = 0; ei + 1 < grid.nx; ++ei) {
      for (int a = 0; a < 4; ++a) nodes[a] = grid.index(ei + (a & 1), ej + (a >> 1));
      local.setZero();
      kernel(nodes, local);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          triplets.emplace_back(static_cast<int>(nodes[a]), static_cast<int>(nodes[b]), local(a, b));
    }
  }
  SparseMatrix out(n, n);
  out.setFromTriplets(triplets.begin(), triplets.end());
  out.makeCompressed();
  return out;
}

Eigen::VectorXd permuted_diagonal(const SparseMatrix& a, const Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int>& p) {
  Eigen::VectorXd diag = a.diagonal();
  if (p.size() == 0) return diag;
  Eigen::VectorXd out(diag.size());
  for (Index i = 0; i < diag.size(); ++i) out(p.indices()(i)) = diag(i);
  return out;
}

Index original_index(const Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int>& p, Index k) {
  if (p.size() == 0) return k;
  for (Index i = 0; i < p.size(); ++i)
    if (p.indices()(i) == k) return i;
  return k;
}

// Locates the first unsafe pivot with an LDL^T factorization in the same ordering.
template <typename Ordering>
Index find_bad_pivot(const Eigen::SparseMatrix<double, Eigen::ColMajor, int>& a, const SparseMatrix& csr) {
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double, Eigen::ColMajor, int>, Eigen::Lower, Ordering> ldlt;
  ldlt.compute(a);
  const Eigen::VectorXd diag = permuted_diagonal(csr, ldlt.permutationP());
  const Eigen::VectorXd d = ldlt.vectorD();
  Index worst = 0;
  for (Index k = 0; k < d.size(); ++k) {
    if (!(d(k) > kPivotTolerance * std::abs(diag(k)))) return original_index(ldlt.permutationP(), k);
    if (d(k) / diag(k) < d(worst) / diag(worst)) worst = k;
  }
  return original_index(ldlt.permutationP(), worst);
}

template <typename Llt, typename Ordering>
std::shared_ptr<const Llt> checked_llt(const SparseMatrix& a) {
  if (a.rows() != a.cols()) throw ValidationError("factorize: matrix is not square");
  const Eigen::SparseMatrix<double, Eigen::ColMajor, int> col = a;
  auto llt = std::make_shared<Llt>();
  llt->compute(col);
  if (llt->info() != Eigen::Success)
    throw NotSpdError("factorize: matrix is not positive definite", find_bad_pivot<Ordering>(col, a));
  const Eigen::VectorXd diag = permuted_diagonal(a, llt->permutationP());
  const auto& l = llt->matrixL().nestedExpression();
  for (Index k = 0; k < a.rows(); ++k) {
    const double lkk = l.coeff(k, k);
    if (!(lkk * lkk > kPivotTolerance * std::abs(diag(k))))
      throw NotSpdError("factorize: matrix is numerically singular", original_index(llt->permutationP(), k));
  }
  return llt;
}

}  // namespace

void Grid::validate() const {
  if (nx < 2 || ny < 2)
    throw ValidationError("invalid grid: need at least 2 points per dimension, got " + std::to_string(nx) + "x" +
                          std::to_string(ny));
  if (!(x1 > x0) || !(y1 > y0)) throw ValidationError("invalid grid: degenerate domain");
}

Tensor2 Tensor2::rotated(double l1sq, double l2sq, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix2d r;
  r << c, s, -s, c;
  const Eigen::Matrix2d m = r * Eigen::Vector2d(l1sq, l2sq).asDiagonal() * r.transpose();
  return {m(0, 0), 0.5 * (m(0, 1) + m(1, 0)), m(1, 1)};
}

Tensor2 Tensor2::from_matrix(const Eigen::Matrix2d& m) {
  if (m(0, 1) != m(1, 0)) throw ValidationError("theta must be exactly symmetric");
  return {m(0, 0), m(0, 1), m(1, 1)};
}

Coefficients Coefficients::constant(double kappa2, Tensor2 theta) {
  Coefficients c;
  c.kappa2 = Vector::Constant(1, kappa2);
  c.theta = {theta};
  return c;
}

void Coefficients::validate(const Grid& grid) const {
  const Index n = grid.num_nodes();
  if (kappa2.size() != 1 && kappa2.size() != n)
    throw ValidationError("kappa2 must be a scalar or one value per node");
  if (theta.size() != 1 && static_cast<Index>(theta.size()) != n)
    throw ValidationError("theta must be constant or one tensor per node");
  for (Index i = 0; i < kappa2.size(); ++i)
    if (!(kappa2(i) >= 0.0) || !std::isfinite(kappa2(i)))
      throw ValidationError("kappa2 must be finite and nonnegative");
  for (const auto& t : theta)
    if (!t.positive_definite()) throw ValidationError("theta is not symmetric positive definite");
}

SparseMatrix assemble_mass(const Grid& grid) {
  const double weight = 0.25 * grid.hx() * grid.hy();
  return assemble(grid, [&](const std::array<Index, 4>&, Eigen::Matrix4d& local) {
    for (const auto& gp : kGauss) {
      Eigen::Vector4d phi;
      for (int a = 0; a < 4; ++a) phi(a) = shape(a, gp.xi, gp.eta);
      local.noalias() += weight * phi * phi.transpose();
    }
  });
}

SparseMatrix assemble_stiffness(const Grid& grid, const Coefficients& coeff) {
  grid.validate();
  coeff.validate(grid);
  const double hx = grid.hx(), hy = grid.hy();
  const double weight = 0.25 * hx * hy;
  return assemble(grid, [&](const std::array<Index, 4>& nodes, Eigen::Matrix4d& local) {
    for (const auto& gp : kGauss) {
      Eigen::Vector4d phi;
      Eigen::Matrix<double, 2, 4> grad;
      for (int a = 0; a < 4; ++a) {
        phi(a) = shape(a, gp.xi, gp.eta);
        grad.col(a) = shape_grad(a, gp.xi, gp.eta, hx, hy);
      }
      double k2 = 0.0;
      Eigen::Matrix2d theta = Eigen::Matrix2d::Zero();
      for (int a = 0; a < 4; ++a) {
        k2 += phi(a) * coeff.kappa2_at(nodes[a]);
        theta += phi(a) * coeff.theta_at(nodes[a]).matrix();
      }
      local.noalias() += weight * (grad.transpose() * theta * grad + k2 * phi * phi.transpose());
    }
  });
}

SparseFactorization::SparseFactorization(const SparseMatrix& a, Ordering ordering) : n_(a.rows()) {
  if (ordering == Ordering::kAmd)
    amd_ = checked_llt<AmdLlt, Eigen::AMDOrdering<int>>(a);
  else
    natural_ = checked_llt<NaturalLlt, Eigen::NaturalOrdering<int>>(a);
}

Vector SparseFactorization::solve(const Vector& b) const {
  if (b.size() != n_) throw ValidationError("solve: dimension mismatch");
  return amd_ ? Vector(amd_->solve(b)) : Vector(natural_->solve(b));
}

Matrix SparseFactorization::solve(const Matrix& b) const {
  if (b.rows() != n_) throw ValidationError("solve: dimension mismatch");
  return amd_ ? Matrix(amd_->solve(b)) : Matrix(natural_->solve(b));
}

void SparseFactorization::require_natural(const char* what) const {
  if (!natural_) throw ValidationError(std::string(what) + " requires a natural-ordering factorization");
}

Vector SparseFactorization::apply_lower(const Vector& w) const {
  require_natural("apply_lower");
  return natural_->matrixL() * w;
}

Vector SparseFactorization::apply_lower_transpose(const Vector& w) const {
  require_natural("apply_lower_transpose");
  return natural_->matrixU() * w;
}

Eigen::SparseMatrix<double> SparseFactorization::lower() const {
  require_natural("lower");
  return natural_->matrixL();
}

SparseFactorization factorize(const SparseMatrix& a) { return SparseFactorization(a); }

SparseFactorization cholesky_mass(const SparseMatrix& m) {
  return SparseFactorization(m, SparseFactorization::Ordering::kNatural);
}

void write_matrix_market(std::ostream& out, const SparseMatrix& a) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
  out << std::setprecision(17);
  for (Index r = 0; r < a.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(a, r); it; ++it) out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
}

SparseMatrix read_matrix_market(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("%%MatrixMarket matrix coordinate real", 0) != 0)
    throw FormatError("matrix market: unsupported header");
  const bool symmetric = line.find("symmetric") != std::string::npos;
  while (std::getline(in, line) && !line.empty() && line[0] == '%') {
  }
  std::istringstream dims(line);
  dims.imbue(std::locale::classic());
  Index rows = 0, cols = 0, nnz = 0;
  if (!(dims >> rows >> cols >> nnz)) throw FormatError("matrix market: bad size line");
  std::vector<Eigen::Triplet<double, int>> triplets;
  triplets.reserve(static_cast<std::size_t>(nnz) * (symmetric ? 2 : 1));
  for (Index k = 0; k < nnz; ++k) {
    if (!std::getline(in, line)) throw FormatError("matrix market: truncated at entry " + std::to_string(k + 1));
    std::istringstream row(line);
    row.imbue(std::locale::classic());
    Index i = 0, j = 0;
    double v = 0.0;
    if (!(row >> i >> j >> v) || i < 1 || j < 1 || i > rows || j > cols)
      throw FormatError("matrix market: bad entry " + std::to_string(k + 1));
    triplets.emplace_back(static_cast<int>(i - 1), static_cast<int>(j - 1), v);
    if (symmetric && i != j) triplets.emplace_back(static_cast<int>(j - 1), static_cast<int>(i - 1), v);
  }
  SparseMatrix a(rows, cols);
  a.setFromTriplets(triplets.begin(), triplets.end());
  a.makeCompressed();
  return a;
}

}  // namespace whittle
