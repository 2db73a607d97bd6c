#include "test_util.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <sstream>

using namespace whittle;
using whittle::test::dense;

TEST_CASE("mass of a single element integrates to the area") {
  const SparseMatrix m = assemble_mass(Grid(2, 2));
  CHECK(dense(m).sum() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("mass row sums give the lumped mass of a rectangle") {
  const Grid g(5, 4, 0.0, 2.0, -1.0, 2.0);
  const Vector lumped = assemble_mass(g) * Vector::Ones(g.num_nodes());
  CHECK(lumped.sum() == doctest::Approx(6.0).epsilon(1e-14));
  CHECK(lumped.minCoeff() > 0.0);
}

TEST_CASE("3x3 mass is the Kronecker product of 1-D hat integrals") {
  const double h = 0.5;
  Matrix m1(3, 3);
  m1 << h / 3, h / 6, 0, h / 6, 2 * h / 3, h / 6, 0, h / 6, h / 3;
  Matrix kron(9, 9);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) kron.block(3 * a, 3 * b, 3, 3) = m1(a, b) * m1;
  CHECK((dense(assemble_mass(Grid(3, 3))) - kron).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("Neumann Laplacian annihilates constants") {
  const Grid g(7, 5);
  const SparseMatrix k = assemble_stiffness(g, Coefficients::constant(0.0));
  CHECK((k * Vector::Ones(g.num_nodes())).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("constant reaction term integrates to c times the area") {
  const Grid g(6, 9, 0.0, 3.0, 0.0, 0.5);
  const Vector one = Vector::Ones(g.num_nodes());
  const SparseMatrix k = assemble_stiffness(g, Coefficients::constant(7.0, Tensor2::rotated(3.0, 0.5, 0.3)));
  CHECK(one.dot(k * one) == doctest::Approx(7.0 * 1.5).epsilon(1e-13));
}

TEST_CASE("bilinear kappa^2 field is integrated exactly") {
  const Grid g(9, 9);
  Coefficients c;
  c.kappa2 = whittle::test::nodal(g, [](double x, double y) { return 1.0 + x + 2.0 * x * y; });
  const Vector one = Vector::Ones(g.num_nodes());
  CHECK(one.dot(assemble_stiffness(g, c) * one) == doctest::Approx(2.0).epsilon(1e-13));
}

TEST_CASE("smallest pencil eigenvalue equals kappa^2 with constant eigenvector") {
  const Grid g = Grid::unit_square(33);
  const Matrix m = dense(assemble_mass(g));
  const Matrix k = dense(assemble_stiffness(g, Coefficients::constant(100.0)));
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> eig(k, m);
  REQUIRE(eig.info() == Eigen::Success);
  CHECK(eig.eigenvalues()(0) == doctest::Approx(100.0).epsilon(1e-10));
  Vector psi = eig.eigenvectors().col(0);
  psi /= psi(0);
  CHECK((psi - Vector::Ones(g.num_nodes())).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("patch test: linear fields have exact energy") {
  const Grid g(11, 7, -1.0, 2.0, 0.0, 1.5);
  const SparseMatrix k = assemble_stiffness(g, Coefficients::constant(0.0));
  const double a = 0.7, b = -1.3, c = 2.1;
  Vector u(g.num_nodes());
  for (Index j = 0; j < g.ny; ++j)
    for (Index i = 0; i < g.nx; ++i) u(g.index(i, j)) = a + b * g.x(i) + c * g.y(j);
  CHECK(u.dot(k * u) == doctest::Approx((b * b + c * c) * g.area()).epsilon(1e-12));
}

TEST_CASE("M^{-1} K is self-adjoint in the M inner product") {
  const Grid g(12, 12);
  RandomStream rng(3);
  const SparseMatrix m = assemble_mass(g);
  const SparseMatrix k = assemble_stiffness(g, Coefficients::constant(5.0, Tensor2::rotated(2.0, 1.0, 0.4)));
  const SparseFactorization mf = factorize(m);
  const Vector u = rng.normal_vector(g.num_nodes()), v = rng.normal_vector(g.num_nodes());
  const Vector bu = mf.solve(Vector(k * u)), bv = mf.solve(Vector(k * v));
  const double lhs = u.dot(m * bv), rhs = bu.dot(m * v);
  CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(lhs));
}

TEST_CASE("constant-coefficient matrices are invariant under grid rotation") {
  const Index n = 8;
  const Grid g = Grid::unit_square(n);
  std::vector<int> perm(static_cast<std::size_t>(g.num_nodes()));
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(g.index(i, j))] = static_cast<int>(g.index(j, n - 1 - i));
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> p(g.num_nodes());
  for (std::size_t q = 0; q < perm.size(); ++q) p.indices()(static_cast<Index>(q)) = perm[q];
  for (const Matrix& a : {dense(assemble_mass(g)), dense(assemble_stiffness(g, Coefficients::constant(3.0)))}) {
    const Matrix rotated = p * a * p.transpose();
    CHECK((rotated - a).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("invalid grids and coefficients are rejected") {
  CHECK_THROWS_AS(assemble_mass(Grid(1, 4)), ValidationError);
  CHECK_THROWS_AS(assemble_mass(Grid(3, 3, 0.0, 0.0, 0.0, 1.0)), ValidationError);
  Coefficients bad = Coefficients::constant(1.0);
  bad.theta[0] = Tensor2{1.0, 2.0, 1.0};
  CHECK_THROWS_AS(assemble_stiffness(Grid(3, 3), bad), ValidationError);
  CHECK_THROWS_AS(assemble_stiffness(Grid(3, 3), Coefficients::constant(-1.0)), ValidationError);
  Coefficients wrong_size;
  wrong_size.kappa2 = Vector::Ones(5);
  CHECK_THROWS_AS(assemble_stiffness(Grid(3, 3), wrong_size), ValidationError);
}

TEST_CASE("factorize: identity, mass solve accuracy, singular Laplacian") {
  SparseMatrix id(6, 6);
  id.setIdentity();
  RandomStream rng(1);
  const Vector b6 = rng.normal_vector(6);
  CHECK(factorize(id).solve(b6) == b6);

  const SparseMatrix m = assemble_mass(Grid::unit_square(33));
  const Vector b = rng.normal_vector(m.rows());
  const Vector x = factorize(m).solve(b);
  CHECK((m * x - b).norm() / b.norm() <= 1e-12);

  CHECK_THROWS_AS(factorize(assemble_stiffness(Grid(9, 9), Coefficients::constant(0.0))), NotSpdError);
}

TEST_CASE("not-SPD error reports the offending pivot") {
  SparseMatrix a(3, 3);
  a.insert(0, 0) = 1.0;
  a.insert(1, 1) = 2.0;
  a.insert(2, 2) = -1.0;
  a.makeCompressed();
  try {
    factorize(a);
    FAIL("expected NotSpdError");
  } catch (const NotSpdError& e) {
    CHECK(e.pivot() == 2);
  }
}

TEST_CASE("mass Cholesky exposes its lower factor") {
  SparseMatrix d(4, 4);
  d.setIdentity();
  d *= 4.0;
  const Matrix l = Matrix(cholesky_mass(d).lower());
  CHECK((l - 2.0 * Matrix::Identity(4, 4)).norm() < 1e-15);

  const SparseMatrix m = assemble_mass(Grid::unit_square(65));
  const SparseFactorization c = cholesky_mass(m);
  RandomStream rng(2);
  const Vector x = rng.normal_vector(m.rows());
  const Vector mx = m * x;
  CHECK((c.apply_lower(c.apply_lower_transpose(x)) - mx).norm() <= 1e-12 * mx.norm());
  CHECK_THROWS_AS(factorize(m).apply_lower(x), ValidationError);
}

TEST_CASE("L w has covariance M") {
  const SparseMatrix m = assemble_mass(Grid(3, 3));
  const Matrix md = dense(m);
  const SparseFactorization c = cholesky_mass(m);
  RandomStream rng(11);
  const int n = 10000;
  Matrix acc = Matrix::Zero(9, 9);
  for (int s = 0; s < n; ++s) {
    const Vector x = c.apply_lower(rng.normal_vector(9));
    acc += x * x.transpose();
  }
  acc /= n;
  for (Index i = 0; i < 9; ++i)
    for (Index j = 0; j < 9; ++j) {
      const double se = std::sqrt((md(i, i) * md(j, j) + md(i, j) * md(i, j)) / n);
      CHECK(std::abs(acc(i, j) - md(i, j)) <= 5.0 * se);
    }
}

TEST_CASE("matrix market round trip") {
  const SparseMatrix k = assemble_stiffness(Grid(5, 4), Coefficients::constant(2.0, Tensor2::rotated(1.5, 0.5, 1.0)));
  std::stringstream ss;
  write_matrix_market(ss, k);
  const SparseMatrix back = read_matrix_market(ss);
  CHECK(back.rows() == k.rows());
  CHECK((dense(back) - dense(k)).cwiseAbs().maxCoeff() == 0.0);
  std::stringstream junk("%%MatrixMarket matrix array real general\n1 1\n1\n");
  CHECK_THROWS_AS(read_matrix_market(junk), FormatError);
}
