#include "test_util.hpp"

#include "whittle/covariance.hpp"
#include "whittle/inversion.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>

using namespace whittle;
using whittle::test::rel_err;

namespace {

Matrix random_spd_dense(Index n, RandomStream& rng) {
  const Matrix r = rng.normal_matrix(n, n);
  return r * r.transpose() / static_cast<double>(n) + 0.1 * Matrix::Identity(n, n);
}

LinearMap dense_map(const Matrix& a) {
  return [a](const Vector& v) { return Vector(a * v); };
}

// Plain Golub-Kahan with full reorthogonalization: A V = U B, B lower bidiagonal.
Matrix textbook_gk(const Matrix& a, const Vector& b, Index k) {
  const Index m = a.rows(), n = a.cols();
  Matrix u = Matrix::Zero(m, k + 1), v = Matrix::Zero(n, k), bd = Matrix::Zero(k + 1, k);
  u.col(0) = b.normalized();
  for (Index i = 0; i < k; ++i) {
    Vector w = a.transpose() * u.col(i);
    if (i > 0) w -= bd(i, i - 1) * v.col(i - 1);
    for (int pass = 0; pass < 2; ++pass) w -= v.leftCols(i) * (v.leftCols(i).transpose() * w);
    bd(i, i) = w.norm();
    v.col(i) = w / bd(i, i);
    Vector p = a * v.col(i) - bd(i, i) * u.col(i);
    for (int pass = 0; pass < 2; ++pass) p -= u.leftCols(i + 1) * (u.leftCols(i + 1).transpose() * p);
    bd(i + 1, i) = p.norm();
    u.col(i + 1) = p / bd(i + 1, i);
  }
  return bd;
}

struct SmallProblem {
  Matrix f, q;
  Vector inv_var, b;
};

SmallProblem small_problem(Index ny, Index nx, RandomStream& rng) {
  SmallProblem p;
  p.f = rng.normal_matrix(ny, nx);
  p.q = random_spd_dense(nx, rng);
  p.inv_var = Vector::Ones(ny) + rng.normal_vector(ny).cwiseAbs();
  p.b = rng.normal_vector(ny);
  return p;
}

}  // namespace

TEST_CASE("gen-GK breaks down at once for a zero operator") {
  const LinearForward f = LinearForward::from_dense(Matrix::Zero(6, 5), "zero");
  RandomStream rng(40);
  GenGK gk(f, Vector::Ones(6), dense_map(Matrix::Identity(5, 5)), rng.normal_vector(6));
  CHECK_FALSE(gk.expand());
  CHECK(gk.k() == 0);
  CHECK(gk.broken_down());
  const PosteriorVariance pv = posterior_variance(gk, 2.0, Vector::Constant(5, 3.0));
  CHECK(pv.variance == Vector::Constant(5, 0.75));
  CHECK(pv.update.norm() == 0.0);
}

TEST_CASE("gen-GK with identity weights is textbook Golub-Kahan") {
  RandomStream rng(41);
  const Matrix a = rng.normal_matrix(50, 50);
  const Vector b = rng.normal_vector(50);
  GenGK gk(LinearForward::from_dense(a, "dense"), Vector::Ones(50), dense_map(Matrix::Identity(50, 50)), b);
  CHECK(gk.expand_to(20) == 20);
  CHECK(gk.delta1() == doctest::Approx(b.norm()));
  CHECK((gk.bidiagonal() - textbook_gk(a, b, 20)).norm() <= 1e-10 * a.norm());
}

TEST_CASE("gen-GK equals Golub-Kahan of the whitened operator") {
  RandomStream rng(42);
  const SmallProblem p = small_problem(40, 30, rng);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(p.q);
  const Matrix q_half = eig.operatorSqrt();
  const Vector w = p.inv_var.cwiseSqrt();
  const Matrix a = w.asDiagonal() * p.f * q_half;
  GenGK gk(LinearForward::from_dense(p.f, "dense"), p.inv_var, dense_map(p.q), p.b);
  gk.expand_to(15);
  CHECK((gk.bidiagonal() - textbook_gk(a, Vector(w.cwiseProduct(p.b)), 15)).norm() <= 1e-9 * a.norm());
}

TEST_CASE("gen-GK orthogonality and recurrence invariants") {
  RandomStream rng(43);
  const SmallProblem p = small_problem(60, 81, rng);
  GenGK gk(LinearForward::from_dense(p.f, "dense"), p.inv_var, dense_map(p.q), p.b);
  gk.expand_to(40);
  const Matrix u = gk.u(), v = gk.v();
  const Index k = gk.k();
  CHECK((u.transpose() * p.inv_var.asDiagonal() * u - Matrix::Identity(k + 1, k + 1)).norm() <= 1e-8);
  CHECK((v.transpose() * p.q * v - Matrix::Identity(k, k)).norm() <= 1e-8);
  CHECK((gk.qv() - p.q * v).norm() <= 1e-10 * gk.qv().norm());
  const Matrix lhs = p.f * p.q * v;
  CHECK((lhs - u * gk.bidiagonal()).norm() <= 1e-10 * lhs.norm());
  const Matrix rhs = p.f.transpose() * p.inv_var.asDiagonal() * u.leftCols(k);
  CHECK((rhs - v * gk.bidiagonal().topRows(k).transpose()).norm() <= 1e-10 * rhs.norm());
}

TEST_CASE("gen-GK basis spans the Krylov space") {
  RandomStream rng(44);
  const SmallProblem p = small_problem(30, 81, rng);
  GenGK gk(LinearForward::from_dense(p.f, "dense"), p.inv_var, dense_map(p.q), p.b);
  const Index k = 6;
  gk.expand_to(k);
  const Matrix op = p.f.transpose() * p.inv_var.asDiagonal() * p.f * p.q;
  Matrix kry(81, k);
  kry.col(0) = p.f.transpose() * p.inv_var.cwiseProduct(p.b);
  for (Index i = 1; i < k; ++i) kry.col(i) = op * kry.col(i - 1);
  const Matrix basis = kry.householderQr().householderQ() * Matrix::Identity(81, k);
  const Matrix v = gk.v();
  CHECK((v - basis * (basis.transpose() * v)).norm() <= 1e-8 * v.norm());
}

TEST_CASE("projected Tikhonov solutions") {
  RandomStream rng(45);
  const Matrix b = rng.normal_matrix(11, 10);
  const double lambda = 0.37, d1 = 2.0;
  const ProjectedSolution ps = solve_projected(b, d1, lambda);
  const Vector rhs = d1 * b.transpose().col(0);
  const Vector ref = (b.transpose() * b + lambda * lambda * Matrix::Identity(10, 10)).ldlt().solve(rhs);
  CHECK(rel_err(ps.y, ref) <= 1e-10);
  Vector e1 = Vector::Zero(11);
  e1(0) = d1;
  CHECK(ps.residual == doctest::Approx((b * ps.y - e1).norm()).epsilon(1e-12));

  CHECK(solve_projected(b, d1, 1e12).y.norm() <= 1e-10);
  const Matrix sq = rng.normal_matrix(6, 6);
  Vector e = Vector::Zero(6);
  e(0) = d1;
  CHECK(rel_err(solve_projected(sq, d1, 0.0).y, Vector(sq.partialPivLu().solve(e))) <= 1e-10);
}

TEST_CASE("projected GCV agrees with its matrix definition") {
  RandomStream rng(46);
  const Matrix b = rng.normal_matrix(8, 7);
  const double d1 = 1.5;
  for (double w : {1.0, 0.4}) {
    const ProjectedGcv g(b, d1, w);
    for (double lam : {1e-3, 0.1, 2.0, 30.0}) {
      const Matrix hat = b * (b.transpose() * b + lam * lam * Matrix::Identity(7, 7)).ldlt().solve(b.transpose());
      Vector e1 = Vector::Zero(8);
      e1(0) = d1;
      const double num = ((Matrix::Identity(8, 8) - hat) * e1).squaredNorm();
      const double tr = (Matrix::Identity(8, 8) - w * hat).trace();
      CHECK(g(lam) == doctest::Approx(7.0 * num / (tr * tr)).epsilon(1e-10));
    }
  }
}

TEST_CASE("GCV parameter choice on closed-form cases") {
  Matrix b = Matrix::Zero(4, 3);
  b.topRows(3).setIdentity();
  const GcvResult r = select_lambda_gcv(b, 1.0);
  CHECK(r.lambda == kGcvLambdaMin);
  CHECK_FALSE(r.flat);
  const ProjectedGcv g(b, 1.0);
  double prev = 0.0;
  for (double lam = 1e-6; lam < 1e6; lam *= 10) {
    CHECK(g(lam) >= prev);
    prev = g(lam);
  }
  const GcvResult flat = select_lambda_gcv(Matrix::Identity(3, 3), 1.0);
  CHECK(flat.flat);
  CHECK(flat.lambda == doctest::Approx(1.0));

  RandomStream rng(47);
  Matrix consistent = Matrix::Zero(6, 5);
  consistent.topRows(5) = rng.normal_matrix(5, 5) + 5.0 * Matrix::Identity(5, 5);
  CHECK(select_lambda_gcv(consistent, 2.0).lambda <= 1e-6);
}

TEST_CASE("zero residual data returns the prior mean") {
  RandomStream rng(48);
  const SmallProblem p = small_problem(20, 30, rng);
  const LinearForward f = LinearForward::from_dense(p.f, "dense");
  const Vector m_pr = rng.normal_vector(30);
  NoiseModel noise{p.inv_var.cwiseInverse(), 0.0};
  const MapRun run = map_estimate(f, noise, dense_map(p.q), m_pr, f.apply(m_pr));
  CHECK(run.result.m_post == m_pr);
  CHECK(run.result.converged);
}

TEST_CASE("MAP at fixed lambda matches the dense posterior mean") {
  const Grid g(9, 9);
  const Matrix q = dense_cov(g, Coefficients::constant(10.0), 2.5).q;
  RandomStream rng(49);
  const Matrix fm = rng.normal_matrix(30, 81);
  const LinearForward f = LinearForward::from_dense(fm, "dense");
  const Vector m_pr = rng.normal_vector(81);
  const Vector y = rng.normal_vector(30);
  NoiseModel noise{Vector::Constant(30, 0.01) + 0.01 * rng.normal_vector(30).cwiseAbs(), 0.0};
  const Matrix gi = noise.inverse_variance().asDiagonal();
  const double lambda = 0.3;

  MapOptions opts;
  opts.fixed_lambda = lambda;
  opts.max_iter = 81;
  opts.stop_tol = 1e-14;
  const MapRun run = map_estimate(f, noise, dense_map(q), m_pr, y, opts);
  const Matrix h = fm.transpose() * gi * fm + lambda * lambda * q.inverse();
  const Vector ref = m_pr + h.ldlt().solve(fm.transpose() * gi * (y - fm * m_pr));
  CHECK(rel_err(run.result.m_post, ref) <= 1e-6);

  const Vector zhat = run.state.v() * run.result.z;
  const Vector ftb = fm.transpose() * gi * (y - fm * m_pr);
  const Vector opt = fm.transpose() * gi * fm * q * zhat + lambda * lambda * zhat - ftb;
  CHECK(opt.norm() <= 1e-6 * ftb.norm());

  for (std::size_t i = 1; i < run.result.history.size(); ++i)
    CHECK(run.result.history[i].rel_residual <= run.result.history[i - 1].rel_residual + 1e-12);
}

TEST_CASE("projected objective at fixed lambda does not increase with k") {
  RandomStream rng(50);
  const SmallProblem p = small_problem(40, 60, rng);
  GenGK gk(LinearForward::from_dense(p.f, "dense"), p.inv_var, dense_map(p.q), p.b);
  gk.expand_to(25);
  const Matrix b = gk.bidiagonal();
  const double lambda = 0.5;
  double prev = INFINITY;
  for (Index k = 1; k <= gk.k(); ++k) {
    const ProjectedSolution ps = solve_projected(b.topLeftCorner(k + 1, k), gk.delta1(), lambda);
    const double obj = ps.residual * ps.residual + lambda * lambda * ps.y.squaredNorm();
    CHECK(obj <= prev * (1.0 + 1e-12));
    prev = obj;
  }
}

TEST_CASE("GCV-driven MAP stops and records history") {
  RandomStream rng(51);
  const SmallProblem p = small_problem(80, 100, rng);
  const LinearForward f = LinearForward::from_dense(p.f, "dense");
  MapOptions opts;
  opts.truth = Vector::Ones(100);
  NoiseModel noise{p.inv_var.cwiseInverse(), 0.0};
  const MapRun run = map_estimate(f, noise, dense_map(p.q), Vector::Zero(100), p.b, opts);
  CHECK(run.result.iterations >= 1);
  CHECK(static_cast<Index>(run.result.history.size()) == run.result.iterations);
  for (const auto& it : run.result.history) {
    CHECK(it.lambda >= kGcvLambdaMin);
    CHECK(it.lambda <= kGcvLambdaMax);
    CHECK(std::isfinite(it.rel_error));
  }
  opts.adaptive_weight = true;
  const MapRun weighted = map_estimate(f, noise, dense_map(p.q), Vector::Zero(100), p.b, opts);
  CHECK(weighted.result.iterations >= 1);
  MapOptions bad;
  bad.max_iter = 0;
  CHECK_THROWS_AS(map_estimate(f, noise, dense_map(p.q), Vector::Zero(100), p.b, bad), ValidationError);
}

TEST_CASE("low-rank posterior covariance is symmetric and reduces variance") {
  RandomStream rng(52);
  const SmallProblem p = small_problem(30, 50, rng);
  GenGK gk(LinearForward::from_dense(p.f, "dense"), p.inv_var, dense_map(p.q), p.b);
  gk.expand_to(20);
  const double lambda = 0.8;
  const PosteriorApprox post = posterior_approx(gk, lambda);
  const LinearMap qm = dense_map(p.q);
  const Vector a = rng.normal_vector(50), b = rng.normal_vector(50);
  const double ab = post.apply(qm, a).dot(b), ba = a.dot(post.apply(qm, b));
  CHECK(std::abs(ab - ba) <= 1e-8 * std::abs(ab));

  const PosteriorVariance pv = posterior_variance(gk, lambda, p.q.diagonal());
  CHECK((pv.update.array() >= -1e-10).all());
  CHECK((pv.variance.array() <= pv.prior.array() + 1e-10).all());
  CHECK(pv.clamped == 0);

  // Full rank reproduces the exact posterior diagonal.
  gk.expand_to(30);
  const Matrix h = p.f.transpose() * p.inv_var.asDiagonal() * p.f + lambda * lambda * p.q.inverse();
  const Vector exact = h.inverse().diagonal();
  const PosteriorVariance full = posterior_variance(gk, lambda, p.q.diagonal());
  CHECK(rel_err(full.variance, exact) <= 1e-8);
  CHECK_THROWS_AS(posterior_variance(gk, lambda, Vector::Ones(3)), ValidationError);
  CHECK_THROWS_AS(posterior_approx(gk, 0.0), ValidationError);
}
