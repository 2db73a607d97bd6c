// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "whittle/experiments.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <vector>

namespace {

using namespace whittle;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double rel_err(const Vector& a, const Vector& b) { return (a - b).norm() / b.norm(); }

LinearMap dense_map(const Matrix& a) {
  return [a](const Vector& v) { return Vector(a * v); };
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

// Criterion 1: sinc counts.
void quadrature_counts(Outcome& o) {
  const auto t0 = Clock::now();
  const std::vector<std::pair<Index, Index>> table1{{33, 123}, {65, 173}, {129, 235}, {257, 305}, {513, 387}};
  for (const auto& [n, expect] : table1) {
    const Index got = inverse_rule(0.5, 1.0 / static_cast<double>(n)).n_sigma();
    o.require(got == expect, std::to_string(n) + "^2: " + std::to_string(got) + " != " + std::to_string(expect));
  }
  const Index table2[] = {846, 476, 364, 318, 305, 318, 364, 476, 846};
  for (int i = 1; i <= 9; ++i) {
    const Index got = inverse_rule(0.1 * i, 1.0 / 257).n_sigma();
    o.require(got == table2[i - 1], "s=0." + std::to_string(i) + ": " + std::to_string(got));
  }
  const double t = seconds_since(t0);
  o.require(t < 1.0, "runtime");
  o.detail << "table 1 and table 2 counts exact, " << t << " s";
}

// Criterion 2: manufactured solution convergence.
void manufactured(Outcome& o) {
  const std::vector<Index> grids{33, 65, 129, 257};
  std::vector<std::vector<double>> errs;
  for (double alpha : {0.5, 1.5, 2.5}) {
    std::vector<double> h, e;
    for (Index n : grids) {
      const ManufacturedRow r = manufactured_error(n, alpha, 100.0, {});
      h.push_back(r.h);
      e.push_back(r.error);
    }
    const double slope = fitted_slope(h, e);
    o.detail << "alpha " << alpha << " slope " << slope << "; ";
    o.require(std::abs(slope - 2.0) <= 0.25, "slope at alpha " + std::to_string(alpha));
    errs.push_back(e);
  }
  for (std::size_t g = 0; g < grids.size(); ++g)
    o.require(errs[0][g] > errs[1][g] && errs[1][g] > errs[2][g], "error not decreasing in alpha at " + std::to_string(grids[g]));
}

// Criteria 3 and 4: MPGMRES-Sh iteration counts, accuracy and speed.
void shifted_iterations(Outcome& o3, Outcome& o4) {
  Config cfg;
  cfg.prior.kappa2 = 100.0;
  int lo = 1000, hi = 0;
  BenchmarkRow mid;
  for (int i = 1; i <= 9; ++i) {
    const double s = 0.1 * i;
    const BenchmarkRow r = benchmark_shifted(257, s, cfg, i == 5);
    if (i == 5) mid = r;
    lo = std::min(lo, r.iterations);
    hi = std::max(hi, r.iterations);
  }
  o3.detail << "257^2 iterations " << lo << ".." << hi;
  o3.require(hi <= 24, "iterations above 24 at 257^2");
  o3.require(hi - lo <= 2, "spread across s above 2");
  const BenchmarkRow big = benchmark_shifted(513, 0.5, cfg, false);
  o3.detail << ", 513^2 iterations " << big.iterations;
  o3.require(big.iterations <= 33, "iterations above 33 at 513^2");
  const BenchmarkRow small = benchmark_shifted(33, 0.5, cfg, true);
  o3.detail << ", 33^2 max rel diff vs direct " << small.max_rel_diff;
  o3.require(small.max_rel_diff <= 1e-6, "33^2 direct agreement");

  const double speedup = mid.t_direct / mid.t_solve;
  o4.detail << "257^2 s=0.5: direct " << mid.t_direct << " s, MPGMRES-Sh " << mid.t_solve << " s (+" << mid.t_precond
            << " s factorization), speedup " << speedup << "x";
  o4.require(speedup >= 5.0, "speedup below 5x");
}

// Criterion 5: SPDE sampler.
void spde_sampler(Outcome& o) {
  const Grid g = Grid::unit_square(129);
  RandomStream rng(0);
  const Vector w = rng.normal_vector(g.num_nodes());
  std::vector<int> iters;
  for (double alpha : {1.25, 1.5, 1.75}) {
    ShiftedReport rep;
    SpdeSampler(g, Coefficients::constant(100.0), alpha).sample_from_noise(w, &rep);
    iters.push_back(rep.iterations);
  }
  o.detail << "129^2 iterations " << iters[0] << "/" << iters[1] << "/" << iters[2];
  o.require(iters[0] == iters[1] && iters[1] == iters[2], "iteration counts differ across alpha");
  o.require(iters[0] <= 17, "iterations above 17");

  // The default sinc step at h = 1/17 carries a quadrature bias of a few
  // percent in the variance (reported below from the exact sampler covariance),
  // larger than the Monte-Carlo error of 2e4 samples; the statistical test
  // therefore runs with a fine step so that it measures the sampler itself.
  const Grid small = Grid::unit_square(17);
  const Coefficients c = Coefficients::constant(100.0);
  const Vector q_diag = dense_cov(small, c, 1.5).q.diagonal();
  {
    const SpdeSampler coarse(small, c, 1.5);
    const Index n = small.num_nodes();
    Matrix r(n, n);
    for (Index i = 0; i < n; ++i) r.col(i) = coarse.sample_from_noise(Vector::Unit(n, i));
    const Vector bias = (r * r.transpose()).diagonal().cwiseQuotient(q_diag).array() - 1.0;
    o.detail << ", default-step variance bias " << bias.cwiseAbs().maxCoeff();
  }
  CovarianceOptions fine;
  fine.zeta = 0.1;
  const SpdeSampler sampler(small, c, 1.5, fine);
  RandomStream srng(1);
  const int n = 20000;
  Vector s2 = Vector::Zero(small.num_nodes()), s4 = Vector::Zero(small.num_nodes());
  for (int k = 0; k < n; ++k) {
    const Vector u = sampler.sample(srng);
    s2 += u.cwiseAbs2();
    s4 += u.cwiseAbs2().cwiseAbs2();
  }
  double worst = 0.0;
  for (int p = 0; p < 20; ++p) {
    const Index node = (static_cast<Index>(p) * 97 + 5) % small.num_nodes();
    const double var = s2(node) / n;
    const double se = std::sqrt((s4(node) / n - var * var) / n);
    worst = std::max(worst, std::abs(var - q_diag(node)) / se);
  }
  o.detail << ", 17^2 variance within " << worst << " standard errors at 20 nodes";
  o.require(worst <= 5.0, "variance test");
}

// Criterion 6: KL eigensolver.
void kl(Outcome& o) {
  const Grid g = Grid::unit_square(17);
  const Coefficients c = Coefficients::constant(100.0);
  RandomStream rng(0);
  const KLBasis b = kl_eigs(CovarianceApplicator(g, c, 1.0), 10, rng, {60, 2});
  const Vector pencil = dense_cov(g, c, 1.0).pencil_eigenvalues;
  double worst = 0.0;
  for (Index k = 0; k < 10; ++k) worst = std::max(worst, std::abs(b.eigenvalues(k) * pencil(k) - 1.0));
  o.detail << "alpha=1 top-10 max rel error " << worst;
  o.require(worst <= 1e-4, "alpha=1 eigenvalues");

  const Grid fig = Grid::unit_square(65);
  const Coefficients aniso = Coefficients::constant(80.0, Tensor2::rotated(4.0, 1.0, -std::numbers::pi / 4));
  double prev = 0.0;
  for (double alpha : {1.5, 2.5, 3.5}) {
    RandomStream r(0);
    const KLBasis kb = kl_eigs(CovarianceApplicator(fig, aniso, alpha), 200, r);
    bool ordered = kb.eigenvalues.minCoeff() > 0.0;
    for (Index k = 1; k < kb.size(); ++k) ordered = ordered && kb.eigenvalues(k) <= kb.eigenvalues(k - 1);
    const double decay = kb.eigenvalues(0) / kb.eigenvalues(kb.size() - 1);
    o.detail << "; alpha " << alpha << " lambda_1/lambda_200 " << decay;
    o.require(ordered, "positivity/ordering at alpha " + std::to_string(alpha));
    o.require(decay > prev, "decay not steeper at alpha " + std::to_string(alpha));
    prev = decay;
  }
}

// Criterion 7: MAP equivalence and gen-GK invariants.
void map_oracle(Outcome& o) {
  const Grid g(9, 9);
  const Matrix q = dense_cov(g, Coefficients::constant(100.0), 2.5).q;
  RandomStream rng(7);
  const Matrix f = rng.normal_matrix(30, 81);
  const Vector m_pr = rng.normal_vector(81);
  const Vector y = f * rng.normal_vector(81) + 0.1 * rng.normal_vector(30);
  NoiseModel noise{Vector::Constant(30, 0.01), 0.1};
  const double lambda = 0.5;
  MapOptions opts;
  opts.fixed_lambda = lambda;
  opts.max_iter = 81;
  opts.stop_tol = 1e-14;
  const MapRun run = map_estimate(LinearForward::from_dense(f, "dense"), noise, dense_map(q), m_pr, y, opts);
  const Matrix gi = noise.inverse_variance().asDiagonal();
  const Matrix h = f.transpose() * gi * f + lambda * lambda * q.inverse();
  const Vector ref = m_pr + h.ldlt().solve(f.transpose() * gi * (y - f * m_pr));
  const double err = rel_err(run.result.m_post, ref);
  o.detail << "9x9 MAP rel error " << err << " after " << run.result.iterations << " iterations";
  o.require(err <= 1e-6, "MAP vs dense posterior mean");

  const Matrix u = run.state.u(), v = run.state.v();
  const double ou = (u.transpose() * gi * u - Matrix::Identity(u.cols(), u.cols())).norm();
  const double ov = (v.transpose() * q * v - Matrix::Identity(v.cols(), v.cols())).norm();
  o.detail << ", orthogonality U " << ou << " V " << ov;
  o.require(ou <= 1e-8 && ov <= 1e-8, "gen-GK orthogonality");
}

// Criterion 8: heat equation experiment.
void heat(Outcome& o) {
  const Config cfg = experiment_defaults("heat");
  const HeatRun r = run_heat(cfg);
  o.detail << "iterations " << r.map.iterations << ", relative error " << r.rel_error << ", lambda " << r.map.lambda;
  o.require(r.map.converged, "not converged");
  o.require(std::abs(r.rel_error - 0.15) <= 0.05, "relative error outside 0.15 +- 0.05");
  o.require(r.map.iterations >= 20 && r.map.iterations <= 80, "iterations outside [20, 80]");
  o.require((r.variance.variance.array() <= r.variance.prior.array()).all(), "posterior above prior");

  const Grid& g = cfg.grid;
  const Vector ratio = r.variance.update.cwiseQuotient(r.variance.prior);
  double at_sensors = 0.0;
  for (Index s : r.sensors) at_sensors += ratio(s);
  at_sensors /= static_cast<double>(r.sensors.size());
  const Index corners[] = {g.index(0, 0), g.index(g.nx - 1, 0), g.index(0, g.ny - 1), g.index(g.nx - 1, g.ny - 1)};
  double at_corners = 0.0;
  for (Index c : corners) at_corners += ratio(c) / 4.0;
  o.detail << ", variance reduction at sensors " << at_sensors << " vs corners " << at_corners;
  o.require(at_sensors > at_corners, "reduction at sensors not above corners");
}

// Criterion 9: posterior variance oracle.
void posterior_oracle(Outcome& o) {
  Config cfg;
  cfg.grid = Grid::unit_square(33);
  cfg.inversion.model = "tomo";
  const LinearForward f = make_forward(cfg);
  const PriorConfig prior = cfg.prior.build();
  const CovarianceApplicator app(cfg.grid, prior);
  const DenseCovariance dc = dense_cov(cfg.grid, prior);
  RandomStream rng(0);
  RandomStream noise_stream = rng.split(1);
  const Vector truth = gaussian_bumps_phantom(cfg.grid);
  const SyntheticData data = make_data(f, truth, 0.02, noise_stream);
  const MapRun run = map_estimate(f, data.noise, app.q_map(), Vector::Zero(cfg.grid.num_nodes()), data.y);
  const double lambda = run.result.lambda;
  GenGK gk(f, data.noise.inverse_variance(), app.q_map(), data.y);
  gk.expand_to(60);
  const PosteriorVariance pv = posterior_variance(gk, lambda, dc.q.diagonal());

  const Matrix fm = Matrix(*f.matrix);
  const Matrix h = fm.transpose() * data.noise.inverse_variance().asDiagonal() * fm + lambda * lambda * dc.q.inverse();
  const Vector exact = h.inverse().diagonal();
  const double err = rel_err(pv.variance, exact);
  o.detail << "k=" << gk.k() << ", lambda " << lambda << " (GCV, " << run.result.iterations
           << " MAP iterations), relative l2 error " << err;
  o.require(gk.k() == 60, "Krylov dimension");
  o.require(err <= 0.1, "posterior diagonal");
}

// Criterion 10: property suites.
void properties(Outcome& o) {
  RandomStream rng(10);
  {
    const Grid g(12, 9, 0.0, 2.0, 0.0, 1.0);
    const SparseMatrix m = assemble_mass(g);
    const SparseMatrix k = assemble_stiffness(g, Coefficients::constant(3.0, Tensor2::rotated(2.0, 0.5, 0.3)));
    const double pu = std::abs((m * Vector::Ones(g.num_nodes())).sum() - g.area()) / g.area();
    const SparseFactorization mf = factorize(m);
    const Vector u = rng.normal_vector(g.num_nodes()), v = rng.normal_vector(g.num_nodes());
    const double lhs = u.dot(m * mf.solve(Vector(k * v))), rhs = mf.solve(Vector(k * u)).dot(m * v);
    const double adj = std::abs(lhs - rhs) / std::abs(lhs);
    o.detail << "FEM partition of unity " << pu << ", adjointness " << adj;
    o.require(pu <= 1e-12 && adj <= 1e-12, "FEM properties");
  }
  {
    const Grid g = Grid::unit_square(33);
    const SparseMatrix m = assemble_mass(g), k = assemble_stiffness(g, Coefficients::constant(100.0));
    const ShiftedWeights sw = rescaled_weights(inverse_rule(0.5, g.quad_h()));
    KrylovOptions kopts;
    kopts.keep_arnoldi = true;
    const ShiftedSolution sol =
        solve_shifted({m, k, sw.sigma}, PreconditionerSet(m, k, PreconditionerSet::default_taus()), rng.normal_vector(g.num_nodes()), kopts);
    const Matrix az = k * sol.z;
    const double res = (az - sol.arnoldi.v * sol.arnoldi.hbar).norm() / az.norm();
    o.detail << "; Arnoldi residual " << res;
    o.require(res <= 1e-10, "Arnoldi relation");
  }
  {
    const Grid g = Grid::unit_square(17);
    CovarianceOptions tight;
    tight.tol = 1e-12;
    tight.max_iter = 300;
    const CovarianceApplicator app(g, Coefficients::constant(100.0, Tensor2::rotated(3.0, 1.0, 0.4)), 2.5, tight);
    const Vector f = rng.normal_vector(g.num_nodes()), h = rng.normal_vector(g.num_nodes());
    const Vector cf = app.apply_cov(f), ch = app.apply_cov(h);
    const double lhs = cf.dot(app.mass() * h), rhs = f.dot(app.mass() * ch);
    const double sa = std::abs(lhs - rhs) / std::abs(lhs);
    const double comm = rel_err(app.apply_cov_fractional_first(f), cf);
    o.detail << "; M-self-adjointness " << sa << ", commutation " << comm;
    o.require(sa <= 1e-8, "self-adjointness");
    o.require(comm <= 1e-8, "commutation");
  }
  {
    const Grid g = Grid::unit_square(17);
    const SpdeSampler s(g, Coefficients::constant(100.0), 1.5);
    RandomStream a(5), b(5);
    const Vector x = s.sample(a), y = s.sample(b);
    const bool same = std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0;
    std::stringstream buf;
    write_field(buf, g.nx, g.ny, x);
    const Field back = read_field(buf);
    const bool trip = back.values.size() == x.size() &&
                      std::memcmp(back.values.data(), x.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0;
    o.detail << "; seed determinism " << (same ? "bitwise" : "differs") << ", FLD1 round trip " << (trip ? "bitwise" : "differs");
    o.require(same, "seed determinism");
    o.require(trip, "FLD1 round trip");
  }
}

}  // namespace

int main() {
  std::cout.precision(4);
  const std::vector<std::pair<int, std::function<void(Outcome&)>>> singles{
      {1, quadrature_counts}, {2, manufactured}, {5, spde_sampler}, {6, kl},
      {7, map_oracle},        {8, heat},         {9, posterior_oracle}, {10, properties}};
  std::vector<std::pair<int, Outcome>> results;
  auto run = [&](int id, const std::function<void(Outcome&)>& fn) {
    Outcome o;
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail.str() << std::endl;
    return o.pass;
  };
  bool all = true;
  for (const auto& [id, fn] : singles) {
    all = run(id, fn) && all;
    if (id == 2) {
      Outcome o3, o4;
      try {
        shifted_iterations(o3, o4);
      } catch (const std::exception& e) {
        o3.pass = o4.pass = false;
        o3.detail << " [exception: " << e.what() << "]";
        o4.detail << " [exception: " << e.what() << "]";
      }
      std::cout << "criterion 3: " << (o3.pass ? "PASS" : "FAIL") << " - " << o3.detail.str() << std::endl;
      std::cout << "criterion 4: " << (o4.pass ? "PASS" : "FAIL") << " - " << o4.detail.str() << std::endl;
      all = all && o3.pass && o4.pass;
    }
  }
  std::cout << (all ? "all criteria PASS" : "some criteria FAIL") << std::endl;
  return all ? 0 : 1;
}
