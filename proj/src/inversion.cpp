#include "whittle/inversion.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace whittle {

namespace {

constexpr double kBreakdownTol = 1e-14;

}  // namespace

GenGK::GenGK(LinearForward forward, Vector inverse_variance, LinearMap q_apply, const Vector& b, bool reorthogonalize)
    : f_(std::move(forward)), inv_var_(std::move(inverse_variance)), q_(std::move(q_apply)), reorth_(reorthogonalize) {
  if (b.size() != f_.n_data || inv_var_.size() != f_.n_data)
    throw ValidationError("gen-GK: data vector, noise and forward operator sizes disagree");
  if ((inv_var_.array() <= 0.0).any()) throw ValidationError("gen-GK: noise variances must be positive");
  const double delta = std::sqrt(b.cwiseAbs2().dot(inv_var_));
  deltas_.push_back(delta);
  if (delta > 0.0) {
    u_.push_back(b / delta);
  } else {
    u_.push_back(Vector::Zero(b.size()));
    breakdown_ = true;
  }
}

bool GenGK::expand() {
  if (breakdown_) return false;
  const Index k = this->k();
  const Vector& u = u_.back();

  // v-step: gamma v = F^T Gamma^{-1} u - delta v_prev, orthogonal in Q.
  Vector w = f_.apply_transpose(inv_var_.cwiseProduct(u));
  if (k > 0) w -= deltas_.back() * v_.back();
  const double raw = w.norm();
  if (reorth_)
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t i = 0; i < v_.size(); ++i) w -= qv_[i].dot(w) * v_[i];
  if (!(w.norm() > kBreakdownTol * raw) || raw == 0.0) {
    breakdown_ = true;
    return false;
  }
  Vector qw = q_(w);
  const double gq = w.dot(qw);
  if (!(gq > 0.0)) {
    breakdown_ = true;
    return false;
  }
  const double gamma = std::sqrt(gq);
  v_.push_back(w / gamma);
  qv_.push_back(qw / gamma);
  gammas_.push_back(gamma);

  // u-step: delta u_next = F Q v - gamma u, orthogonal in Gamma^{-1}.
  Vector p = f_.apply(qv_.back()) - gamma * u;
  const double raw_p = p.norm();
  if (reorth_)
    for (int pass = 0; pass < 2; ++pass)
      for (const Vector& ui : u_) p -= ui.dot(inv_var_.cwiseProduct(p)) * ui;
  const double delta = std::sqrt(p.cwiseAbs2().dot(inv_var_));
  if (!(p.norm() > kBreakdownTol * raw_p) || raw_p == 0.0 || !(delta > 0.0)) {
    // F Q V_k = U_k B_k exactly; the zero row keeps B rectangular.
    deltas_.push_back(0.0);
    u_.push_back(Vector::Zero(p.size()));
    breakdown_ = true;
    return true;
  }
  deltas_.push_back(delta);
  u_.push_back(p / delta);
  return true;
}

Index GenGK::expand_to(Index k) {
  while (this->k() < k && expand()) {
  }
  return this->k();
}

Matrix GenGK::bidiagonal() const {
  const Index k = this->k();
  Matrix b = Matrix::Zero(k + 1, k);
  for (Index i = 0; i < k; ++i) {
    b(i, i) = gammas_[static_cast<std::size_t>(i)];
    b(i + 1, i) = deltas_[static_cast<std::size_t>(i + 1)];
  }
  return b;
}

namespace {

Matrix stack(const std::vector<Vector>& cols, Index rows) {
  Matrix m(rows, static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) m.col(static_cast<Index>(j)) = cols[j];
  return m;
}

}  // namespace

Matrix GenGK::u() const { return stack(u_, f_.n_data); }
Matrix GenGK::v() const { return stack(v_, f_.n_params); }
Matrix GenGK::qv() const { return stack(qv_, f_.n_params); }

ProjectedSolution solve_projected(const Matrix& b, double delta1, double lambda) {
  if (!(lambda >= 0.0)) throw ValidationError("solve_projected: lambda must be nonnegative");
  const Index m = b.rows(), k = b.cols();
  ProjectedSolution out;
  if (k == 0) {
    out.y = Vector(0);
    out.residual = std::abs(delta1);
    return out;
  }
  Matrix a(m + k, k);
  a.topRows(m) = b;
  a.bottomRows(k) = lambda * Matrix::Identity(k, k);
  Vector rhs = Vector::Zero(m + k);
  rhs(0) = delta1;
  out.y = a.colPivHouseholderQr().solve(rhs);
  Vector r = -b * out.y;
  r(0) += delta1;
  out.residual = r.norm();
  return out;
}

ProjectedGcv::ProjectedGcv(const Matrix& b, double delta1, double weight)
    : k_(b.cols()), rows_(static_cast<double>(b.rows())), weight_(weight) {
  Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeThinU);
  const Vector s = svd.singularValues();
  sigma2_ = s.cwiseAbs2();
  const Vector c = delta1 * svd.matrixU().row(0).transpose();
  coeff2_ = c.cwiseAbs2();
  outside_ = std::max(0.0, delta1 * delta1 - coeff2_.sum());
}

double ProjectedGcv::operator()(double lambda) const {
  const double l2 = lambda * lambda;
  double num = outside_;
  double trace = rows_;
  for (Index i = 0; i < sigma2_.size(); ++i) {
    const double denom = sigma2_(i) + l2;
    const double filt = denom > 0.0 ? sigma2_(i) / denom : 0.0;
    num += (1.0 - filt) * (1.0 - filt) * coeff2_(i);
    trace -= weight_ * filt;
  }
  if (trace == 0.0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(k_) * num / (trace * trace);
}

double ProjectedGcv::full(double lambda, Index n_data) const {
  const double l2 = lambda * lambda;
  double num = outside_;
  double trace = static_cast<double>(n_data);
  for (Index i = 0; i < sigma2_.size(); ++i) {
    const double denom = sigma2_(i) + l2;
    const double filt = denom > 0.0 ? sigma2_(i) / denom : 0.0;
    num += (1.0 - filt) * (1.0 - filt) * coeff2_(i);
    trace -= filt;
  }
  if (trace <= 0.0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(n_data) * num / (trace * trace);
}

double ProjectedGcv::adaptive_weight() const {
  const Index n = sigma2_.size();
  if (n == 0) return 1.0;
  const double a2 = sigma2_.minCoeff();
  if (!(a2 > 0.0)) return 1.0;
  const Eigen::ArrayXd s2 = sigma2_.array(), c2 = coeff2_.array();
  const Eigen::ArrayXd tt = (s2 + a2).inverse();
  const double t1 = (s2 * tt).sum();
  const double t3 = (c2 * a2 * s2 * tt.cube()).sum();
  const double t4 = (s2 * tt.square()).sum();
  const double t5 = (c2 * a2 * a2 * tt.square()).sum();
  const double v2 = (c2 * s2 * tt.cube()).sum();
  const double den = t1 * t3 + t4 * (t5 + outside_);
  return den > 0.0 ? rows_ * a2 * v2 / den : 1.0;
}

GcvResult select_lambda_gcv(const Matrix& b, double delta1, double weight) {
  if (b.cols() < 1) throw ValidationError("select_lambda_gcv: needs at least one Krylov iteration");
  const ProjectedGcv g(b, delta1, weight);
  const double lo = std::log10(kGcvLambdaMin), hi = std::log10(kGcvLambdaMax);
  constexpr int kScan = 201;
  std::vector<double> grid(kScan), vals(kScan);
  for (int i = 0; i < kScan; ++i) {
    grid[i] = lo + (hi - lo) * i / (kScan - 1);
    vals[i] = g(std::pow(10.0, grid[i]));
  }
  const auto [mn, mx] = std::minmax_element(vals.begin(), vals.end());
  GcvResult out;
  if (!(*mx - *mn > 1e-12 * std::abs(*mx))) {
    out.lambda = std::pow(10.0, 0.5 * (lo + hi));
    out.value = g(out.lambda);
    out.flat = true;
    return out;
  }
  const int best = static_cast<int>(mn - vals.begin());
  double a = grid[std::max(best - 1, 0)], c = grid[std::min(best + 1, kScan - 1)];
  auto f = [&](double t) { return g(std::pow(10.0, t)); };
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = c - phi * (c - a), x2 = a + phi * (c - a);
  double f1 = f(x1), f2 = f(x2);
  while (c - a > 1e-10) {
    if (f1 <= f2) {
      c = x2;
      x2 = x1;
      f2 = f1;
      x1 = c - phi * (c - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (c - a);
      f2 = f(x2);
    }
  }
  double t = f1 <= f2 ? x1 : x2;
  double v = std::min(f1, f2);
  if (vals[best] <= v) {
    t = grid[best];
    v = vals[best];
  }
  out.lambda = std::pow(10.0, t);
  out.value = v;
  return out;
}

MapResult map_estimate(GenGK& gk, const Vector& m_prior, const MapOptions& opts) {
  if (opts.max_iter < 1) throw ValidationError("map_estimate: max_iter must be positive");
  if (opts.fixed_lambda && !(*opts.fixed_lambda >= 0.0)) throw ValidationError("map_estimate: lambda must be nonnegative");
  const double weight = opts.gcv_weight.value_or(1.0);
  MapResult out;
  out.m_post = m_prior;
  out.z = Vector(0);
  out.lambda = opts.fixed_lambda.value_or(1.0);
  const double delta1 = gk.delta1();
  if (delta1 == 0.0) {
    out.converged = true;
    return out;
  }
  const double truth_norm = opts.truth ? opts.truth->norm() : 0.0;
  const Index n_data = gk.n_data();

  double first = std::numeric_limits<double>::quiet_NaN();
  double prev = first;
  double weight_sum = 0.0;
  int calm = 0;
  while (gk.k() < opts.max_iter) {
    if (!gk.expand()) {
      out.converged = true;
      break;
    }
    const Index k = gk.k();
    const Matrix b = gk.bidiagonal();
    double lambda = out.lambda;
    double gval = std::numeric_limits<double>::quiet_NaN();
    double full = gval;
    if (!opts.fixed_lambda) {
      double w = weight;
      if (opts.adaptive_weight) {
        weight_sum += std::min(1.0, ProjectedGcv(b, delta1).adaptive_weight());
        w = weight_sum / static_cast<double>(k);
      }
      const GcvResult sel = select_lambda_gcv(b, delta1, w);
      lambda = sel.lambda;
      gval = sel.value;
      out.gcv_flat = sel.flat;
      full = ProjectedGcv(b, delta1).full(lambda, n_data);
    }
    const ProjectedSolution ps = solve_projected(b, delta1, lambda);
    // The full-problem GCV at the selected lambda drives the stopping rule;
    // at fixed lambda the projected objective does.
    const double monitor =
        opts.fixed_lambda ? ps.residual * ps.residual + lambda * lambda * ps.y.squaredNorm() : full;

    out.z = ps.y;
    out.lambda = lambda;
    out.iterations = k;
    out.m_post = m_prior + gk.qv() * ps.y;

    MapIteration it;
    it.k = k;
    it.lambda = lambda;
    it.gcv = gval;
    it.full_gcv = full;
    it.rel_residual = ps.residual / delta1;
    it.rel_error = opts.truth && truth_norm > 0.0 ? (out.m_post - *opts.truth).norm() / truth_norm
                                                  : std::numeric_limits<double>::quiet_NaN();
    out.history.push_back(it);

    if (std::isnan(first)) {
      first = monitor;
    } else {
      const double scale = first != 0.0 ? std::abs(first) : 1.0;
      calm = std::abs(monitor - prev) / scale < opts.stop_tol ? calm + 1 : 0;
    }
    prev = monitor;
    if (k >= opts.min_iter && calm >= opts.stop_window) {
      out.converged = true;
      break;
    }
  }
  if (gk.broken_down()) out.converged = true;
  if (out.iterations != gk.k() && gk.k() > 0) {
    // Early breakdown left no GCV estimate; the one-dimensional space is fit exactly.
    const Matrix b = gk.bidiagonal();
    out.lambda = opts.fixed_lambda.value_or(gk.k() >= 2 ? select_lambda_gcv(b, delta1, weight).lambda : kGcvLambdaMin);
    out.z = solve_projected(b, delta1, out.lambda).y;
    out.iterations = gk.k();
    out.m_post = m_prior + gk.qv() * out.z;
  }
  return out;
}

MapRun map_estimate(const LinearForward& f, const NoiseModel& noise, LinearMap q_apply, const Vector& m_prior,
                    const Vector& y, const MapOptions& opts) {
  if (m_prior.size() != f.n_params) throw ValidationError("map_estimate: prior mean does not match the parameter size");
  if (y.size() != f.n_data) throw ValidationError("map_estimate: data length does not match the forward operator");
  if (noise.variance.size() != f.n_data) throw ValidationError("map_estimate: noise variance length mismatch");
  GenGK gk(f, noise.inverse_variance(), std::move(q_apply), y - f.apply(m_prior), opts.reorthogonalize);
  MapResult r = map_estimate(gk, m_prior, opts);
  return {std::move(r), std::move(gk)};
}

Vector PosteriorApprox::apply(const LinearMap& q_apply, const Vector& v) const {
  Vector out = q_apply(v) / (lambda * lambda);
  if (z.cols() > 0) out -= z * delta.cwiseProduct(z.transpose() * v);
  return out;
}

PosteriorApprox posterior_approx(const GenGK& gk, double lambda) {
  if (!(lambda > 0.0)) throw ValidationError("posterior: lambda must be positive");
  PosteriorApprox out;
  out.lambda = lambda;
  const Index k = gk.k();
  if (k == 0) {
    out.z = Matrix(gk.v().rows(), 0);
    out.phi = Vector(0);
    out.delta = Vector(0);
    return out;
  }
  const Matrix b = gk.bidiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(b.transpose() * b);
  out.phi = eig.eigenvalues().reverse().cwiseMax(0.0);
  const Matrix w = eig.eigenvectors().rowwise().reverse();
  out.z = gk.qv() * w;
  const double l2 = lambda * lambda;
  out.delta = (out.phi.array() / (out.phi.array() + l2) / l2).matrix();
  return out;
}

PosteriorVariance posterior_variance(const GenGK& gk, double lambda, const Vector& diag_q) {
  const PosteriorApprox post = posterior_approx(gk, lambda);
  if (diag_q.size() != post.z.rows()) throw ValidationError("posterior_variance: diagonal has the wrong length");
  PosteriorVariance out;
  out.prior = diag_q / (lambda * lambda);
  out.update = Vector::Zero(diag_q.size());
  if (post.z.cols() > 0) out.update = post.z.cwiseAbs2() * post.delta;
  out.variance = out.prior - out.update;
  for (Index i = 0; i < out.variance.size(); ++i) {
    if (out.variance(i) < 0.0) {
      out.variance(i) = 0.0;
      ++out.clamped;
    }
  }
  return out;
}

}  // namespace whittle
