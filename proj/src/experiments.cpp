#include "whittle/experiments.hpp"

#include <Eigen/QR>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>

namespace whittle {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string join(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

std::ofstream open_csv(const std::string& dir, const std::string& file) {
  std::ofstream out(join(dir, file));
  if (!out) throw ValidationError("cannot write '" + join(dir, file) + "'");
  return out;
}

void save_field_and_image(const std::string& dir, const std::string& stem, const Grid& g, const Vector& v) {
  save_field(join(dir, stem + ".fld"), g, v);
  save_pgm(join(dir, stem + ".pgm"), g.nx, g.ny, v);
}

std::string alpha_tag(double alpha) {
  std::string s = format_double(alpha);
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

const double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

BenchmarkRow benchmark_shifted(Index n, double s, const Config& cfg, bool with_direct) {
  const Grid grid = Grid(n, n, cfg.grid.x0, cfg.grid.x1, cfg.grid.y0, cfg.grid.y1);
  const PriorConfig prior = cfg.prior.build();
  const SparseMatrix m = assemble_mass(grid);
  const SparseMatrix k = assemble_stiffness(grid, prior.coeff);
  const SincRule rule = inverse_rule(s, grid.quad_h(), cfg.solver.zeta);
  const ShiftedWeights sw = rescaled_weights(rule);
  const ShiftedFamily family{m, k, sw.sigma};
  RandomStream stream(cfg.sampling.seed);
  const Vector d = stream.normal_vector(grid.num_nodes());

  BenchmarkRow row;
  row.grid = n;
  row.s = s;
  row.n_sigma = rule.n_sigma();
  auto t0 = Clock::now();
  const PreconditionerSet precs(m, k, cfg.solver.taus);
  row.t_precond = seconds_since(t0);
  KrylovOptions opts;
  opts.tol = cfg.solver.tol;
  opts.max_iter = cfg.solver.max_iter;
  t0 = Clock::now();
  const ShiftedSolution sol = solve_shifted(family, precs, d, opts);
  row.t_solve = seconds_since(t0);
  row.iterations = sol.report.iterations;
  row.basis_dim = sol.report.basis_dim;
  row.t_direct = kNaN;
  row.max_rel_diff = kNaN;
  if (with_direct) {
    t0 = Clock::now();
    const Matrix x = direct_shifted(family, d);
    row.t_direct = seconds_since(t0);
    double worst = 0.0;
    for (Index j = 0; j < x.cols(); ++j)
      worst = std::max(worst, (sol.solution(j) - x.col(j)).norm() / x.col(j).norm());
    row.max_rel_diff = worst;
  }
  return row;
}

ManufacturedRow manufactured_error(Index n, double alpha, double kappa2, const CovarianceOptions& opts) {
  const Grid grid = Grid::unit_square(n);
  const double pi = std::numbers::pi;
  Vector f(grid.num_nodes());
  for (Index j = 0; j < grid.ny; ++j)
    for (Index i = 0; i < grid.nx; ++i)
      f(grid.index(i, j)) = std::cos(2.0 * pi * grid.x(i)) * std::cos(2.0 * pi * grid.y(j));
  const CovarianceApplicator app(grid, Coefficients::constant(kappa2), alpha, opts);
  const Vector e = app.apply_cov(f) - std::pow(kappa2 + 8.0 * pi * pi, -alpha) * f;
  ManufacturedRow row;
  row.grid = n;
  row.h = grid.hx();
  row.alpha = alpha;
  row.error = std::sqrt(e.dot(app.mass() * e));
  return row;
}

double fitted_slope(const std::vector<double>& h, const std::vector<double>& err) {
  if (h.size() != err.size() || h.size() < 2) throw ValidationError("fitted_slope: need at least two points");
  Matrix a(static_cast<Index>(h.size()), 2);
  Vector b(static_cast<Index>(h.size()));
  for (std::size_t i = 0; i < h.size(); ++i) {
    a(static_cast<Index>(i), 0) = std::log(h[i]);
    a(static_cast<Index>(i), 1) = 1.0;
    b(static_cast<Index>(i)) = std::log(err[i]);
  }
  return a.colPivHouseholderQr().solve(b)(0);
}

LinearForward make_forward(const Config& cfg) {
  const InversionConfig& inv = cfg.inversion;
  if (inv.model == "heat") return HeatModel(cfg.grid, inv.final_time, inv.steps, inv.sensor_stride).as_forward();
  const auto n = static_cast<double>(cfg.grid.nx);
  const Index ns = inv.sources > 0 ? inv.sources : static_cast<Index>(std::ceil(0.4 * n));
  const Index nr = inv.receivers > 0 ? inv.receivers : static_cast<Index>(std::ceil(0.6 * n));
  return tomo_operator(cfg.grid, ns, nr, parse_geometry(inv.geometry));
}

HeatRun run_heat(const Config& cfg) {
  cfg.validate();
  const PriorConfig prior = cfg.prior.build();
  prior.validate_as_prior();
  const InversionConfig& inv = cfg.inversion;
  const HeatModel model(cfg.grid, inv.final_time, inv.steps, inv.sensor_stride);
  const LinearForward f = model.as_forward();

  RandomStream root(cfg.sampling.seed);
  RandomStream noise_stream = root.split(1);
  RandomStream diag_stream = root.split(2);

  HeatRun run;
  run.sensors = model.sensors();
  run.truth = gaussian_bumps_phantom(cfg.grid);
  const SyntheticData data = make_data(f, run.truth, inv.noise, noise_stream);
  run.y = data.y;

  const CovarianceApplicator app(cfg.grid, prior, cfg.solver);
  MapOptions mo;
  mo.max_iter = inv.max_iter;
  mo.stop_tol = inv.stop_tol;
  mo.reorthogonalize = inv.reorthogonalize;
  mo.fixed_lambda = inv.lambda;
  mo.gcv_weight = inv.gcv_weight;
  mo.adaptive_weight = inv.adaptive_weight;
  mo.truth = run.truth;
  MapRun mr = map_estimate(f, data.noise, app.q_map(), Vector::Zero(cfg.grid.num_nodes()), data.y, mo);
  run.map = std::move(mr.result);
  run.rel_error = (run.map.m_post - run.truth).norm() / run.truth.norm();

  run.uq_rank = std::max<Index>(inv.uq_rank, run.map.iterations);
  mr.state.expand_to(run.uq_rank);
  run.uq_rank = mr.state.k();
  const Vector diag_q = estimate_diag_Q(app, inv.diag_samples, std::nullopt, diag_stream);
  run.variance = posterior_variance(mr.state, run.map.lambda, diag_q);
  return run;
}

namespace {

void write_history(std::ostream& out, const MapResult& r) {
  CsvWriter w(out);
  w.header({"k", "lambda", "gcv", "full_gcv", "rel_residual", "rel_error"});
  for (const auto& it : r.history) {
    w << static_cast<long long>(it.k) << it.lambda << it.gcv << it.full_gcv << it.rel_residual << it.rel_error;
    w.end_row();
  }
}

void table1(const Config& cfg, const ExperimentOptions& opts, std::ostream& log) {
  const std::vector<Index> grids = opts.grids.empty() ? std::vector<Index>{33, 65, 129, 257} : opts.grids;
  std::ofstream out = open_csv(opts.out_dir, "table1.csv");
  std::ofstream tim = open_csv(opts.out_dir, "table1_timings.csv");
  CsvWriter w(out), t(tim);
  w.header({"grid", "n_sigma", "iterations", "basis_dim"});
  t.header({"grid", "t_direct", "t_precond", "t_mpgmres"});
  for (Index n : grids) {
    const BenchmarkRow r = benchmark_shifted(n, 0.5, cfg, opts.direct);
    log << "table1 " << n << "x" << n << ": N_sigma " << r.n_sigma << ", " << r.iterations << " iterations\n";
    w << static_cast<long long>(n) << static_cast<long long>(r.n_sigma) << r.iterations << static_cast<long long>(r.basis_dim);
    w.end_row();
    t << static_cast<long long>(n) << r.t_direct << r.t_precond << r.t_solve;
    t.end_row();
  }
}

void table2(const Config& cfg, const ExperimentOptions& opts, std::ostream& log) {
  const Index n = opts.grids.empty() ? 257 : opts.grids.front();
  std::ofstream out = open_csv(opts.out_dir, "table2.csv");
  std::ofstream tim = open_csv(opts.out_dir, "table2_timings.csv");
  CsvWriter w(out), t(tim);
  w.header({"s", "n_sigma", "iterations", "basis_dim"});
  t.header({"s", "t_precond", "t_mpgmres"});
  for (int i = 1; i <= 9; ++i) {
    const double s = 0.1 * i;
    const BenchmarkRow r = benchmark_shifted(n, s, cfg, false);
    log << "table2 s=" << format_double(s) << ": N_sigma " << r.n_sigma << ", " << r.iterations << " iterations\n";
    w << s << static_cast<long long>(r.n_sigma) << r.iterations << static_cast<long long>(r.basis_dim);
    w.end_row();
    t << s << r.t_precond << r.t_solve;
    t.end_row();
  }
}

void fig2(const Config& cfg, const ExperimentOptions& opts, std::ostream& log) {
  const std::vector<Index> grids = opts.grids.empty() ? std::vector<Index>{33, 65, 129, 257} : opts.grids;
  const double alphas[] = {0.5, 1.5, 2.5};
  std::ofstream out = open_csv(opts.out_dir, "fig2.csv");
  std::ofstream sl = open_csv(opts.out_dir, "fig2_slopes.csv");
  CsvWriter w(out), s(sl);
  w.header({"grid", "h", "alpha", "l2_error"});
  s.header({"alpha", "slope"});
  for (double alpha : alphas) {
    std::vector<double> hs, errs;
    for (Index n : grids) {
      const ManufacturedRow r = manufactured_error(n, alpha, cfg.prior.kappa2, cfg.solver);
      w << static_cast<long long>(n) << r.h << alpha << r.error;
      w.end_row();
      hs.push_back(r.h);
      errs.push_back(r.error);
    }
    const double slope = hs.size() >= 2 ? fitted_slope(hs, errs) : kNaN;
    log << "fig2 alpha=" << format_double(alpha) << ": slope " << format_double(slope) << "\n";
    s << alpha << slope;
    s.end_row();
  }
}

void fig3(const Config& cfg, const ExperimentOptions& opts, std::ostream& log) {
  const Index n = opts.grids.empty() ? 129 : opts.grids.front();
  const Grid grid = Grid::unit_square(n);
  RandomStream stream(cfg.sampling.seed);
  const Vector w = stream.normal_vector(grid.num_nodes());
  const std::pair<std::string, Coefficients> cases[] = {
      {"iso", Coefficients::constant(100.0)},
      {"aniso", Coefficients::constant(100.0, Tensor2::rotated(10.0, 1.0, std::numbers::pi / 4.0))}};
  std::ofstream out = open_csv(opts.out_dir, "fig3.csv");
  CsvWriter c(out);
  c.header({"case", "alpha", "n_sigma", "iterations", "min", "max"});
  for (const auto& [name, coeff] : cases) {
    for (double alpha : {1.25, 1.5, 1.75}) {
      const SpdeSampler sampler(grid, coeff, alpha, cfg.solver);
      ShiftedReport rep;
      const Vector u = sampler.sample_from_noise(w, &rep);
      log << "fig3 " << name << " alpha=" << format_double(alpha) << ": " << rep.iterations << " iterations\n";
      c << name << alpha << static_cast<long long>(sampler.rule().n_sigma()) << rep.iterations << u.minCoeff() << u.maxCoeff();
      c.end_row();
      save_field_and_image(opts.out_dir, "fig3_" + name + "_alpha" + alpha_tag(alpha), grid, u);
    }
  }
}

void fig5(const Config& cfg, const ExperimentOptions& opts, std::ostream& log) {
  const Index n = opts.grids.empty() ? 65 : opts.grids.front();
  const Grid grid = Grid::unit_square(n);
  const Coefficients coeff = Coefficients::constant(80.0, Tensor2::rotated(4.0, 1.0, -std::numbers::pi / 4.0));
  const Index modes = std::min<Index>(cfg.sampling.kl_modes, grid.num_nodes() - cfg.sampling.oversample);
  KLOptions ko;
  ko.oversample = cfg.sampling.oversample;
  ko.power_iterations = cfg.sampling.power_iterations;
  std::ofstream out = open_csv(opts.out_dir, "fig5.csv");
  CsvWriter c(out);
  c.header({"mode", "alpha", "eigenvalue"});
  for (double alpha : {1.5, 2.5, 3.5}) {
    const CovarianceApplicator app(grid, coeff, alpha, cfg.solver);
    RandomStream stream(cfg.sampling.seed);
    const KLBasis basis = kl_eigs(app, modes, stream, ko);
    log << "fig5 alpha=" << format_double(alpha) << ": lambda_1 " << format_double(basis.eigenvalues(0)) << "\n";
    for (Index i = 0; i < basis.size(); ++i) {
      c << static_cast<long long>(i + 1) << alpha << basis.eigenvalues(i);
      c.end_row();
    }
    if (alpha == 2.5) {
      RandomStream draws = stream.split(7);
      for (int k = 0; k < 6; ++k)
        save_field_and_image(opts.out_dir, "fig5_sample" + std::to_string(k), grid,
                             sample_kl(basis, Vector::Zero(grid.num_nodes()), draws));
    }
  }
}

void heat(const Config& base, const ExperimentOptions& opts, std::ostream& log) {
  Config cfg = base;
  if (!opts.grids.empty()) cfg.grid = Grid::unit_square(opts.grids.front());
  const HeatRun run = run_heat(cfg);
  log << "heat: " << run.map.iterations << " iterations, lambda " << format_double(run.map.lambda) << ", relative error "
      << format_double(run.rel_error) << (run.map.converged ? "" : " (not converged)") << "\n";
  const Grid& g = cfg.grid;
  save_field_and_image(opts.out_dir, "heat_truth", g, run.truth);
  save_field_and_image(opts.out_dir, "heat_m_post", g, run.map.m_post);
  save_field_and_image(opts.out_dir, "heat_variance", g, run.variance.variance);
  save_field_and_image(opts.out_dir, "heat_prior_variance", g, run.variance.prior);
  save_field_and_image(opts.out_dir, "heat_update", g, run.variance.update);
  std::ofstream hist = open_csv(opts.out_dir, "heat_history.csv");
  write_history(hist, run.map);
  std::ofstream out = open_csv(opts.out_dir, "heat.csv");
  CsvWriter c(out);
  c.header({"iterations", "converged", "lambda", "rel_error", "uq_rank", "clamped", "n_sensors"});
  c << static_cast<long long>(run.map.iterations) << (run.map.converged ? 1 : 0) << run.map.lambda << run.rel_error
    << static_cast<long long>(run.uq_rank) << static_cast<long long>(run.variance.clamped)
    << static_cast<long long>(run.sensors.size());
  c.end_row();
}

}  // namespace

Config experiment_defaults(const std::string& name) {
  Config cfg;
  if (name == "heat") {
    cfg.grid = Grid::unit_square(65);
    cfg.prior.kappa2 = 80.0;
    cfg.prior.alpha = 2.5;
    cfg.inversion.model = "heat";
    cfg.inversion.adaptive_weight = true;
  } else if (name == "fig5") {
    cfg.sampling.kl_modes = 200;
  }
  return cfg;
}

void run_experiment(const std::string& name, const Config& cfg, const ExperimentOptions& opts, std::ostream& log) {
  std::filesystem::create_directories(opts.out_dir);
  if (name == "table1") return table1(cfg, opts, log);
  if (name == "table2") return table2(cfg, opts, log);
  if (name == "fig2") return fig2(cfg, opts, log);
  if (name == "fig3") return fig3(cfg, opts, log);
  if (name == "fig5") return fig5(cfg, opts, log);
  if (name == "heat") return heat(cfg, opts, log);
  throw ValidationError("unknown experiment '" + name + "' (known: table1, table2, fig2, fig3, fig5, heat)");
}

}  // namespace whittle
