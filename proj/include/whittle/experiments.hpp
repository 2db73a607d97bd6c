#pragma once

#include "whittle/inversion.hpp"
#include "whittle/io.hpp"
#include "whittle/sampling.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace whittle {

/// One MPGMRES-Sh run for A^{-s} (A = kappa^2 - div(Theta grad)) on an n x n
/// grid with a seeded random right-hand side, optionally timed against
/// per-shift direct solves.
struct BenchmarkRow {
  Index grid = 0;
  double s = 0.5;
  Index n_sigma = 0;
  int iterations = 0;
  Index basis_dim = 0;
  double t_direct = 0.0;   // NaN when skipped
  double t_precond = 0.0;
  double t_solve = 0.0;
  double max_rel_diff = 0.0;  // vs direct, NaN when skipped
};

BenchmarkRow benchmark_shifted(Index n, double s, const Config& cfg, bool with_direct);

/// L2 error of C_alpha f for f = cos(2 pi x) cos(2 pi y) against
/// (kappa^2 + 8 pi^2)^{-alpha} f, on the unit square.
struct ManufacturedRow {
  Index grid = 0;
  double h = 0.0;
  double alpha = 0.0;
  double error = 0.0;
};

ManufacturedRow manufactured_error(Index n, double alpha, double kappa2, const CovarianceOptions& opts);

/// Least-squares slope of log(error) against log(h).
double fitted_slope(const std::vector<double>& h, const std::vector<double>& err);

/// Forward operator named by cfg.inversion.model on cfg.grid.
LinearForward make_forward(const Config& cfg);

struct HeatRun {
  Vector truth;
  Vector y;
  MapResult map;
  PosteriorVariance variance;
  std::vector<Index> sensors;
  Index uq_rank = 0;
  double rel_error = 0.0;
};

/// Initial-condition reconstruction for the heat equation, with low-rank
/// posterior variance. Uses cfg.grid, cfg.prior, cfg.inversion, cfg.sampling.seed.
HeatRun run_heat(const Config& cfg);

struct ExperimentOptions {
  std::string out_dir = ".";
  std::vector<Index> grids;  // empty: the experiment's own default
  bool direct = true;        // time per-shift direct solves where relevant
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"table1", "table2", "fig2", "fig3", "fig5", "heat"};
  return names;
}

/// Parameter defaults of each experiment (grid, kappa^2, alpha, model);
/// config files and overrides apply on top.
Config experiment_defaults(const std::string& name);

/// Writes <name>.csv (deterministic), <name>_timings.csv where timings exist,
/// and any FLD1/PGM artifacts into opts.out_dir. Progress goes to `log`.
void run_experiment(const std::string& name, const Config& cfg, const ExperimentOptions& opts, std::ostream& log);

}  // namespace whittle
