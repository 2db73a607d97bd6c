// whittle: batch front end for the Whittle-Matern prior library.
//
// Exit codes: 0 success, 2 invalid input, 3 solver did not converge.

#include "whittle/experiments.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using namespace whittle;

constexpr int kExitValidation = 2;
constexpr int kExitConvergence = 3;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config,--prior", c.config, "configuration file");
  cmd->add_option("--set", c.overrides, "override, e.g. prior.alpha=1.5")->take_all();
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--alpha", c.alpha, "exponent alpha");
}

Config resolve(const Common& c, Config cfg = {}) {
  if (!c.config.empty()) load_config_into(cfg, c.config);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  if (c.seed) cfg.sampling.seed = *c.seed;
  if (c.alpha) cfg.prior.alpha = *c.alpha;
  cfg.validate();
  return cfg;
}

std::ofstream open_text(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  return out;
}

// Writes to `path`, or stdout when it is empty or "-".
template <class F>
void with_output(const std::string& path, F&& body) {
  if (path.empty() || path == "-") {
    body(std::cout);
  } else {
    std::ofstream out = open_text(path);
    body(out);
  }
}

std::string numbered(const std::string& path, int k, int count) {
  if (count == 1) return path;
  std::filesystem::path p(path);
  return (p.parent_path() / (p.stem().string() + "_" + std::to_string(k) + p.extension().string())).string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Whittle-Matern priors: covariance application, sampling, Bayesian inversion"};
  app.require_subcommand(1);

  // rule dump
  auto* rule = app.add_subcommand("rule", "sinc quadrature rules");
  rule->require_subcommand(1);
  auto* dump = rule->add_subcommand("dump", "print (j, z_j, w_j) as CSV");
  double rule_s = 0.5, rule_h = 1.0 / 65.0;
  std::optional<double> rule_alpha, rule_zeta;
  std::optional<Index> rule_grid;
  std::string rule_out;
  dump->add_option("--s", rule_s, "fractional exponent in (0, 1)");
  dump->add_option("--spde-alpha", rule_alpha, "build the sampler rule for A^{-alpha/2} instead");
  dump->add_option("--mesh-h", rule_h, "mesh parameter in (0, 1)");
  dump->add_option("--grid", rule_grid, "points per dimension; sets h = 1/n");
  dump->add_option("--zeta", rule_zeta, "override the quadrature step");
  dump->add_option("--out", rule_out, "output CSV (default stdout)");

  // apply-cov
  auto* apply = app.add_subcommand("apply-cov", "u = C_alpha f");
  Common apply_c;
  std::string apply_in, apply_out;
  add_common(apply, apply_c);
  apply->add_option("--in", apply_in, "input field (FLD1)")->required();
  apply->add_option("--out", apply_out, "output field (FLD1)")->required();

  // sample-spde
  auto* spde = app.add_subcommand("sample-spde", "SPDE samples, 0 < alpha < 2");
  Common spde_c;
  std::string spde_out;
  std::optional<int> spde_n;
  bool spde_pgm = false;
  add_common(spde, spde_c);
  spde->add_option("--out", spde_out, "output field; _k suffix when several")->required();
  spde->add_option("--n-samples", spde_n, "number of samples");
  spde->add_flag("--pgm", spde_pgm, "also write PGM renders");

  // kl-eigs
  auto* kl = app.add_subcommand("kl-eigs", "leading KL eigenvalues");
  Common kl_c;
  std::string kl_out, kl_basis_dir;
  std::optional<Index> kl_modes;
  add_common(kl, kl_c);
  kl->add_option("--modes", kl_modes, "number of modes");
  kl->add_option("--out", kl_out, "eigenvalue CSV (default stdout)");
  kl->add_option("--basis-dir", kl_basis_dir, "write each mode as mode_<k>.fld");

  // sample-kl
  auto* skl = app.add_subcommand("sample-kl", "truncated KL samples");
  Common skl_c;
  std::string skl_out, skl_mean;
  std::optional<Index> skl_modes;
  std::optional<int> skl_n;
  bool skl_pgm = false;
  add_common(skl, skl_c);
  skl->add_option("--modes", skl_modes, "number of modes");
  skl->add_option("--mean", skl_mean, "mean field (FLD1, default zero)");
  skl->add_option("--out", skl_out, "output field; _k suffix when several")->required();
  skl->add_option("--n-samples", skl_n, "number of samples");
  skl->add_flag("--pgm", skl_pgm, "also write PGM renders");

  // forward
  auto* fwd = app.add_subcommand("forward", "synthetic data y = F m + noise");
  Common fwd_c;
  std::string fwd_model, fwd_truth, fwd_out, fwd_save_truth;
  std::optional<double> fwd_noise;
  add_common(fwd, fwd_c);
  fwd->add_option("--model", fwd_model, "tomo or heat");
  fwd->add_option("--truth", fwd_truth, "true field (FLD1); default: built-in phantom on the config grid");
  fwd->add_option("--noise", fwd_noise, "relative noise level");
  fwd->add_option("--out", fwd_out, "data CSV")->required();
  fwd->add_option("--save-truth", fwd_save_truth, "write the field used as truth");

  // invert
  auto* inv = app.add_subcommand("invert", "MAP estimate and posterior variance");
  Common inv_c;
  std::string inv_model, inv_data, inv_truth, inv_dir = ".";
  bool inv_uq = false, inv_pgm = false;
  std::optional<Index> inv_rank;
  add_common(inv, inv_c);
  inv->add_option("--model", inv_model, "tomo or heat");
  inv->add_option("--data", inv_data, "data CSV (index,value,variance)")->required();
  inv->add_option("--truth", inv_truth, "true field for the error column of history.csv");
  inv->add_flag("--uq", inv_uq, "also compute the posterior variance");
  inv->add_option("--uq-rank", inv_rank, "Krylov dimension used for the variance");
  inv->add_option("--out-dir", inv_dir, "output directory");
  inv->add_flag("--pgm", inv_pgm, "also write PGM renders");

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "MPGMRES-Sh vs per-shift direct solves");
  Common bench_c;
  std::vector<Index> bench_grids;
  double bench_s = 0.5;
  bool bench_no_direct = false;
  std::string bench_out;
  add_common(bench, bench_c);
  bench->add_option("--grid", bench_grids, "points per dimension (repeatable)")->delimiter(',');
  bench->add_option("--s", bench_s, "fractional exponent");
  bench->add_flag("--no-direct", bench_no_direct, "skip the direct solves");
  bench->add_option("--out", bench_out, "CSV (default stdout)");

  // experiment
  auto* exp = app.add_subcommand("experiment", "reproduce a table or figure");
  Common exp_c;
  std::string exp_name;
  ExperimentOptions exp_opts;
  bool exp_no_direct = false;
  add_common(exp, exp_c);
  exp->add_option("name", exp_name, "table1|table2|fig2|fig3|fig5|heat")->required();
  exp->add_option("--out-dir", exp_opts.out_dir, "output directory");
  exp->add_option("--grids", exp_opts.grids, "grid sizes")->delimiter(',');
  exp->add_flag("--no-direct", exp_no_direct, "skip direct-solver timings");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (dump->parsed()) {
      const double h = rule_grid ? 1.0 / static_cast<double>(*rule_grid) : rule_h;
      const SincRule r = rule_alpha ? spde_rule(*rule_alpha, h, rule_zeta) : inverse_rule(rule_s, h, rule_zeta);
      with_output(rule_out, [&](std::ostream& out) {
        CsvWriter w(out);
        w.header({"j", "z", "w"});
        for (Index k = 0; k < r.n_sigma(); ++k) {
          w << static_cast<long long>(r.j_of(k)) << r.nodes(k) << r.weights(k);
          w.end_row();
        }
      });
      std::cerr << "N_sigma = " << r.n_sigma() << " (M- = " << r.m_minus << ", M+ = " << r.m_plus
                << ", zeta = " << format_double(r.zeta) << ")\n";
    } else if (apply->parsed()) {
      Config cfg = resolve(apply_c);
      const Field f = load_field(apply_in);
      cfg.grid.nx = f.nx;
      cfg.grid.ny = f.ny;
      const CovarianceApplicator cov(cfg.grid, cfg.prior.build(), cfg.solver);
      ShiftedReport rep;
      save_field(apply_out, cfg.grid, cov.apply_cov(f.values, &rep));
      if (cov.fractional_part() > 0.0) std::cerr << "MPGMRES-Sh: " << rep.iterations << " iterations\n";
    } else if (spde->parsed()) {
      const Config cfg = resolve(spde_c);
      const int count = spde_n.value_or(cfg.sampling.n_samples);
      if (count < 1) throw ValidationError("--n-samples must be positive");
      const SpdeSampler sampler(cfg.grid, cfg.prior.build().coeff, cfg.prior.alpha, cfg.solver);
      RandomStream stream(cfg.sampling.seed);
      for (int k = 0; k < count; ++k) {
        ShiftedReport rep;
        const Vector u = sampler.sample(stream, &rep);
        const std::string path = numbered(spde_out, k, count);
        save_field(path, cfg.grid, u);
        if (spde_pgm) save_pgm(std::filesystem::path(path).replace_extension(".pgm").string(), cfg.grid.nx, cfg.grid.ny, u);
        std::cerr << path << ": " << rep.iterations << " iterations\n";
      }
    } else if (kl->parsed()) {
      const Config cfg = resolve(kl_c);
      const CovarianceApplicator cov(cfg.grid, cfg.prior.build(), cfg.solver);
      RandomStream stream(cfg.sampling.seed);
      const KLBasis basis = kl_eigs(cov, kl_modes.value_or(cfg.sampling.kl_modes), stream,
                                    {cfg.sampling.oversample, cfg.sampling.power_iterations});
      with_output(kl_out, [&](std::ostream& out) {
        CsvWriter w(out);
        w.header({"mode", "eigenvalue"});
        for (Index i = 0; i < basis.size(); ++i) {
          w << static_cast<long long>(i + 1) << basis.eigenvalues(i);
          w.end_row();
        }
      });
      if (!kl_basis_dir.empty()) {
        std::filesystem::create_directories(kl_basis_dir);
        for (Index i = 0; i < basis.size(); ++i)
          save_field((std::filesystem::path(kl_basis_dir) / ("mode_" + std::to_string(i + 1) + ".fld")).string(),
                     cfg.grid, basis.eigenvectors.col(i));
      }
    } else if (skl->parsed()) {
      const Config cfg = resolve(skl_c);
      const CovarianceApplicator cov(cfg.grid, cfg.prior.build(), cfg.solver);
      RandomStream stream(cfg.sampling.seed);
      const KLBasis basis = kl_eigs(cov, skl_modes.value_or(cfg.sampling.kl_modes), stream,
                                    {cfg.sampling.oversample, cfg.sampling.power_iterations});
      const Vector mean = skl_mean.empty() ? Vector::Zero(cfg.grid.num_nodes()) : load_field(skl_mean, cfg.grid);
      RandomStream draws = stream.split(1);
      const int count = skl_n.value_or(cfg.sampling.n_samples);
      if (count < 1) throw ValidationError("--n-samples must be positive");
      for (int k = 0; k < count; ++k) {
        const Vector u = sample_kl(basis, mean, draws);
        const std::string path = numbered(skl_out, k, count);
        save_field(path, cfg.grid, u);
        if (skl_pgm) save_pgm(std::filesystem::path(path).replace_extension(".pgm").string(), cfg.grid.nx, cfg.grid.ny, u);
      }
    } else if (fwd->parsed()) {
      Config cfg = resolve(fwd_c);
      if (!fwd_model.empty()) cfg.inversion.model = fwd_model;
      if (fwd_noise) cfg.inversion.noise = *fwd_noise;
      Vector truth;
      if (!fwd_truth.empty()) {
        const Field f = load_field(fwd_truth);
        cfg.grid.nx = f.nx;
        cfg.grid.ny = f.ny;
        truth = f.values;
      } else {
        truth = gaussian_bumps_phantom(cfg.grid);
      }
      cfg.validate();
      const LinearForward f = make_forward(cfg);
      for (const auto& w : f.warnings) std::cerr << "warning: " << w << "\n";
      RandomStream stream(cfg.sampling.seed);
      RandomStream noise = stream.split(1);
      const SyntheticData data = make_data(f, truth, cfg.inversion.noise, noise);
      save_data_csv(fwd_out, data.y, data.noise.variance);
      if (!fwd_save_truth.empty()) save_field(fwd_save_truth, cfg.grid, truth);
      std::cerr << f.description << ": " << f.n_data << " observations\n";
    } else if (inv->parsed()) {
      Config cfg = resolve(inv_c);
      if (!inv_model.empty()) cfg.inversion.model = inv_model;
      if (inv_rank) cfg.inversion.uq_rank = *inv_rank;
      cfg.validate();
      const PriorConfig prior = cfg.prior.build();
      prior.validate_as_prior();
      const LinearForward f = make_forward(cfg);
      const DataSet data = load_data_csv(inv_data);
      if (data.values.size() != f.n_data)
        throw ValidationError(inv_data + ": " + std::to_string(data.values.size()) + " observations, the " +
                              cfg.inversion.model + " model produces " + std::to_string(f.n_data));
      const CovarianceApplicator cov(cfg.grid, prior, cfg.solver);
      MapOptions mo;
      mo.max_iter = cfg.inversion.max_iter;
      mo.stop_tol = cfg.inversion.stop_tol;
      mo.reorthogonalize = cfg.inversion.reorthogonalize;
      mo.fixed_lambda = cfg.inversion.lambda;
      mo.gcv_weight = cfg.inversion.gcv_weight;
      mo.adaptive_weight = cfg.inversion.adaptive_weight;
      if (!inv_truth.empty()) mo.truth = load_field(inv_truth, cfg.grid);
      NoiseModel noise;
      noise.variance = data.variance;
      MapRun run = map_estimate(f, noise, cov.q_map(), Vector::Zero(cfg.grid.num_nodes()), data.values, mo);
      std::filesystem::create_directories(inv_dir);
      const auto at = [&](const std::string& name) { return (std::filesystem::path(inv_dir) / name).string(); };
      save_field(at("m_post.fld"), cfg.grid, run.result.m_post);
      if (inv_pgm) save_pgm(at("m_post.pgm"), cfg.grid.nx, cfg.grid.ny, run.result.m_post);
      {
        std::ofstream out = open_text(at("history.csv"));
        CsvWriter w(out);
        w.header({"k", "lambda", "gcv", "full_gcv", "rel_residual", "rel_error"});
        for (const auto& it : run.result.history) {
          w << static_cast<long long>(it.k) << it.lambda << it.gcv << it.full_gcv << it.rel_residual << it.rel_error;
          w.end_row();
        }
      }
      std::cerr << "gen-GK: " << run.result.iterations << " iterations, lambda = " << format_double(run.result.lambda)
                << (run.result.gcv_flat ? " (flat GCV)" : "") << "\n";
      if (inv_uq || inv_rank) {
        run.state.expand_to(std::max<Index>(cfg.inversion.uq_rank, run.result.iterations));
        RandomStream stream(cfg.sampling.seed);
        const Vector diag_q = estimate_diag_Q(cov, cfg.inversion.diag_samples, std::nullopt, stream);
        const PosteriorVariance pv = posterior_variance(run.state, run.result.lambda, diag_q);
        save_field(at("variance.fld"), cfg.grid, pv.variance);
        if (inv_pgm) save_pgm(at("variance.pgm"), cfg.grid.nx, cfg.grid.ny, pv.variance);
        if (pv.clamped > 0) std::cerr << "warning: " << pv.clamped << " negative variance entries clamped to zero\n";
      }
      if (!run.result.converged) {
        std::cerr << "error: GCV stopping rule not met within " << cfg.inversion.max_iter
                  << " iterations; outputs hold the last iterate\n";
        return kExitConvergence;
      }
    } else if (bench->parsed()) {
      const Config cfg = resolve(bench_c);
      if (bench_grids.empty()) bench_grids.push_back(cfg.grid.nx);
      with_output(bench_out, [&](std::ostream& out) {
        CsvWriter w(out);
        w.header({"grid", "n_sigma", "iterations", "basis_dim", "t_direct", "t_precond", "t_solve"});
        for (Index n : bench_grids) {
          const BenchmarkRow r = benchmark_shifted(n, bench_s, cfg, !bench_no_direct);
          w << static_cast<long long>(n) << static_cast<long long>(r.n_sigma) << r.iterations
            << static_cast<long long>(r.basis_dim) << r.t_direct << r.t_precond << r.t_solve;
          w.end_row();
          out.flush();
        }
      });
    } else if (exp->parsed()) {
      const auto& names = experiment_names();
      if (std::find(names.begin(), names.end(), exp_name) == names.end())
        throw ValidationError("unknown experiment '" + exp_name + "'");
      const Config cfg = resolve(exp_c, experiment_defaults(exp_name));
      exp_opts.direct = !exp_no_direct;
      run_experiment(exp_name, cfg, exp_opts, std::cerr);
    }
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << " (worst relative residual " << e.worst_residual() << ")\n";
    return kExitConvergence;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NotSpdError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
