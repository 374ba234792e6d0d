// mvfh: multivariate small area estimation on areal lattices.
//
// Subcommands: fit, simulate, loo, validate, diagnose. Exit codes: 0 success,
// 1 numeric/runtime failure, 2 usage or input validation error. MVFH_THREADS
// overrides the worker count used by the cross-validation and study loops.

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mvfh/io.hpp"

namespace {

using namespace mvfh;

// ---------------------------------------------------------------------------
// Flag containers
// ---------------------------------------------------------------------------

struct DataFlags {
  std::string neighbors;
  std::string data;
  bool log_transform = false;
  double pre_scale = 100.0;
  double moe_z = 1.645;
};

struct McmcFlags {
  long iterations = 15000;
  long burn_in = 1000;
  long thin = 1;
  std::uint64_t seed = 20240801;
  int chains = 1;
  bool no_adapt = false;
  std::vector<std::string> proposal_sd;  // name=value
};

struct PriorFlags {
  std::optional<double> sigma_df;
  std::string sigma_scale;  // row-major comma list, square
  std::string sigma_fixed;
  std::string beta_fixed;  // per outcome ';', within outcome ','
  std::optional<double> beta_sd;
  std::optional<double> tau_lo, tau_hi;
  std::optional<double> eta_mean, eta_sd;
  std::optional<double> rho_fixed, rho1_fixed, rho2_fixed;
  std::optional<double> tau1_fixed, tau2_fixed;
  std::optional<double> eta0_fixed, eta1_fixed;
};

void add_data_flags(CLI::App* sub, DataFlags& f) {
  sub->add_option("--neighbors", f.neighbors, "neighbor list file (one edge per line: id id)")
      ->required();
  sub->add_option("--data", f.data,
                  "data CSV (area_id,outcome,estimate,moe_or_var,var_flag,covariate_1..)")
      ->required();
  sub->add_flag("--log-transform", f.log_transform,
                "analyze log(pre_scale * estimate); margins of error become log-scale "
                "variances by the delta method");
  sub->add_option("--pre-scale", f.pre_scale, "multiplier applied before the log transform")
      ->capture_default_str();
  sub->add_option("--moe-z", f.moe_z, "z-value at which margins of error are quoted")
      ->capture_default_str();
}

void add_mcmc_flags(CLI::App* sub, McmcFlags& f) {
  sub->add_option("--iterations", f.iterations, "MCMC iterations per chain")
      ->capture_default_str();
  sub->add_option("--burn-in", f.burn_in, "burn-in iterations discarded per chain")
      ->capture_default_str();
  sub->add_option("--thin", f.thin, "keep every thin-th post-burn-in draw")
      ->capture_default_str();
  sub->add_option("--seed", f.seed, "base RNG seed")->capture_default_str();
  sub->add_option("--chains", f.chains, "independent chains")->capture_default_str();
  sub->add_flag("--no-adapt", f.no_adapt, "disable burn-in proposal adaptation");
  sub->add_option("--proposal-sd", f.proposal_sd,
                  "initial random-walk sd as name=value (repeatable; names: rho, tau1, tau2, "
                  "rho1, rho2, eta0, eta1)");
}

void add_prior_flags(CLI::App* sub, PriorFlags& f) {
  sub->add_option("--sigma-df", f.sigma_df, "inverse-Wishart degrees of freedom (default m)");
  sub->add_option("--sigma-scale", f.sigma_scale,
                  "inverse-Wishart scale matrix, row-major comma list (default identity)");
  sub->add_option("--sigma-fixed", f.sigma_fixed,
                  "fix the outcome covariance at this matrix (row-major comma list)");
  sub->add_option("--beta-fixed", f.beta_fixed,
                  "fix regression coefficients: outcomes separated by ';', values by ','");
  sub->add_option("--beta-sd", f.beta_sd,
                  "use a proper N(0, sd^2) prior on regression coefficients");
  sub->add_option("--tau-lo", f.tau_lo, "lower bound of the uniform prior on tau (sd scale)");
  sub->add_option("--tau-hi", f.tau_hi, "upper bound of the uniform prior on tau (sd scale)");
  sub->add_option("--eta-mean", f.eta_mean, "normal prior mean for linking coefficients");
  sub->add_option("--eta-sd", f.eta_sd, "normal prior sd for linking coefficients");
  sub->add_option("--rho-fixed", f.rho_fixed, "fix the spatial smoothing parameter (separable)");
  sub->add_option("--rho1-fixed", f.rho1_fixed, "fix the first-field smoothing parameter");
  sub->add_option("--rho2-fixed", f.rho2_fixed, "fix the second-field smoothing parameter");
  sub->add_option("--tau1-fixed", f.tau1_fixed, "fix the first-field conditional sd");
  sub->add_option("--tau2-fixed", f.tau2_fixed, "fix the second-field conditional sd");
  sub->add_option("--eta0-fixed", f.eta0_fixed, "fix the same-site linking coefficient");
  sub->add_option("--eta1-fixed", f.eta1_fixed, "fix the neighbor linking coefficient");
}

// ---------------------------------------------------------------------------
// Flag resolution
// ---------------------------------------------------------------------------

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(detail::parse_number(tok, what));
  if (out.empty()) throw ValidationError(what + ": empty value list");
  return out;
}

Eigen::MatrixXd parse_square_matrix(const std::string& text, const std::string& what) {
  const std::vector<double> v = parse_double_list(text, what);
  const auto d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(v.size()))));
  if (d * d != static_cast<int>(v.size())) {
    throw ValidationError(what + ": need a square row-major matrix, got " +
                          std::to_string(v.size()) + " values");
  }
  Eigen::MatrixXd m(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = v[static_cast<size_t>(i * d + j)];
  }
  return m;
}

TransformSpec resolve_transform(const DataFlags& f) {
  TransformSpec t;
  t.kind = f.log_transform ? TransformSpec::Kind::log_scale : TransformSpec::Kind::none;
  t.pre_scale = f.pre_scale;
  t.moe_z = f.moe_z;
  t.validate();
  return t;
}

McmcConfig resolve_mcmc(const McmcFlags& f) {
  McmcConfig cfg;
  cfg.iterations = f.iterations;
  cfg.burn_in = f.burn_in;
  cfg.thin = f.thin;
  cfg.seed = f.seed;
  cfg.chains = f.chains;
  cfg.adapt = !f.no_adapt;
  for (const auto& kv : f.proposal_sd) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == kv.size()) {
      throw ValidationError("--proposal-sd expects name=value, got '" + kv + "'");
    }
    cfg.proposal_sd[kv.substr(0, eq)] =
        detail::parse_number(kv.substr(eq + 1), "proposal sd for " + kv.substr(0, eq));
  }
  cfg.validate();
  return cfg;
}

PriorSpec resolve_prior(const PriorFlags& f) {
  PriorSpec p;
  if (f.sigma_df) p.sigma_iw_df = *f.sigma_df;
  if (!f.sigma_scale.empty()) p.sigma_iw_scale = parse_square_matrix(f.sigma_scale, "--sigma-scale");
  if (!f.sigma_fixed.empty()) p.sigma_iw_fixed = parse_square_matrix(f.sigma_fixed, "--sigma-fixed");
  if (!f.beta_fixed.empty()) {
    std::vector<Eigen::VectorXd> betas;
    std::stringstream ss(f.beta_fixed);
    std::string group;
    while (std::getline(ss, group, ';')) {
      const std::vector<double> v = parse_double_list(group, "--beta-fixed");
      betas.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(),
                                                           static_cast<Eigen::Index>(v.size())));
    }
    if (betas.empty()) throw ValidationError("--beta-fixed: no outcomes given");
    p.beta_fixed = std::move(betas);
  }
  if (f.beta_sd) {
    p.beta_proper = true;
    p.beta_sd = *f.beta_sd;
  }
  if (f.tau_lo) p.tau_lo = *f.tau_lo;
  if (f.tau_hi) p.tau_hi = *f.tau_hi;
  if (f.eta_mean) p.eta_mean = *f.eta_mean;
  if (f.eta_sd) p.eta_sd = *f.eta_sd;
  p.rho_fixed = f.rho_fixed;
  p.rho1_fixed = f.rho1_fixed;
  p.rho2_fixed = f.rho2_fixed;
  p.tau1_fixed = f.tau1_fixed;
  p.tau2_fixed = f.tau2_fixed;
  p.eta0_fixed = f.eta0_fixed;
  p.eta1_fixed = f.eta1_fixed;
  return p;
}

Adjacency load_neighbors_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open neighbor list: " + path);
  return parse_neighbor_list(in);
}

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec || !std::filesystem::is_directory(out)) {
    throw ValidationError("cannot create output directory: " + out);
  }
}

std::vector<ModelSpec> resolve_models(const std::vector<std::string>& names,
                                      const PriorFlags& pf) {
  std::vector<ModelSpec> models;
  for (const auto& name : names) {
    ModelSpec ms;
    ms.kind = model_kind_from_name(name);
    ms.prior = resolve_prior(pf);
    models.push_back(std::move(ms));
  }
  if (models.empty()) throw ValidationError("no models requested");
  return models;
}

std::string scale_note(const TransformSpec& t) {
  if (t.kind == TransformSpec::Kind::log_scale) {
    return "log(" + detail::format_g17(t.pre_scale) + " * estimate)";
  }
  return "identity";
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

int cmd_fit(const DataFlags& df, const McmcFlags& mf, const PriorFlags& pf,
            const std::string& model_name, const std::string& out_dir) {
  const Adjacency adj = load_neighbors_file(df.neighbors);
  const TransformSpec transform = resolve_transform(df);
  const SurveyDataset data = load_survey_csv(df.data, adj, transform);
  ModelSpec model;
  model.kind = model_kind_from_name(model_name);
  model.prior = resolve_prior(pf);
  const McmcConfig cfg = resolve_mcmc(mf);
  ensure_out_dir(out_dir);

  const PosteriorDraws draws = fit(data, model, cfg);
  const SummaryReport rep = posterior_summary(draws);

  std::map<std::string, std::string> meta;
  meta["config_digest"] = config_digest(model, cfg);
  meta["model"] = model_kind_name(model.kind);
  meta["seed"] = std::to_string(cfg.seed);
  meta["analysis_scale"] = scale_note(transform);
  meta["data"] = df.data;
  meta["neighbors"] = df.neighbors;
  save_json(summary_to_json(rep, meta), out_dir + "/summary.json");
  for (int c = 0; c < cfg.chains; ++c) {
    save_chain_csv(draws, c, out_dir + "/chain_" + std::to_string(c + 1) + ".csv");
  }

  std::cout << "fit " << model_kind_name(model.kind) << ": n=" << data.n() << " m=" << data.m
            << " retained=" << draws.total_retained() << " across " << cfg.chains
            << " chain(s)\n";
  for (const auto& w : rep.warnings) std::cout << "warning: " << w << "\n";
  std::cout << "wrote " << out_dir << "/summary.json and " << cfg.chains
            << " chain CSV file(s)\n";
  return 0;
}

int cmd_simulate(const std::string& protocol_path, const std::vector<std::string>& model_names,
                 const McmcFlags& mf, const PriorFlags& pf, const std::string& out_dir) {
  const SimProtocol protocol = load_sim_protocol(protocol_path);
  const std::vector<ModelSpec> models = resolve_models(model_names, pf);
  const McmcConfig cfg = resolve_mcmc(mf);
  ensure_out_dir(out_dir);

  const SimStudyReport rep = run_sim_study(protocol, models, cfg);

  std::map<std::string, std::string> meta;
  meta["protocol"] = protocol_path;
  meta["seed"] = std::to_string(cfg.seed);
  for (const auto& ms : models) {
    meta["config_digest:" + model_kind_name(ms.kind)] = config_digest(ms, cfg);
  }
  save_json(sim_study_to_json(rep, meta), out_dir + "/sim_study.json");

  std::cout << "simulate: " << rep.replicates << " replicate(s), " << rep.model_names.size()
            << " model(s), n=" << rep.area_ids.size() << " m=" << rep.m << "\n";
  for (size_t mi = 0; mi < rep.model_names.size(); ++mi) {
    const Eigen::VectorXd mm = rep.mean_mse(static_cast<int>(mi));
    std::cout << "  " << rep.model_names[mi] << " mean MSE:";
    for (Eigen::Index j = 0; j < mm.size(); ++j) std::cout << ' ' << mm[j];
    std::cout << "\n";
  }
  std::cout << "wrote " << out_dir << "/sim_study.json\n";
  return 0;
}

int cmd_loo(const DataFlags& df, const McmcFlags& mf, const PriorFlags& pf,
            const std::string& model_name, const std::string& out_dir) {
  const Adjacency adj = load_neighbors_file(df.neighbors);
  const TransformSpec transform = resolve_transform(df);
  const SurveyDataset data = load_survey_csv(df.data, adj, transform);
  ModelSpec model;
  model.kind = model_kind_from_name(model_name);
  model.prior = resolve_prior(pf);
  const McmcConfig cfg = resolve_mcmc(mf);
  ensure_out_dir(out_dir);

  const LooResult loo = loo_mspe(data, model, cfg);

  ModelEvaluation ev;
  ev.model = model_kind_name(model.kind);
  ev.overall = loo.mspe;
  ev.per_location = loo.per_location;
  EvaluationReport rep = build_evaluation_report(adj.ids, data.m, {std::move(ev)});
  rep.metadata["config_digest"] = config_digest(model, cfg);
  rep.metadata["seed"] = std::to_string(cfg.seed);
  rep.metadata["analysis_scale"] = scale_note(transform);
  rep.metadata["evaluation"] = "leave-one-out mean squared prediction error";
  save_json(evaluation_to_json(rep), out_dir + "/loo.json");
  std::ofstream csv(out_dir + "/loo.csv");
  if (!csv) throw ValidationError("cannot open output file: " + out_dir + "/loo.csv");
  write_evaluation_csv(rep, csv);

  std::cout << "loo " << model_kind_name(model.kind) << ": MSPE";
  for (Eigen::Index j = 0; j < loo.mspe.size(); ++j) std::cout << ' ' << loo.mspe[j];
  std::cout << "\nwrote " << out_dir << "/loo.json and " << out_dir << "/loo.csv\n";
  return 0;
}

int cmd_validate(const DataFlags& df, const std::string& truth_path,
                 const std::vector<std::string>& model_names, long replicate,
                 const McmcFlags& mf, const PriorFlags& pf, const std::string& out_dir) {
  const Adjacency adj = load_neighbors_file(df.neighbors);
  const TransformSpec transform = resolve_transform(df);
  const SurveyDataset data = load_survey_csv(df.data, adj, transform);
  const Eigen::MatrixXd truth = load_truth_csv(truth_path, adj, data.m, transform);
  const std::vector<ModelSpec> models = resolve_models(model_names, pf);
  const McmcConfig base_cfg = resolve_mcmc(mf);
  ensure_out_dir(out_dir);

  std::map<std::string, std::string> meta;
  std::vector<ModelEvaluation> evals;
  for (const auto& ms : models) {
    McmcConfig cfg = base_cfg;
    // same per-model seed rule as the simulation-study loop, so scoring a
    // dumped replicate reproduces that replicate's fits exactly
    cfg.seed = fit_seed(base_cfg.seed, ms.kind, replicate);
    const PosteriorDraws draws = fit(data, ms, cfg);
    const MseResult mse = posterior_mse(draws.pooled_theta(), truth);
    ModelEvaluation ev;
    ev.model = model_kind_name(ms.kind);
    ev.overall = mse.overall;
    ev.per_location = mse.per_location;
    evals.push_back(std::move(ev));
    meta["config_digest:" + model_kind_name(ms.kind)] = config_digest(ms, cfg);
    meta["fit_seed:" + model_kind_name(ms.kind)] = std::to_string(cfg.seed);
  }
  EvaluationReport rep = build_evaluation_report(adj.ids, data.m, std::move(evals));
  meta["seed"] = std::to_string(base_cfg.seed);
  meta["replicate"] = std::to_string(replicate);
  meta["analysis_scale"] = scale_note(transform);
  meta["evaluation"] = "posterior-mean squared error against supplied truth";
  rep.metadata = std::move(meta);
  save_json(evaluation_to_json(rep), out_dir + "/validate.json");
  std::ofstream csv(out_dir + "/validate.csv");
  if (!csv) throw ValidationError("cannot open output file: " + out_dir + "/validate.csv");
  write_evaluation_csv(rep, csv);

  for (const auto& ev : rep.models) {
    std::cout << "validate " << ev.model << ": MSE";
    for (Eigen::Index j = 0; j < ev.overall.size(); ++j) std::cout << ' ' << ev.overall[j];
    std::cout << "\n";
  }
  std::cout << "wrote " << out_dir << "/validate.json and " << out_dir << "/validate.csv\n";
  return 0;
}

int cmd_diagnose(const DataFlags& df, int permutations, std::uint64_t moran_seed,
                 const std::string& out_dir) {
  const Adjacency adj = load_neighbors_file(df.neighbors);
  const TransformSpec transform = resolve_transform(df);
  const SurveyDataset data = load_survey_csv(df.data, adj, transform);
  ensure_out_dir(out_dir);

  const OlsDiagnostics d = ols_diagnostics(data, permutations, moran_seed);
  nlohmann::json j = ols_to_json(d);
  j["metadata"]["analysis_scale"] = scale_note(transform);
  j["metadata"]["moran_permutations"] = std::to_string(permutations);
  j["metadata"]["moran_seed"] = std::to_string(moran_seed);
  j["metadata"]["data"] = df.data;
  save_json(j, out_dir + "/diagnostics.json");

  for (size_t k = 0; k < d.outcomes.size(); ++k) {
    const auto& o = d.outcomes[k];
    std::cout << "outcome " << (k + 1) << ": residual sd " << o.residual_sd << ", Moran's I "
              << o.moran.statistic << " (p=" << o.moran.p_value << ")\n";
  }
  if (data.m > 1) {
    std::cout << "residual cross-correlation (1,2): " << d.residual_correlation(0, 1)
              << " (p=" << d.correlation_p_value(0, 1) << ")\n";
  }
  std::cout << "wrote " << out_dir << "/diagnostics.json\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multivariate small area estimation with spatially dependent random effects"};
  app.require_subcommand(1);

  DataFlags df;
  McmcFlags mf;
  PriorFlags pf;
  std::string model_name = "iw";
  std::vector<std::string> model_names;
  std::string out_dir;
  std::string protocol_path;
  std::string truth_path;
  long replicate = 0;
  int moran_permutations = kMoranDefaultPermutations;
  std::uint64_t moran_seed = kMoranDefaultSeed;

  CLI::App* fit_cmd = app.add_subcommand(
      "fit", "fit one model and write posterior summaries plus per-chain draw CSVs");
  add_data_flags(fit_cmd, df);
  fit_cmd->add_option("--model", model_name, "iw, separable or gmcar")->required();
  fit_cmd->add_option("--out", out_dir, "output directory")->required();
  add_mcmc_flags(fit_cmd, mf);
  add_prior_flags(fit_cmd, pf);

  CLI::App* sim_cmd = app.add_subcommand(
      "simulate", "run a seeded simulation study from a protocol file and score every model");
  sim_cmd->add_option("--protocol", protocol_path, "protocol file (key value lines)")->required();
  sim_cmd->add_option("--models", model_names, "models to fit (any of iw, separable, gmcar)")
      ->required()
      ->delimiter(',');
  sim_cmd->add_option("--out", out_dir, "output directory")->required();
  add_mcmc_flags(sim_cmd, mf);
  add_prior_flags(sim_cmd, pf);

  CLI::App* loo_cmd = app.add_subcommand(
      "loo", "leave-one-out cross validation: refit with each area held out and score "
             "predictions against the direct estimates");
  add_data_flags(loo_cmd, df);
  loo_cmd->add_option("--model", model_name, "iw, separable or gmcar")->required();
  loo_cmd->add_option("--out", out_dir, "output directory")->required();
  add_mcmc_flags(loo_cmd, mf);
  add_prior_flags(loo_cmd, pf);

  CLI::App* val_cmd = app.add_subcommand(
      "validate", "fit models and score posterior means against a supplied truth CSV");
  add_data_flags(val_cmd, df);
  val_cmd->add_option("--truth", truth_path, "truth CSV (area_id,outcome,value)")->required();
  val_cmd->add_option("--models", model_names, "models to fit (any of iw, separable, gmcar)")
      ->required()
      ->delimiter(',');
  val_cmd->add_option("--replicate", replicate,
                      "replicate index for per-model seed derivation (matches the "
                      "simulation-study seed rule)")
      ->capture_default_str();
  val_cmd->add_option("--out", out_dir, "output directory")->required();
  add_mcmc_flags(val_cmd, mf);
  add_prior_flags(val_cmd, pf);

  CLI::App* diag_cmd = app.add_subcommand(
      "diagnose", "regression screens: per-outcome least squares, residual Moran's I, and "
                  "cross-outcome residual correlation");
  add_data_flags(diag_cmd, df);
  diag_cmd->add_option("--moran-permutations", moran_permutations,
                       "Monte Carlo permutations for the Moran's I p-value")
      ->capture_default_str();
  diag_cmd->add_option("--moran-seed", moran_seed, "permutation RNG seed")
      ->capture_default_str();
  diag_cmd->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(df, mf, pf, model_name, out_dir);
    if (sim_cmd->parsed()) return cmd_simulate(protocol_path, model_names, mf, pf, out_dir);
    if (loo_cmd->parsed()) return cmd_loo(df, mf, pf, model_name, out_dir);
    if (val_cmd->parsed()) {
      return cmd_validate(df, truth_path, model_names, replicate, mf, pf, out_dir);
    }
    if (diag_cmd->parsed()) return cmd_diagnose(df, moran_permutations, moran_seed, out_dir);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
