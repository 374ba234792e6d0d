#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mvfh/car.hpp"
#include "mvfh/concurrency.hpp"
#include "mvfh/covstruct.hpp"
#include "mvfh/dataset.hpp"
#include "mvfh/errors.hpp"
#include "mvfh/adjacency.hpp"
#include "mvfh/linalg.hpp"
#include "mvfh/rng.hpp"
#include "mvfh/sampler.hpp"

namespace mvfh {

// ---------------------------------------------------------------------------
// Simulation protocol: a flat key = value file describing how to generate
// bivariate survey datasets from a latent cross-field spatial process.
//
// Keys:
//   lattice               grid:RxC  or  file:PATH (neighbor-pair file)
//   gmcar.tau1/tau2       latent scale (standard deviation) per field
//   gmcar.rho1/rho2       spatial smoothing in (0,1) per field
//   gmcar.eta0/eta1       cross-field loadings (same-area, neighbor)
//   beta.1 / beta.2       regression coefficients, comma list, intercept first
//   covariates.path       CSV area_id,covariate_1..covariate_p
//   covariates.synthetic  true, or overrides "rho=0.95 mean=40 sd=8"
//   variances.path        CSV area_id,outcome,variance
//   variances.constant    single sampling variance for every (area, outcome)
//   seed                  base RNG seed
//   replicates            number of datasets per study
// ---------------------------------------------------------------------------

struct SyntheticCovariate {
  double rho = 0.95;
  double mean = 40.0;
  double sd = 8.0;
};

struct SimProtocol {
  int grid_rows = 0;
  int grid_cols = 0;
  std::string neighbors_path;  // exclusive with grid dimensions

  GmcarParams gmcar;  // variances stored internally; file keys give SDs

  std::vector<Eigen::VectorXd> beta;  // [m] coefficient vectors, intercept first

  std::string covariates_path;
  bool covariates_synthetic = false;
  SyntheticCovariate synthetic;

  std::string variances_path;
  double variance_constant = -1.0;  // <0 means unset

  std::uint64_t seed = 1;
  int replicates = 1;

  int m() const { return static_cast<int>(beta.size()); }

  void validate() const {
    const bool grid = grid_rows > 0 || grid_cols > 0;
    if (grid == !neighbors_path.empty()) {
      throw ValidationError("protocol: exactly one of grid and neighbor-file lattice required");
    }
    if (grid && (grid_rows < 1 || grid_cols < 1)) {
      throw ValidationError("protocol: grid dimensions must be positive");
    }
    if (beta.size() != 2) {
      throw ValidationError("protocol: beta.1 and beta.2 are both required");
    }
    if (beta[0].size() != beta[1].size() || beta[0].size() < 1) {
      throw ValidationError("protocol: beta.1 and beta.2 must have equal, positive length");
    }
    if (covariates_path.empty() == !covariates_synthetic) {
      throw ValidationError(
          "protocol: exactly one of covariates.path and covariates.synthetic required");
    }
    if (variances_path.empty() == (variance_constant < 0.0)) {
      throw ValidationError(
          "protocol: exactly one of variances.path and variances.constant required");
    }
    if (variance_constant == 0.0) {
      throw ValidationError("protocol: variances.constant must be positive");
    }
    if (!synthetic_ok()) throw ValidationError("protocol: invalid covariates.synthetic settings");
    if (replicates < 1) throw ValidationError("protocol: replicates must be >= 1");
    gmcar.validate();
  }

 private:
  bool synthetic_ok() const {
    if (!covariates_synthetic) return true;
    return synthetic.rho > 0.0 && synthetic.rho < 1.0 && synthetic.sd > 0.0 &&
           std::isfinite(synthetic.mean);
  }
};

namespace detail {

inline double parse_protocol_number(const std::string& key, const std::string& value) {
  return parse_number(value, "protocol value for " + key);
}

inline Eigen::VectorXd parse_number_list(const std::string& key, const std::string& value) {
  std::vector<double> vals;
  std::stringstream ss(value);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) throw ValidationError("protocol: empty entry in list for " + key);
    vals.push_back(parse_protocol_number(key, tok));
  }
  if (vals.empty()) throw ValidationError("protocol: empty list for " + key);
  return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

inline void parse_synthetic_spec(const std::string& value, SyntheticCovariate& out) {
  if (value == "true" || value == "1" || value == "yes") return;  // defaults
  std::stringstream ss(value);
  std::string tok;
  while (ss >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("protocol: covariates.synthetic expects true or k=v pairs, got '" +
                            tok + "'");
    }
    const std::string k = tok.substr(0, eq);
    const double v = parse_protocol_number("covariates.synthetic." + k, tok.substr(eq + 1));
    if (k == "rho") {
      out.rho = v;
    } else if (k == "mean") {
      out.mean = v;
    } else if (k == "sd") {
      out.sd = v;
    } else {
      throw ValidationError("protocol: unknown covariates.synthetic setting '" + k + "'");
    }
  }
}

inline void parse_lattice_spec(const std::string& value, SimProtocol& p) {
  if (value.rfind("grid:", 0) == 0) {
    const std::string dims = value.substr(5);
    const auto x = dims.find('x');
    if (x == std::string::npos) {
      throw ValidationError("protocol: lattice grid spec must be grid:RxC, got '" + value + "'");
    }
    p.grid_rows = static_cast<int>(parse_int(trim(dims.substr(0, x)), "lattice grid rows"));
    p.grid_cols = static_cast<int>(parse_int(trim(dims.substr(x + 1)), "lattice grid cols"));
  } else if (value.rfind("file:", 0) == 0) {
    p.neighbors_path = trim(value.substr(5));
    if (p.neighbors_path.empty()) throw ValidationError("protocol: empty lattice file path");
  } else {
    throw ValidationError("protocol: lattice must be grid:RxC or file:PATH, got '" + value + "'");
  }
}

}  // namespace detail

inline SimProtocol parse_sim_protocol(std::istream& in) {
  SimProtocol p;
  double tau1_sd = -1.0, tau2_sd = -1.0;
  bool have_rho1 = false, have_rho2 = false, have_eta0 = false, have_eta1 = false;
  bool have_lattice = false, have_seed = false, have_replicates = false;
  std::string line;
  int lineno = 0;
  Eigen::VectorXd beta1, beta2;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("protocol line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ValidationError("protocol line " + std::to_string(lineno) + ": empty key or value");
    }
    if (key == "lattice") {
      detail::parse_lattice_spec(value, p);
      have_lattice = true;
    } else if (key == "gmcar.tau1") {
      tau1_sd = detail::parse_protocol_number(key, value);
    } else if (key == "gmcar.tau2") {
      tau2_sd = detail::parse_protocol_number(key, value);
    } else if (key == "gmcar.rho1") {
      p.gmcar.rho1 = detail::parse_protocol_number(key, value);
      have_rho1 = true;
    } else if (key == "gmcar.rho2") {
      p.gmcar.rho2 = detail::parse_protocol_number(key, value);
      have_rho2 = true;
    } else if (key == "gmcar.eta0") {
      p.gmcar.eta0 = detail::parse_protocol_number(key, value);
      have_eta0 = true;
    } else if (key == "gmcar.eta1") {
      p.gmcar.eta1 = detail::parse_protocol_number(key, value);
      have_eta1 = true;
    } else if (key == "beta.1") {
      beta1 = detail::parse_number_list(key, value);
    } else if (key == "beta.2") {
      beta2 = detail::parse_number_list(key, value);
    } else if (key == "covariates.path") {
      p.covariates_path = value;
    } else if (key == "covariates.synthetic") {
      p.covariates_synthetic = true;
      detail::parse_synthetic_spec(value, p.synthetic);
    } else if (key == "variances.path") {
      p.variances_path = value;
    } else if (key == "variances.constant") {
      p.variance_constant = detail::parse_protocol_number(key, value);
    } else if (key == "seed") {
      p.seed = static_cast<std::uint64_t>(detail::parse_int(value, "protocol seed"));
      have_seed = true;
    } else if (key == "replicates") {
      p.replicates = static_cast<int>(detail::parse_int(value, "protocol replicates"));
      have_replicates = true;
    } else {
      throw ValidationError("protocol: unknown key '" + key + "'");
    }
  }
  if (!have_lattice) throw ValidationError("protocol: missing lattice");
  if (tau1_sd <= 0.0 || tau2_sd <= 0.0) {
    throw ValidationError("protocol: gmcar.tau1 and gmcar.tau2 must be set and positive");
  }
  if (!have_rho1 || !have_rho2 || !have_eta0 || !have_eta1) {
    throw ValidationError("protocol: gmcar.rho1, gmcar.rho2, gmcar.eta0, gmcar.eta1 all required");
  }
  if (beta1.size() == 0 || beta2.size() == 0) {
    throw ValidationError("protocol: beta.1 and beta.2 are both required");
  }
  if (!have_seed) throw ValidationError("protocol: missing seed");
  if (!have_replicates) throw ValidationError("protocol: missing replicates");
  p.gmcar.tau1_sq = tau1_sd * tau1_sd;
  p.gmcar.tau2_sq = tau2_sd * tau2_sd;
  p.beta = {beta1, beta2};
  p.validate();
  return p;
}

// Loads a protocol file, resolving relative data paths against its directory.
inline SimProtocol load_sim_protocol(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open protocol file: " + path);
  SimProtocol p = parse_sim_protocol(in);
  const auto slash = path.find_last_of('/');
  if (slash != std::string::npos) {
    const std::string dir = path.substr(0, slash + 1);
    auto resolve = [&dir](std::string& rel) {
      if (!rel.empty() && rel.front() != '/') rel = dir + rel;
    };
    resolve(p.neighbors_path);
    resolve(p.covariates_path);
    resolve(p.variances_path);
  }
  return p;
}

inline Adjacency protocol_lattice(const SimProtocol& p) {
  if (!p.neighbors_path.empty()) {
    std::ifstream in(p.neighbors_path);
    if (!in) throw ValidationError("cannot open neighbor file: " + p.neighbors_path);
    return parse_neighbor_list(in);
  }
  return grid_lattice(p.grid_rows, p.grid_cols);
}

// ---------------------------------------------------------------------------
// Field generation
// ---------------------------------------------------------------------------

// Draws the latent bivariate field u = (u1', u2')' (outcome-major, length 2n):
// u2 from its marginal spatial prior, then u1 around the cross-loaded mean.
inline Eigen::VectorXd draw_gmcar_field(const GmcarParams& g, const Adjacency& adj,
                                        RngStream& rng) {
  g.validate();
  const int n = adj.n;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
  SparseChol chol2;
  chol2.factorize(car_precision(adj, CarParams(g.rho2, g.tau2_sq)), "latent field u2 precision");
  Eigen::VectorXd u2 = chol2.sample_gaussian(zero, rng);
  SparseChol chol1;
  chol1.factorize(car_precision(adj, CarParams(g.rho1, g.tau1_sq)), "latent field u1 precision");
  Eigen::VectorXd u1 = chol1.sample_gaussian(zero, rng);
  // add the cross-field mean A u2 = eta0 u2 + eta1 W u2
  u1 += g.eta0 * u2 + g.eta1 * (adj.W * u2);
  Eigen::VectorXd u(2 * n);
  u.head(n) = u1;
  u.tail(n) = u2;
  return u;
}

inline Eigen::VectorXd draw_gmcar_field(const GmcarParams& g, const Adjacency& adj,
                                        std::uint64_t seed) {
  RngStream rng(seed);
  return draw_gmcar_field(g, adj, rng);
}

// Smooth synthetic covariate: a spatially autocorrelated draw standardized to
// the requested mean and spread. Deterministic given the protocol seed.
inline Eigen::VectorXd synthetic_covariate(const SyntheticCovariate& s, const Adjacency& adj,
                                           std::uint64_t protocol_seed) {
  RngStream rng = RngStream(protocol_seed).substream(1, 0);
  const int n = adj.n;
  SparseChol chol;
  chol.factorize(car_precision(adj, CarParams(s.rho, 1.0)), "synthetic covariate precision");
  Eigen::VectorXd x = chol.sample_gaussian(Eigen::VectorXd::Zero(n), rng);
  const double mu = x.mean();
  double sd = std::sqrt((x.array() - mu).square().sum() / static_cast<double>(n - 1));
  if (sd <= 0.0) throw NumericError("synthetic covariate degenerate (zero spread)");
  return s.mean + (x.array() - mu) * (s.sd / sd);
}

namespace detail {

// area-id-indexed covariate file: header area_id,covariate_1..covariate_p
inline Eigen::MatrixXd read_covariate_csv(std::istream& in, const Adjacency& adj,
                                          const std::string& what) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(what + ": empty file");
  auto header = split_csv_line(line);
  for (auto& h : header) h = trim(h);
  if (header.size() < 2 || header[0] != "area_id") {
    throw ValidationError(what + ": header must start with area_id,covariate_1,...");
  }
  const int p = static_cast<int>(header.size()) - 1;
  for (int k = 0; k < p; ++k) {
    const std::string want = "covariate_" + std::to_string(k + 1);
    if (header[k + 1] != want) {
      throw ValidationError(what + ": expected header column '" + want + "', got '" +
                            header[k + 1] + "'");
    }
  }
  const int n = adj.n;
  Eigen::MatrixXd X(n, p);
  std::vector<bool> seen(static_cast<size_t>(n), false);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (static_cast<int>(f.size()) != p + 1) {
      throw ValidationError(what + ": wrong field count in row '" + line + "'");
    }
    const int i = adj.index_of_id(trim(f[0]));
    if (seen[static_cast<size_t>(i)]) {
      throw ValidationError(what + ": duplicate area '" + trim(f[0]) + "'");
    }
    seen[static_cast<size_t>(i)] = true;
    for (int k = 0; k < p; ++k) {
      X(i, k) = parse_number(trim(f[k + 1]), what + " covariate value");
    }
  }
  for (int i = 0; i < n; ++i) {
    if (!seen[static_cast<size_t>(i)]) {
      throw ValidationError(what + ": missing area '" + adj.ids[i] + "'");
    }
  }
  return X;
}

// variance file: header area_id,outcome,variance
inline Eigen::MatrixXd read_variance_csv(std::istream& in, const Adjacency& adj, int m,
                                         const std::string& what) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(what + ": empty file");
  auto header = split_csv_line(line);
  for (auto& h : header) h = trim(h);
  if (header.size() != 3 || header[0] != "area_id" || header[1] != "outcome" ||
      header[2] != "variance") {
    throw ValidationError(what + ": header must be area_id,outcome,variance");
  }
  const int n = adj.n;
  Eigen::MatrixXd V = Eigen::MatrixXd::Constant(n, m, -1.0);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 3) throw ValidationError(what + ": wrong field count in row '" + line + "'");
    const int i = adj.index_of_id(trim(f[0]));
    const long j = parse_int(trim(f[1]), what + " outcome");
    if (j < 1 || j > m) {
      throw ValidationError(what + ": outcome index out of range in row '" + line + "'");
    }
    if (V(i, j - 1) >= 0.0) {
      throw ValidationError(what + ": duplicate (area, outcome) in row '" + line + "'");
    }
    const double v = parse_number(trim(f[2]), what + " variance");
    if (!(v > 0.0)) throw ValidationError(what + ": variance must be positive in row '" + line +
                                          "'");
    V(i, j - 1) = v;
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      if (V(i, j) < 0.0) {
        throw ValidationError(what + ": missing variance for area '" + adj.ids[i] + "' outcome " +
                              std::to_string(j + 1));
      }
    }
  }
  return V;
}

}  // namespace detail

inline Eigen::MatrixXd protocol_covariates(const SimProtocol& p, const Adjacency& adj) {
  if (p.covariates_synthetic) {
    Eigen::MatrixXd X(adj.n, 1);
    X.col(0) = synthetic_covariate(p.synthetic, adj, p.seed);
    return X;
  }
  std::ifstream in(p.covariates_path);
  if (!in) throw ValidationError("cannot open covariate file: " + p.covariates_path);
  return detail::read_covariate_csv(in, adj, "covariates");
}

inline Eigen::MatrixXd protocol_variances(const SimProtocol& p, const Adjacency& adj) {
  if (p.variance_constant > 0.0) {
    return Eigen::MatrixXd::Constant(adj.n, p.m(), p.variance_constant);
  }
  std::ifstream in(p.variances_path);
  if (!in) throw ValidationError("cannot open variance file: " + p.variances_path);
  return detail::read_variance_csv(in, adj, p.m(), "variances");
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

struct SimDataset {
  SurveyDataset data;
  Eigen::MatrixXd theta_true;  // n x m
  Eigen::MatrixXd u_true;      // n x m (area rows)
};

namespace detail {
// fixed substream tags so each randomness source is independent of the others
inline constexpr std::uint64_t kFieldStream = 2;
inline constexpr std::uint64_t kNoiseStream = 3;
}  // namespace detail

// Generates replicate r (0-based) of the protocol: covariates and sampling
// variances are shared across replicates, the latent field and sampling noise
// are replicate-specific.
inline SimDataset make_dataset(const SimProtocol& p, int replicate) {
  p.validate();
  if (replicate < 0) throw ValidationError("make_dataset: replicate must be >= 0");
  const Adjacency adj = protocol_lattice(p);
  const int n = adj.n;
  const int m = p.m();
  const Eigen::MatrixXd covs = protocol_covariates(p, adj);
  const Eigen::MatrixXd vars = protocol_variances(p, adj);
  const int pcols = static_cast<int>(covs.cols());
  if (p.beta[0].size() != pcols + 1) {
    throw ValidationError("make_dataset: beta length " + std::to_string(p.beta[0].size()) +
                          " does not match intercept + " + std::to_string(pcols) +
                          " covariate(s)");
  }

  RngStream base(p.seed);
  RngStream field_rng = base.substream(detail::kFieldStream, static_cast<std::uint64_t>(replicate));
  RngStream noise_rng = base.substream(detail::kNoiseStream, static_cast<std::uint64_t>(replicate));

  const Eigen::VectorXd u = draw_gmcar_field(p.gmcar, adj, field_rng);

  SimDataset out;
  out.u_true.resize(n, m);
  for (int j = 0; j < m; ++j) out.u_true.col(j) = u.segment(j * n, n);

  Eigen::MatrixXd X1(n, pcols + 1);
  X1.col(0).setOnes();
  X1.rightCols(pcols) = covs;

  out.theta_true.resize(n, m);
  for (int j = 0; j < m; ++j) {
    out.theta_true.col(j) = X1 * p.beta[j] + out.u_true.col(j);
  }

  SurveyDataset& d = out.data;
  d.adj = adj;
  d.m = m;
  d.y.resize(n, m);
  d.sampling_cov.resize(static_cast<size_t>(n));
  d.X.assign(static_cast<size_t>(m), X1);
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(m, m);
    for (int j = 0; j < m; ++j) {
      S(j, j) = vars(i, j);
      d.y(i, j) = out.theta_true(i, j) + std::sqrt(vars(i, j)) * noise_rng.normal();
    }
    d.sampling_cov[static_cast<size_t>(i)] = S;
  }
  d.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Simulation study
// ---------------------------------------------------------------------------

// Canonical per-fit seed so independent code paths (study driver, single-fit
// CLI) reproduce the same chains for the same (base seed, model, replicate).
inline std::uint64_t fit_seed(std::uint64_t base_seed, ModelKind kind, long replicate) {
  const std::uint64_t model_tag = 0xF17u + static_cast<std::uint64_t>(kind);
  return RngStream(base_seed)
      .substream(model_tag, static_cast<std::uint64_t>(replicate))
      .seed();
}

struct SimStudyReport {
  std::vector<std::string> model_names;
  std::vector<std::string> area_ids;
  int m = 0;
  int replicates = 0;
  // overall_mse[model] is replicates x m
  std::vector<Eigen::MatrixXd> overall_mse;
  // per_location[model][replicate] is n x m
  std::vector<std::vector<Eigen::MatrixXd>> per_location;
  // exact RNG seed used for each (model, replicate) fit
  std::vector<std::vector<std::uint64_t>> fit_seeds;

  Eigen::VectorXd mean_mse(int model) const {
    return overall_mse[static_cast<size_t>(model)].colwise().mean();
  }
  // replicates in which model a's overall MSE beats model b's, per outcome
  Eigen::VectorXi wins(int a, int b, double* tie_count = nullptr) const {
    Eigen::VectorXi w = Eigen::VectorXi::Zero(m);
    double ties = 0;
    for (int r = 0; r < replicates; ++r) {
      for (int j = 0; j < m; ++j) {
        const double ea = overall_mse[static_cast<size_t>(a)](r, j);
        const double eb = overall_mse[static_cast<size_t>(b)](r, j);
        if (ea < eb) {
          ++w[j];
        } else if (ea == eb) {
          ties += 1;
        }
      }
    }
    if (tie_count) *tie_count = ties;
    return w;
  }
  // per-location percent-better of model b over model a, averaged over replicates
  Eigen::VectorXd mean_percent_better(int a, int b) const {
    Eigen::VectorXd pct = Eigen::VectorXd::Zero(m);
    for (int r = 0; r < replicates; ++r) {
      for (int j = 0; j < m; ++j) {
        const PercentBetter pb =
            percent_better(per_location[static_cast<size_t>(a)][static_cast<size_t>(r)].col(j),
                           per_location[static_cast<size_t>(b)][static_cast<size_t>(r)].col(j));
        pct[j] += pb.pct_b_better;
      }
    }
    return pct / static_cast<double>(replicates);
  }
};

// Fits every model to every replicate dataset and scores posterior-mean theta
// against the generating truth.
inline SimStudyReport run_sim_study(const SimProtocol& protocol,
                                    const std::vector<ModelSpec>& models,
                                    const McmcConfig& cfg) {
  protocol.validate();
  if (models.empty()) throw ValidationError("run_sim_study: no models given");
  const int R = protocol.replicates;
  const int M = static_cast<int>(models.size());

  // generate datasets once (deterministic in the protocol seed)
  std::vector<SimDataset> reps;
  reps.reserve(static_cast<size_t>(R));
  for (int r = 0; r < R; ++r) reps.push_back(make_dataset(protocol, r));

  SimStudyReport rep;
  rep.area_ids = reps[0].data.adj.ids;
  rep.m = protocol.m();
  rep.replicates = R;
  for (const auto& ms : models) rep.model_names.push_back(model_kind_name(ms.kind));
  rep.overall_mse.assign(static_cast<size_t>(M), Eigen::MatrixXd::Zero(R, rep.m));
  rep.per_location.assign(static_cast<size_t>(M),
                          std::vector<Eigen::MatrixXd>(static_cast<size_t>(R)));
  rep.fit_seeds.assign(static_cast<size_t>(M),
                       std::vector<std::uint64_t>(static_cast<size_t>(R), 0));

  parallel_for(M * R, [&](int task) {
    const int mi = task / R;
    const int r = task % R;
    const auto mu = static_cast<size_t>(mi);
    const auto ru = static_cast<size_t>(r);
    McmcConfig c = cfg;
    c.seed = fit_seed(cfg.seed, models[mu].kind, r);
    rep.fit_seeds[mu][ru] = c.seed;
    PosteriorDraws draws = fit(reps[ru].data, models[mu], c);
    MseResult mse = posterior_mse(draws.pooled_theta(), reps[ru].theta_true);
    rep.overall_mse[mu].row(r) = mse.overall.transpose();
    rep.per_location[mu][ru] = mse.per_location;
  });
  return rep;
}

}  // namespace mvfh
