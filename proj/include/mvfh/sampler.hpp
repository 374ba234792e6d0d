#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvfh/adjacency.hpp"
#include "mvfh/car.hpp"
#include "mvfh/concurrency.hpp"
#include "mvfh/convergence.hpp"
#include "mvfh/covstruct.hpp"
#include "mvfh/dataset.hpp"
#include "mvfh/distributions.hpp"
#include "mvfh/errors.hpp"
#include "mvfh/linalg.hpp"
#include "mvfh/mh.hpp"
#include "mvfh/priors.hpp"
#include "mvfh/rng.hpp"

namespace mvfh {

enum class ModelKind { iw, separable, gmcar };

inline std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::iw: return "iw";
    case ModelKind::separable: return "separable";
    case ModelKind::gmcar: return "gmcar";
  }
  return "?";
}

inline ModelKind model_kind_from_name(const std::string& s) {
  if (s == "iw") return ModelKind::iw;
  if (s == "separable") return ModelKind::separable;
  if (s == "gmcar") return ModelKind::gmcar;
  throw ValidationError("unknown model '" + s + "' (expected iw, separable or gmcar)");
}

struct ModelSpec {
  ModelKind kind = ModelKind::iw;
  PriorSpec prior;
};

struct McmcConfig {
  long iterations = 15000;
  long burn_in = 1000;
  long thin = 1;
  std::uint64_t seed = 20240801;
  int chains = 1;
  std::map<std::string, double> proposal_sd;  // per MH parameter, transformed scale
  bool adapt = true;

  void validate() const {
    if (iterations < 1) throw ValidationError("McmcConfig: iterations must be >= 1");
    if (burn_in < 0 || burn_in >= iterations) {
      throw ValidationError("McmcConfig: burn_in must lie in [0, iterations)");
    }
    if (thin < 1) throw ValidationError("McmcConfig: thin must be >= 1");
    if (chains < 1) throw ValidationError("McmcConfig: chains must be >= 1");
    for (const auto& [name, sd] : proposal_sd) {
      if (!(sd > 0.0)) {
        throw ValidationError("McmcConfig: proposal sd for '" + name + "' must be positive");
      }
    }
  }
  long retained() const { return (iterations - burn_in) / thin; }
};

// One chain of retained draws. u and theta are stored area-major regardless of
// the model's internal ordering: column (i-1)*m + (j-1) is area i, outcome j.
struct ChainResult {
  Eigen::MatrixXd beta;       // retained x sum(p_j)
  Eigen::MatrixXd u;          // retained x n*m
  Eigen::MatrixXd theta;      // retained x n*m
  Eigen::MatrixXd structure;  // retained x (model-dependent)
  std::map<std::string, double> acceptance;
  std::uint64_t chain_seed = 0;
};

struct PosteriorDraws {
  ModelKind kind = ModelKind::iw;
  int n = 0;
  int m = 0;
  std::vector<std::string> area_ids;
  std::vector<std::string> beta_names, u_names, theta_names, structure_names;
  std::vector<ChainResult> chains;
  McmcConfig config;

  long total_retained() const {
    long t = 0;
    for (const auto& c : chains) t += c.beta.rows();
    return t;
  }

  Eigen::MatrixXd pooled(const Eigen::MatrixXd ChainResult::* member) const {
    if (chains.empty()) throw ValidationError("PosteriorDraws: no chains");
    Eigen::Index cols = (chains.front().*member).cols();
    Eigen::MatrixXd out(total_retained(), cols);
    Eigen::Index r = 0;
    for (const auto& c : chains) {
      out.middleRows(r, (c.*member).rows()) = c.*member;
      r += (c.*member).rows();
    }
    return out;
  }
  Eigen::MatrixXd pooled_beta() const { return pooled(&ChainResult::beta); }
  Eigen::MatrixXd pooled_u() const { return pooled(&ChainResult::u); }
  Eigen::MatrixXd pooled_theta() const { return pooled(&ChainResult::theta); }
  Eigen::MatrixXd pooled_structure() const { return pooled(&ChainResult::structure); }

  // Per-chain columns for a named parameter (used by convergence diagnostics).
  std::vector<Eigen::VectorXd> chains_of(const std::string& name) const {
    auto locate = [&](const std::vector<std::string>& names,
                      const Eigen::MatrixXd ChainResult::* member,
                      std::vector<Eigen::VectorXd>& out) {
      auto it = std::find(names.begin(), names.end(), name);
      if (it == names.end()) return false;
      Eigen::Index col = it - names.begin();
      for (const auto& c : chains) out.push_back((c.*member).col(col));
      return true;
    };
    std::vector<Eigen::VectorXd> out;
    if (locate(beta_names, &ChainResult::beta, out)) return out;
    if (locate(u_names, &ChainResult::u, out)) return out;
    if (locate(theta_names, &ChainResult::theta, out)) return out;
    if (locate(structure_names, &ChainResult::structure, out)) return out;
    throw ValidationError("unknown parameter name: " + name);
  }

  std::vector<std::string> all_names() const {
    std::vector<std::string> out;
    out.insert(out.end(), beta_names.begin(), beta_names.end());
    out.insert(out.end(), structure_names.begin(), structure_names.end());
    out.insert(out.end(), u_names.begin(), u_names.end());
    out.insert(out.end(), theta_names.begin(), theta_names.end());
    return out;
  }
};

namespace detail {

inline double proposal_sd_for(const McmcConfig& cfg, const std::string& name) {
  auto it = cfg.proposal_sd.find(name);
  return it != cfg.proposal_sd.end() ? it->second : 0.5;
}

// Per-fit immutable precomputations shared by every chain.
struct FitContext {
  const SurveyDataset& data;
  const ModelSpec& model;
  const McmcConfig& cfg;
  int n, m, P;
  std::vector<int> beta_offset;                // per outcome
  std::vector<Eigen::MatrixXd> sigma_inv;      // per area, m x m
  std::vector<Eigen::MatrixXd> design_block;   // per area, m x P
  Eigen::MatrixXd xtsx;                        // X' Sigma^{-1} X, P x P
  Eigen::MatrixXd beta_prior_prec;             // P x P
  SparseMat sampling_prec;                     // n*m internal order
  std::optional<CarSpectrum> spectrum;
  bool outcome_major;                          // gmcar stores u outcome-major

  FitContext(const SurveyDataset& d, const ModelSpec& mdl, const McmcConfig& c)
      : data(d), model(mdl), cfg(c), n(d.n()), m(d.m) {
    data.validate();
    cfg.validate();
    model.prior.validate(m);
    if (model.kind == ModelKind::gmcar && m != 2) {
      throw ValidationError("gmcar model requires exactly 2 outcomes, data has " +
                            std::to_string(m));
    }
    outcome_major = (model.kind == ModelKind::gmcar);

    beta_offset.resize(m);
    P = 0;
    for (int j = 0; j < m; ++j) {
      beta_offset[j] = P;
      P += static_cast<int>(data.X[j].cols());
    }
    if (model.prior.beta_fixed) {
      const auto& fb = *model.prior.beta_fixed;
      if (static_cast<int>(fb.size()) != m) {
        throw ValidationError("PriorSpec: beta_fixed needs one vector per outcome");
      }
      for (int j = 0; j < m; ++j) {
        if (fb[j].size() != data.X[j].cols()) {
          throw ValidationError("PriorSpec: beta_fixed length mismatch for outcome " +
                                std::to_string(j + 1));
        }
      }
    }

    sigma_inv.reserve(n);
    design_block.reserve(n);
    for (int i = 0; i < n; ++i) {
      auto llt = checked_llt(data.sampling_cov[i], "sampling covariance, area " + data.adj.ids[i]);
      sigma_inv.push_back(llt.solve(Eigen::MatrixXd::Identity(m, m)));
      Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, P);
      for (int j = 0; j < m; ++j) {
        b.block(j, beta_offset[j], 1, data.X[j].cols()) = data.X[j].row(i);
      }
      design_block.push_back(std::move(b));
    }
    xtsx = Eigen::MatrixXd::Zero(P, P);
    for (int i = 0; i < n; ++i) {
      xtsx.noalias() += design_block[i].transpose() * sigma_inv[i] * design_block[i];
    }
    beta_prior_prec = Eigen::MatrixXd::Zero(P, P);
    if (model.prior.beta_proper) {
      beta_prior_prec = Eigen::MatrixXd::Identity(P, P) /
                        (model.prior.beta_sd * model.prior.beta_sd);
    }

    // Sampling precision block-diagonalized in the model's internal ordering.
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(n) * m * m);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) {
        for (int k = 0; k < m; ++k) {
          int row = outcome_major ? j * n + i : i * m + j;
          int col = outcome_major ? k * n + i : i * m + k;
          trips.emplace_back(row, col, sigma_inv[i](j, k));
        }
      }
    }
    sampling_prec.resize(n * m, n * m);
    sampling_prec.setFromTriplets(trips.begin(), trips.end());
    sampling_prec.makeCompressed();

    if (model.kind != ModelKind::iw) spectrum.emplace(data.adj);
  }

  // Stacked fitted values x_ij' beta_j, area-major n*m. The coefficient
  // segment is materialized so recompute_theta reproduces the arithmetic
  // bit for bit.
  Eigen::VectorXd fitted(const Eigen::VectorXd& beta) const {
    Eigen::VectorXd out(n * m);
    for (int j = 0; j < m; ++j) {
      Eigen::VectorXd bj = beta.segment(beta_offset[j], data.X[j].cols());
      Eigen::VectorXd fj = data.X[j] * bj;
      for (int i = 0; i < n; ++i) out[i * m + j] = fj[i];
    }
    return out;
  }
};

// Mutable per-chain state.
struct ChainState {
  Eigen::VectorXd beta;      // stacked
  Eigen::VectorXd u;         // internal order
  Eigen::MatrixXd sigma_iw;  // iw / separable
  std::vector<RwMh> mh;      // model's Metropolis parameters
  SparseChol u_chol;

  RwMh& param(const std::string& name) {
    for (auto& p : mh) {
      if (p.name() == name) return p;
    }
    throw ValidationError("no MH parameter named " + name);
  }
};

inline void init_state(const FitContext& ctx, ChainState& st) {
  const auto& prior = ctx.model.prior;
  if (prior.beta_fixed) {
    st.beta.resize(ctx.P);
    for (int j = 0; j < ctx.m; ++j) {
      st.beta.segment(ctx.beta_offset[j], (*prior.beta_fixed)[j].size()) =
          (*prior.beta_fixed)[j];
    }
  } else {
    // weighted least squares at u = 0
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ctx.P);
    for (int i = 0; i < ctx.n; ++i) {
      rhs.noalias() += ctx.design_block[i].transpose() *
                       (ctx.sigma_inv[i] * ctx.data.y.row(i).transpose());
    }
    Eigen::MatrixXd a = ctx.xtsx + ctx.beta_prior_prec;
    st.beta = checked_llt(a, "beta initialization").solve(rhs);
  }
  st.u = Eigen::VectorXd::Zero(ctx.n * ctx.m);
  st.sigma_iw = prior.sigma_iw_fixed ? *prior.sigma_iw_fixed : prior.resolved_scale(ctx.m);

  auto add = [&](const std::string& name, MhTransform t, double init,
                 const std::optional<double>& fixed) {
    if (fixed) return;  // point mass: no sampler
    st.mh.emplace_back(name, t, init, proposal_sd_for(ctx.cfg, name));
  };
  switch (ctx.model.kind) {
    case ModelKind::iw:
      break;
    case ModelKind::separable:
      add("rho", MhTransform::logit, 0.5, prior.rho_fixed);
      break;
    case ModelKind::gmcar:
      add("rho1", MhTransform::logit, 0.5, prior.rho1_fixed);
      add("rho2", MhTransform::logit, 0.5, prior.rho2_fixed);
      add("tau1", MhTransform::log_scale, 1.0, prior.tau1_fixed);
      add("tau2", MhTransform::log_scale, 1.0, prior.tau2_fixed);
      add("eta0", MhTransform::identity, 0.0, prior.eta0_fixed);
      add("eta1", MhTransform::identity, 0.0, prior.eta1_fixed);
      break;
  }
}

// Current value of an MH parameter, honoring point-mass overrides.
struct GmcarView {
  double rho1, rho2, tau1, tau2, eta0, eta1;
};

inline double mh_or_fixed(ChainState& st, const std::string& name,
                          const std::optional<double>& fixed) {
  if (fixed) return *fixed;
  return st.param(name).value();
}

inline GmcarView gmcar_view(const FitContext& ctx, ChainState& st) {
  const auto& pr = ctx.model.prior;
  return {mh_or_fixed(st, "rho1", pr.rho1_fixed), mh_or_fixed(st, "rho2", pr.rho2_fixed),
          mh_or_fixed(st, "tau1", pr.tau1_fixed), mh_or_fixed(st, "tau2", pr.tau2_fixed),
          mh_or_fixed(st, "eta0", pr.eta0_fixed), mh_or_fixed(st, "eta1", pr.eta1_fixed)};
}

inline GmcarParams gmcar_params(const GmcarView& v) {
  GmcarParams g;
  g.tau1_sq = v.tau1 * v.tau1;
  g.tau2_sq = v.tau2 * v.tau2;
  g.rho1 = v.rho1;
  g.rho2 = v.rho2;
  g.eta0 = v.eta0;
  g.eta1 = v.eta1;
  return g;
}

inline SparseMat latent_precision(const FitContext& ctx, ChainState& st) {
  switch (ctx.model.kind) {
    case ModelKind::iw: {
      Eigen::MatrixXd sinv = checked_llt(st.sigma_iw, "sigma_iw")
                                 .solve(Eigen::MatrixXd::Identity(ctx.m, ctx.m));
      std::vector<Eigen::Triplet<double>> trips;
      trips.reserve(static_cast<size_t>(ctx.n) * ctx.m * ctx.m);
      for (int i = 0; i < ctx.n; ++i) {
        for (int j = 0; j < ctx.m; ++j) {
          for (int k = 0; k < ctx.m; ++k) {
            trips.emplace_back(i * ctx.m + j, i * ctx.m + k, sinv(j, k));
          }
        }
      }
      SparseMat q(ctx.n * ctx.m, ctx.n * ctx.m);
      q.setFromTriplets(trips.begin(), trips.end());
      return q;
    }
    case ModelKind::separable: {
      double rho = mh_or_fixed(st, "rho", ctx.model.prior.rho_fixed);
      return separable_precision(SeparableStructure(rho, st.sigma_iw), ctx.data.adj);
    }
    case ModelKind::gmcar:
      return gmcar_precision(gmcar_params(gmcar_view(ctx, st)), ctx.data.adj);
  }
  throw NumericError("unreachable model kind");
}

inline void update_beta(const FitContext& ctx, ChainState& st, RngStream& rng) {
  if (ctx.model.prior.beta_fixed) return;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ctx.P);
  for (int i = 0; i < ctx.n; ++i) {
    Eigen::VectorXd ui(ctx.m);
    for (int j = 0; j < ctx.m; ++j) {
      ui[j] = ctx.outcome_major ? st.u[j * ctx.n + i] : st.u[i * ctx.m + j];
    }
    Eigen::VectorXd resid = ctx.data.y.row(i).transpose() - ui;
    rhs.noalias() += ctx.design_block[i].transpose() * (ctx.sigma_inv[i] * resid);
  }
  Eigen::MatrixXd a = ctx.xtsx + ctx.beta_prior_prec;
  st.beta = rmvn_prec(rhs, a, rng);
}

inline void update_u(const FitContext& ctx, ChainState& st, RngStream& rng) {
  SparseMat q_post = latent_precision(ctx, st) + ctx.sampling_prec;
  q_post.makeCompressed();
  st.u_chol.factorize(q_post, "latent update");
  Eigen::VectorXd fitted = ctx.fitted(st.beta);  // area-major
  Eigen::VectorXd b(ctx.n * ctx.m);
  for (int i = 0; i < ctx.n; ++i) {
    Eigen::VectorXd resid(ctx.m);
    for (int j = 0; j < ctx.m; ++j) resid[j] = ctx.data.y(i, j) - fitted[i * ctx.m + j];
    Eigen::VectorXd bi = ctx.sigma_inv[i] * resid;
    for (int j = 0; j < ctx.m; ++j) {
      b[ctx.outcome_major ? j * ctx.n + i : i * ctx.m + j] = bi[j];
    }
  }
  st.u = st.u_chol.sample_gaussian(b, rng);
}

inline void update_sigma_iw(const FitContext& ctx, ChainState& st, RngStream& rng) {
  if (ctx.model.prior.sigma_iw_fixed) return;
  const auto& prior = ctx.model.prior;
  Eigen::MatrixXd s0 = prior.resolved_scale(ctx.m);
  double df0 = prior.resolved_df(ctx.m);
  Eigen::MatrixXd s_post;
  if (ctx.model.kind == ModelKind::iw) {
    s_post = s0;
    for (int i = 0; i < ctx.n; ++i) {
      Eigen::VectorXd ui = st.u.segment(i * ctx.m, ctx.m);
      s_post.noalias() += ui * ui.transpose();
    }
  } else {  // separable: scale S0 + U' (D - rho W) U
    double rho = mh_or_fixed(st, "rho", prior.rho_fixed);
    Eigen::MatrixXd u_mat = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                                           Eigen::Dynamic, Eigen::RowMajor>>(
        st.u.data(), ctx.n, ctx.m);
    SparseMat structure = car_structure(ctx.data.adj, rho);
    s_post = s0 + u_mat.transpose() * (structure * u_mat);
    s_post = 0.5 * (s_post + s_post.transpose());
  }
  st.sigma_iw = rinvwishart(df0 + ctx.n, s_post, rng);
}

inline void update_separable_rho(const FitContext& ctx, ChainState& st, RngStream& rng,
                                 bool adapt) {
  if (ctx.model.prior.rho_fixed) return;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      u_mat(st.u.data(), ctx.n, ctx.m);
  Eigen::MatrixXd sinv = checked_llt(st.sigma_iw, "sigma_iw in rho update")
                             .solve(Eigen::MatrixXd::Identity(ctx.m, ctx.m));
  Eigen::MatrixXd v = u_mat * sinv;  // n x m
  double s_d = 0.0, s_w = 0.0;
  for (int i = 0; i < ctx.n; ++i) {
    s_d += ctx.data.adj.degrees[i] * u_mat.row(i).dot(v.row(i));
    for (int j : ctx.data.adj.neighbors[i]) s_w += u_mat.row(i).dot(v.row(j));
  }
  // s_w accumulated over directed pairs = tr(W U Sigma^{-1} U') already
  const auto& spectrum = *ctx.spectrum;
  const auto& prior = ctx.model.prior;
  const double mm = ctx.m;
  st.param("rho").step(
      [&](double rho) {
        return 0.5 * mm * spectrum.logdet_structure(rho) - 0.5 * (s_d - rho * s_w) +
               prior.log_prior_rho(rho);
      },
      rng, adapt);
}

inline void update_gmcar_params(const FitContext& ctx, ChainState& st, RngStream& rng,
                                bool adapt) {
  const auto& prior = ctx.model.prior;
  const auto& spectrum = *ctx.spectrum;
  const auto& adj = ctx.data.adj;
  const int n = ctx.n;
  const Eigen::VectorXd d = adj.degree_vector();
  const Eigen::VectorXd u1 = st.u.head(n);
  const Eigen::VectorXd u2 = st.u.tail(n);
  Eigen::VectorXd w_u2 = adj.W * u2;

  // marginal field u2 ~ N(0, Q2^{-1})
  const double d2 = u2.dot(d.asDiagonal() * u2);
  const double w2 = u2.dot(w_u2);
  if (!prior.rho2_fixed) {
    double tau2 = mh_or_fixed(st, "tau2", prior.tau2_fixed);
    st.param("rho2").step(
        [&](double rho) {
          return 0.5 * spectrum.logdet_structure(rho) - (d2 - rho * w2) / (2.0 * tau2 * tau2) +
                 prior.log_prior_rho(rho);
        },
        rng, adapt);
  }
  if (!prior.tau2_fixed) {
    double rho2 = mh_or_fixed(st, "rho2", prior.rho2_fixed);
    st.param("tau2").step(
        [&](double tau) {
          return -static_cast<double>(n) * std::log(tau) -
                 (d2 - rho2 * w2) / (2.0 * tau * tau) + prior.log_prior_tau_sd(tau);
        },
        rng, adapt);
  }

  // linking coefficients in u1 | u2 ~ N(A u2, Q1^{-1}), A = eta0 I + eta1 W
  double rho1 = mh_or_fixed(st, "rho1", prior.rho1_fixed);
  double tau1 = mh_or_fixed(st, "tau1", prior.tau1_fixed);
  if (!prior.eta0_fixed) {
    double eta1 = mh_or_fixed(st, "eta1", prior.eta1_fixed);
    Eigen::VectorXd v0 = u1 - eta1 * w_u2;
    // r(eta0) = v0 - eta0 u2; expand both quadratic forms in eta0
    const double v0dv0 = v0.dot(d.asDiagonal() * v0);
    const double u2dv0 = u2.dot(d.asDiagonal() * v0);
    const double v0wv0 = v0.dot(adj.W * v0);
    const double u2wv0 = u2.dot(adj.W * v0);
    st.param("eta0").step(
        [&](double e0) {
          double rd = v0dv0 - 2.0 * e0 * u2dv0 + e0 * e0 * d2;
          double rw = v0wv0 - 2.0 * e0 * u2wv0 + e0 * e0 * w2;
          return -(rd - rho1 * rw) / (2.0 * tau1 * tau1) + prior.log_prior_eta(e0);
        },
        rng, adapt);
  }
  if (!prior.eta1_fixed) {
    double eta0 = mh_or_fixed(st, "eta0", prior.eta0_fixed);
    Eigen::VectorXd v1 = u1 - eta0 * u2;
    const Eigen::VectorXd& s = w_u2;
    const double v1dv1 = v1.dot(d.asDiagonal() * v1);
    const double sdv1 = s.dot(d.asDiagonal() * v1);
    const double sds = s.dot(d.asDiagonal() * s);
    const double v1wv1 = v1.dot(adj.W * v1);
    const double swv1 = s.dot(adj.W * v1);
    const double sws = s.dot(adj.W * s);
    st.param("eta1").step(
        [&](double e1) {
          double rd = v1dv1 - 2.0 * e1 * sdv1 + e1 * e1 * sds;
          double rw = v1wv1 - 2.0 * e1 * swv1 + e1 * e1 * sws;
          return -(rd - rho1 * rw) / (2.0 * tau1 * tau1) + prior.log_prior_eta(e1);
        },
        rng, adapt);
  }

  // conditional field scale/smoothness with the final residual
  double eta0 = mh_or_fixed(st, "eta0", prior.eta0_fixed);
  double eta1 = mh_or_fixed(st, "eta1", prior.eta1_fixed);
  Eigen::VectorXd r = u1 - eta0 * u2 - eta1 * w_u2;
  const double rd = r.dot(d.asDiagonal() * r);
  const double rw = r.dot(adj.W * r);
  if (!prior.rho1_fixed) {
    double t1 = mh_or_fixed(st, "tau1", prior.tau1_fixed);
    st.param("rho1").step(
        [&](double rho) {
          return 0.5 * spectrum.logdet_structure(rho) - (rd - rho * rw) / (2.0 * t1 * t1) +
                 prior.log_prior_rho(rho);
        },
        rng, adapt);
  }
  if (!prior.tau1_fixed) {
    double r1 = mh_or_fixed(st, "rho1", prior.rho1_fixed);
    st.param("tau1").step(
        [&](double tau) {
          return -static_cast<double>(n) * std::log(tau) - (rd - r1 * rw) / (2.0 * tau * tau) +
                 prior.log_prior_tau_sd(tau);
        },
        rng, adapt);
  }
}

inline std::vector<std::string> structure_names_for(ModelKind kind, int m) {
  std::vector<std::string> names;
  if (kind == ModelKind::iw || kind == ModelKind::separable) {
    for (int j = 1; j <= m; ++j) {
      for (int k = j; k <= m; ++k) {
        names.push_back("sigma[" + std::to_string(j) + "][" + std::to_string(k) + "]");
      }
    }
    if (kind == ModelKind::separable) names.push_back("rho");
  } else {
    names = {"tau1", "tau2", "rho1", "rho2", "eta0", "eta1"};
  }
  return names;
}

inline void record_draw(const FitContext& ctx, ChainState& st, long row, ChainResult& out) {
  out.beta.row(row) = st.beta;
  Eigen::VectorXd u_pub(ctx.n * ctx.m);
  for (int i = 0; i < ctx.n; ++i) {
    for (int j = 0; j < ctx.m; ++j) {
      u_pub[i * ctx.m + j] = ctx.outcome_major ? st.u[j * ctx.n + i] : st.u[i * ctx.m + j];
    }
  }
  out.u.row(row) = u_pub;
  out.theta.row(row) = (ctx.fitted(st.beta) + u_pub).transpose();

  if (ctx.model.kind == ModelKind::gmcar) {
    auto v = gmcar_view(ctx, st);
    out.structure.row(row) << v.tau1, v.tau2, v.rho1, v.rho2, v.eta0, v.eta1;
  } else {
    int col = 0;
    for (int j = 0; j < ctx.m; ++j) {
      for (int k = j; k < ctx.m; ++k) out.structure(row, col++) = st.sigma_iw(j, k);
    }
    if (ctx.model.kind == ModelKind::separable) {
      out.structure(row, col) = mh_or_fixed(st, "rho", ctx.model.prior.rho_fixed);
    }
  }
}

inline ChainResult run_chain(const FitContext& ctx, std::uint64_t chain_seed) {
  RngStream rng(chain_seed);
  ChainState st;
  init_state(ctx, st);

  const long retained = ctx.cfg.retained();
  ChainResult out;
  out.chain_seed = chain_seed;
  out.beta.resize(retained, ctx.P);
  out.u.resize(retained, ctx.n * ctx.m);
  out.theta.resize(retained, ctx.n * ctx.m);
  out.structure.resize(retained, structure_names_for(ctx.model.kind, ctx.m).size());

  long row = 0;
  for (long t = 1; t <= ctx.cfg.iterations; ++t) {
    const bool adapt = ctx.cfg.adapt && t <= ctx.cfg.burn_in;
    try {
      update_beta(ctx, st, rng);
      update_u(ctx, st, rng);
      if (ctx.model.kind != ModelKind::gmcar) {
        update_sigma_iw(ctx, st, rng);
      }
      if (ctx.model.kind == ModelKind::separable) {
        update_separable_rho(ctx, st, rng, adapt);
      } else if (ctx.model.kind == ModelKind::gmcar) {
        update_gmcar_params(ctx, st, rng, adapt);
      }
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (iteration " + std::to_string(t) + ")");
    }
    if (t > ctx.cfg.burn_in && (t - ctx.cfg.burn_in) % ctx.cfg.thin == 0 && row < retained) {
      record_draw(ctx, st, row, out);
      ++row;
    }
  }
  for (const auto& p : st.mh) out.acceptance[p.name()] = p.acceptance_rate();
  return out;
}

}  // namespace detail

// Metropolis-within-Gibbs fit. One sweep updates beta (conjugate Gaussian), the
// latent field as a single block (sparse-precision Gaussian), the outcome
// covariance (conjugate inverse-Wishart, iw/separable), and the remaining
// spatial parameters by adaptive random-walk Metropolis.
inline PosteriorDraws fit(const SurveyDataset& data, const ModelSpec& model,
                          const McmcConfig& cfg) {
  detail::FitContext ctx(data, model, cfg);

  PosteriorDraws out;
  out.kind = model.kind;
  out.n = ctx.n;
  out.m = ctx.m;
  out.area_ids = data.adj.ids;
  out.config = cfg;
  for (int j = 1; j <= ctx.m; ++j) {
    for (int k = 1; k <= data.X[j - 1].cols(); ++k) {
      out.beta_names.push_back("beta[" + std::to_string(j) + "][" + std::to_string(k) + "]");
    }
  }
  for (int i = 1; i <= ctx.n; ++i) {
    for (int j = 1; j <= ctx.m; ++j) {
      out.u_names.push_back("u[" + std::to_string(i) + "][" + std::to_string(j) + "]");
      out.theta_names.push_back("theta[" + std::to_string(i) + "][" + std::to_string(j) + "]");
    }
  }
  out.structure_names = detail::structure_names_for(model.kind, ctx.m);

  out.chains.resize(cfg.chains);
  RngStream base(cfg.seed);
  std::vector<std::uint64_t> seeds(cfg.chains);
  for (int c = 0; c < cfg.chains; ++c) seeds[c] = base.substream(c).seed();
  parallel_for(cfg.chains, [&](int c) { out.chains[c] = detail::run_chain(ctx, seeds[c]); });
  return out;
}

// ---------------------------------------------------------------------------
// Leave-one-out prediction
// ---------------------------------------------------------------------------

// Draws of theta at a held-out area. The model is fit on the lattice minus the
// area; per retained draw the held-out latent value is drawn from its exact
// Gaussian conditional given the remaining field under the full lattice, and
// theta_i = x_i' beta + u_i. Optionally adds sampling noise from the held-out
// area's Sigma_i to give Y-predictive draws.
inline Eigen::MatrixXd predict_holdout(const SurveyDataset& data, const ModelSpec& model,
                                       const McmcConfig& cfg, int holdout,
                                       bool add_sampling_noise = false) {
  if (holdout < 0 || holdout >= data.n()) {
    throw ValidationError("predict_holdout: holdout index out of range");
  }
  SurveyDataset reduced = data.without_area(holdout);
  PosteriorDraws fitres = fit(reduced, model, cfg);

  const int m = data.m;
  const int n_full = data.n();
  const auto& adj = data.adj;
  const int deg = adj.degrees[holdout];

  // map sub-lattice area index -> full-lattice area index
  std::vector<int> full_index(reduced.n());
  for (int k = 0; k < reduced.n(); ++k) {
    full_index[k] = adj.index_of_id(reduced.adj.ids[k]);
  }

  RngStream rng = RngStream(cfg.seed).substream(0x10CA1u, static_cast<std::uint64_t>(holdout));
  Eigen::MatrixXd beta = fitres.pooled_beta();
  Eigen::MatrixXd u = fitres.pooled_u();
  const long total = beta.rows();
  Eigen::MatrixXd theta(total, m);

  // x_i' beta_j for the held-out area
  std::vector<int> offsets(m);
  {
    int off = 0;
    for (int j = 0; j < m; ++j) {
      offsets[j] = off;
      off += static_cast<int>(data.X[j].cols());
    }
  }

  auto struct_col = [&](const std::string& nm) {
    auto it = std::find(fitres.structure_names.begin(), fitres.structure_names.end(), nm);
    if (it == fitres.structure_names.end()) throw NumericError("missing " + nm);
    return static_cast<Eigen::Index>(it - fitres.structure_names.begin());
  };
  Eigen::MatrixXd structure = fitres.pooled_structure();

  // resolve structure columns once
  Eigen::MatrixXi sigma_cols;
  Eigen::Index col_rho = -1, col_tau1 = -1, col_tau2 = -1, col_rho1 = -1, col_rho2 = -1,
               col_eta0 = -1, col_eta1 = -1;
  if (model.kind == ModelKind::gmcar) {
    col_tau1 = struct_col("tau1");
    col_tau2 = struct_col("tau2");
    col_rho1 = struct_col("rho1");
    col_rho2 = struct_col("rho2");
    col_eta0 = struct_col("eta0");
    col_eta1 = struct_col("eta1");
  } else {
    sigma_cols.resize(m, m);
    for (int j = 0; j < m; ++j) {
      for (int k = j; k < m; ++k) {
        sigma_cols(j, k) = sigma_cols(k, j) = static_cast<int>(
            struct_col("sigma[" + std::to_string(j + 1) + "][" + std::to_string(k + 1) + "]"));
      }
    }
    if (model.kind == ModelKind::separable) col_rho = struct_col("rho");
  }

  // full-lattice field with the held-out entries zeroed, outcome-major scratch
  Eigen::VectorXd u1(n_full), u2(n_full);
  Eigen::LLT<Eigen::MatrixXd> noise_llt;
  if (add_sampling_noise) {
    noise_llt = checked_llt(data.sampling_cov[holdout], "predict_holdout sampling noise");
  }
  const Eigen::VectorXd degrees = adj.degree_vector();
  // neighborhood constants of the held-out area: sum of neighbor degrees and
  // twice the number of edges inside the neighborhood
  double s_deg = 0.0, t_edges = 0.0;
  for (int a : adj.neighbors[holdout]) {
    s_deg += adj.degrees[a];
    for (int b : adj.neighbors[a]) {
      if (adj.W.coeff(holdout, b) != 0.0) t_edges += 1.0;
    }
  }

  for (long r = 0; r < total; ++r) {
    Eigen::VectorXd fitted(m);
    for (int j = 0; j < m; ++j) {
      fitted[j] = data.X[j].row(holdout).dot(
          beta.row(r).segment(offsets[j], data.X[j].cols()));
    }
    Eigen::VectorXd ui(m);
    switch (model.kind) {
      case ModelKind::iw: {
        Eigen::MatrixXd sig(m, m);
        for (int j = 0; j < m; ++j) {
          for (int k = 0; k < m; ++k) sig(j, k) = structure(r, sigma_cols(j, k));
        }
        ui = rmvn_cov(Eigen::VectorXd::Zero(m), sig, rng);
        break;
      }
      case ModelKind::separable: {
        Eigen::MatrixXd sig(m, m);
        for (int j = 0; j < m; ++j) {
          for (int k = 0; k < m; ++k) sig(j, k) = structure(r, sigma_cols(j, k));
        }
        double rho = structure(r, col_rho);
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
        for (int k = 0; k < reduced.n(); ++k) {
          if (adj.W.coeff(holdout, full_index[k]) != 0.0) {
            mean += u.row(r).segment(k * m, m).transpose();
          }
        }
        mean *= rho / deg;
        ui = rmvn_cov(mean, sig / deg, rng);
        break;
      }
      case ModelKind::gmcar: {
        GmcarParams g;
        g.tau1_sq = structure(r, col_tau1) * structure(r, col_tau1);
        g.tau2_sq = structure(r, col_tau2) * structure(r, col_tau2);
        g.rho1 = structure(r, col_rho1);
        g.rho2 = structure(r, col_rho2);
        g.eta0 = structure(r, col_eta0);
        g.eta1 = structure(r, col_eta1);

        u1.setZero();
        u2.setZero();
        for (int k = 0; k < reduced.n(); ++k) {
          u1[full_index[k]] = u(r, k * m + 0);
          u2[full_index[k]] = u(r, k * m + 1);
        }
        const double t1i = 1.0 / g.tau1_sq;
        const double t2i = 1.0 / g.tau2_sq;
        Eigen::VectorXd w_u2 = adj.W * u2;
        Eigen::VectorXd r0 = u1 - g.eta0 * u2 - g.eta1 * w_u2;
        Eigen::VectorXd dr0 = degrees.cwiseProduct(r0);
        Eigen::VectorXd w_r0 = adj.W * r0;
        Eigen::VectorXd q1r0 = t1i * (dr0 - g.rho1 * w_r0);
        Eigen::VectorXd w_q1r0 = adj.W * q1r0;

        // pair precision of (u1_i, u2_i) given the rest, from the precision blocks
        Eigen::MatrixXd q_pair(2, 2);
        q_pair(0, 0) = t1i * deg;
        q_pair(0, 1) = q_pair(1, 0) = -t1i * deg * (g.eta0 - g.rho1 * g.eta1);
        q_pair(1, 1) = t2i * deg +
                       t1i * (g.eta0 * g.eta0 * deg + g.eta1 * g.eta1 * s_deg -
                              g.rho1 * (2.0 * g.eta0 * g.eta1 * deg +
                                        g.eta1 * g.eta1 * t_edges));
        Eigen::Vector2d v;
        v[0] = q1r0[holdout];
        v[1] = -(g.eta0 * q1r0[holdout] + g.eta1 * w_q1r0[holdout]) -
               t2i * g.rho2 * w_u2[holdout];
        Eigen::Vector2d pair = rmvn_prec(-v, q_pair, rng);
        ui = pair;
        break;
      }
    }
    theta.row(r) = (fitted + ui).transpose();
    if (add_sampling_noise) {
      Eigen::VectorXd z(m);
      for (int j = 0; j < m; ++j) z[j] = rng.normal();
      theta.row(r) += (noise_llt.matrixL() * z).transpose();
    }
  }
  return theta;
}

// ---------------------------------------------------------------------------
// Posterior summaries
// ---------------------------------------------------------------------------

struct ParamSummary {
  std::string name;
  double mean = 0, median = 0, sd = 0, q5 = 0, q95 = 0;
  double rhat = 1, ess = 0;
  std::optional<double> acceptance;
};

struct SummaryReport {
  std::vector<ParamSummary> params;
  std::vector<std::string> warnings;
  long retained_per_chain = 0;
  int chains = 0;
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw ValidationError("quantile of empty sample");
  const double h = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double w = h - static_cast<double>(lo);
  return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

inline ParamSummary summarize_one(const std::string& name,
                                  const std::vector<Eigen::VectorXd>& chains) {
  ParamSummary s;
  s.name = name;
  std::vector<double> all;
  for (const auto& c : chains) {
    all.insert(all.end(), c.data(), c.data() + c.size());
  }
  if (all.empty()) throw ValidationError("posterior_summary: empty chain for " + name);
  const auto n = static_cast<double>(all.size());
  double mean = 0;
  for (double v : all) mean += v;
  mean /= n;
  double var = 0;
  for (double v : all) var += (v - mean) * (v - mean);
  var = all.size() > 1 ? var / (n - 1.0) : 0.0;
  std::sort(all.begin(), all.end());
  s.mean = mean;
  s.sd = std::sqrt(var);
  s.median = quantile_sorted(all, 0.5);
  s.q5 = quantile_sorted(all, 0.05);
  s.q95 = quantile_sorted(all, 0.95);
  s.rhat = split_rhat(chains);
  s.ess = effective_sample_size(chains);
  return s;
}

}  // namespace detail

// Summaries over the pooled retained draws plus split-R-hat / ESS per
// parameter. Chains shorter than 4 retained draws are rejected.
inline SummaryReport posterior_summary(const PosteriorDraws& draws) {
  if (draws.chains.empty() || draws.chains.front().beta.rows() == 0) {
    throw ValidationError("posterior_summary: empty chains");
  }
  SummaryReport rep;
  rep.retained_per_chain = draws.chains.front().beta.rows();
  rep.chains = static_cast<int>(draws.chains.size());

  auto do_group = [&](const std::vector<std::string>& names,
                      const Eigen::MatrixXd ChainResult::* member) {
    for (size_t k = 0; k < names.size(); ++k) {
      std::vector<Eigen::VectorXd> per_chain;
      for (const auto& c : draws.chains) per_chain.push_back((c.*member).col(k));
      ParamSummary s = detail::summarize_one(names[k], per_chain);
      auto acc = draws.chains.front().acceptance.find(names[k]);
      if (acc != draws.chains.front().acceptance.end()) {
        double mean_acc = 0;
        for (const auto& c : draws.chains) mean_acc += c.acceptance.at(names[k]);
        s.acceptance = mean_acc / draws.chains.size();
      }
      if (s.rhat > 1.05) {
        rep.warnings.push_back("split R-hat " + std::to_string(s.rhat) + " for " + names[k]);
      }
      rep.params.push_back(std::move(s));
    }
  };
  do_group(draws.beta_names, &ChainResult::beta);
  do_group(draws.structure_names, &ChainResult::structure);
  do_group(draws.u_names, &ChainResult::u);
  do_group(draws.theta_names, &ChainResult::theta);
  return rep;
}

// theta recomputed from stored beta and u with the dataset's designs; the
// sampler stores theta via this same arithmetic, so equality is exact.
inline Eigen::MatrixXd recompute_theta(const PosteriorDraws& draws, const SurveyDataset& data,
                                       int chain) {
  const auto& c = draws.chains.at(chain);
  Eigen::MatrixXd theta(c.beta.rows(), draws.n * draws.m);
  std::vector<int> offsets(draws.m);
  int off = 0;
  for (int j = 0; j < draws.m; ++j) {
    offsets[j] = off;
    off += static_cast<int>(data.X[j].cols());
  }
  for (Eigen::Index r = 0; r < c.beta.rows(); ++r) {
    for (int j = 0; j < draws.m; ++j) {
      Eigen::VectorXd bj = c.beta.row(r).segment(offsets[j], data.X[j].cols()).transpose();
      Eigen::VectorXd fj = data.X[j] * bj;
      for (int i = 0; i < draws.n; ++i) {
        theta(r, i * draws.m + j) = fj[i] + c.u(r, i * draws.m + j);
      }
    }
  }
  return theta;
}

}  // namespace mvfh
