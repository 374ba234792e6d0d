#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "mvfh/dataset.hpp"
#include "mvfh/sampler.hpp"

using namespace mvfh;

namespace {

// ---------------------------------------------------------------------------
// Oracle strategy: fix beta and every structure parameter, and give all
// *retained* areas near-zero sampling variance. The reduced-model field is then
// pinned at u = y - X beta, so the held-out area's conditional is a fixed
// Gaussian computable from the dense full-lattice latent precision by a Schur
// complement:  u_h | u_rest ~ N(-Q_hh^{-1} (Q u~)_h, Q_hh^{-1}) with u~ the
// full field zeroed at the held-out entries. Sample moments of the returned
// draws must match.
// ---------------------------------------------------------------------------

Eigen::MatrixXd dense_w(const Adjacency& adj) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(adj.n, adj.n);
  for (int i = 0; i < adj.n; ++i) {
    for (int j : adj.neighbors[i]) w(i, j) = 1.0;
  }
  return w;
}

Eigen::MatrixXd dense_car(const Adjacency& adj, double rho) {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(adj.n, adj.n);
  for (int i = 0; i < adj.n; ++i) {
    q(i, i) = adj.degrees[i];
    for (int j : adj.neighbors[i]) q(i, j) -= rho;
  }
  return q;
}

// Outcome-major (u1 stacked over u2) cross-field precision from first principles.
Eigen::MatrixXd dense_gmcar_om(const Adjacency& adj, double tau1_sd, double tau2_sd,
                               double rho1, double rho2, double eta0, double eta1) {
  const int n = adj.n;
  Eigen::MatrixXd q1 = dense_car(adj, rho1) / (tau1_sd * tau1_sd);
  Eigen::MatrixXd q2 = dense_car(adj, rho2) / (tau2_sd * tau2_sd);
  Eigen::MatrixXd a = eta0 * Eigen::MatrixXd::Identity(n, n) + eta1 * dense_w(adj);
  Eigen::MatrixXd q(2 * n, 2 * n);
  q.topLeftCorner(n, n) = q1;
  q.topRightCorner(n, n) = -q1 * a;
  q.bottomLeftCorner(n, n) = -a.transpose() * q1;
  q.bottomRightCorner(n, n) = q2 + a.transpose() * q1 * a;
  return q;
}

struct CondOracle {
  Eigen::VectorXd mean;  // m
  Eigen::MatrixXd cov;   // m x m
};

// Conditional of the held-out entries given the rest, from a dense latent
// precision and the pinned field (holdout entries ignored).
CondOracle schur_conditional(const Eigen::MatrixXd& q, const std::vector<int>& h_idx,
                             Eigen::VectorXd u_tilde) {
  const int m = static_cast<int>(h_idx.size());
  for (int k : h_idx) u_tilde[k] = 0.0;
  Eigen::VectorXd qu = q * u_tilde;
  Eigen::MatrixXd q_hh(m, m);
  Eigen::VectorXd v(m);
  for (int a = 0; a < m; ++a) {
    v[a] = qu[h_idx[a]];
    for (int b = 0; b < m; ++b) q_hh(a, b) = q(h_idx[a], h_idx[b]);
  }
  CondOracle o;
  o.cov = q_hh.inverse();
  o.mean = -o.cov * v;
  return o;
}

// Dataset with pinned latent field: y = X beta0 + u_true, near-zero sampling
// variance everywhere except (optionally) the held-out area.
struct PinnedCase {
  SurveyDataset data;
  std::vector<Eigen::VectorXd> beta0;
  Eigen::VectorXd u_true_am;  // area-major, includes holdout entries (unused by fit)
};

PinnedCase pinned_case(const Adjacency& adj, int m, const Eigen::VectorXd& u_am,
                       double holdout_var = 1e-8, int holdout = -1) {
  PinnedCase pc;
  pc.data.adj = adj;
  pc.data.m = m;
  const int n = adj.n;
  pc.data.y.resize(n, m);
  pc.data.X.resize(m);
  pc.beta0.resize(m);
  RngStream rng(77);
  for (int j = 0; j < m; ++j) {
    pc.data.X[j] = Eigen::MatrixXd::Ones(n, j == 0 ? 2 : 1);
    if (j == 0) {
      for (int i = 0; i < n; ++i) pc.data.X[0](i, 1) = 0.1 * i;
    }
    pc.beta0[j] = Eigen::VectorXd::Zero(pc.data.X[j].cols());
    pc.beta0[j][0] = 0.5 * (j + 1);
    if (j == 0) pc.beta0[j][1] = 0.2;
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      pc.data.y(i, j) = pc.data.X[j].row(i).dot(pc.beta0[j]) + u_am[i * m + j];
    }
    double var = (i == holdout) ? holdout_var : 1e-8;
    pc.data.sampling_cov.push_back(Eigen::MatrixXd::Identity(m, m) * var);
  }
  pc.data.validate();
  pc.u_true_am = u_am;
  return pc;
}

McmcConfig pin_cfg() {
  McmcConfig cfg;
  cfg.iterations = 9000;
  cfg.burn_in = 1000;
  cfg.seed = 313;
  return cfg;
}

void check_moments(const Eigen::MatrixXd& theta, const Eigen::VectorXd& exp_mean,
                   const Eigen::MatrixXd& exp_cov) {
  const int m = static_cast<int>(theta.cols());
  const double nr = static_cast<double>(theta.rows());
  Eigen::VectorXd mean = theta.colwise().mean();
  Eigen::MatrixXd centered = theta.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / (nr - 1.0);
  for (int j = 0; j < m; ++j) {
    const double mc = 5.0 * std::sqrt(exp_cov(j, j) / nr) + 2e-3;
    INFO("mean component " << j);
    CHECK(mean[j] == Catch::Approx(exp_mean[j]).margin(mc));
    for (int k = j; k < m; ++k) {
      const double scale = std::sqrt(exp_cov(j, j) * exp_cov(k, k));
      INFO("cov entry " << j << "," << k);
      CHECK(cov(j, k) == Catch::Approx(exp_cov(j, k)).margin(0.08 * scale + 1e-3));
    }
  }
}

Eigen::VectorXd random_field(int len, std::uint64_t seed, double sd) {
  RngStream rng(seed);
  Eigen::VectorXd u(len);
  for (int i = 0; i < len; ++i) u[i] = sd * rng.normal();
  return u;
}

}  // namespace

TEST_CASE("held-out draws under the exchangeable model are prior draws around the surface") {
  Adjacency adj = grid_lattice(3, 3);
  Eigen::VectorXd u = random_field(18, 500, 0.6);
  PinnedCase pc = pinned_case(adj, 2, u);
  ModelSpec model;
  model.kind = ModelKind::iw;
  Eigen::MatrixXd sig(2, 2);
  sig << 0.5, 0.2, 0.2, 0.4;
  model.prior.sigma_iw_fixed = sig;
  model.prior.beta_fixed = pc.beta0;
  const int holdout = 4;
  Eigen::MatrixXd theta = predict_holdout(pc.data, model, pin_cfg(), holdout);
  REQUIRE(theta.rows() == 8000);
  REQUIRE(theta.cols() == 2);
  Eigen::VectorXd exp_mean(2);
  for (int j = 0; j < 2; ++j) exp_mean[j] = pc.data.X[j].row(holdout).dot(pc.beta0[j]);
  check_moments(theta, exp_mean, sig);
}

TEST_CASE("held-out draws under the product form match the dense conditional") {
  Adjacency adj = grid_lattice(3, 3);
  const int n = 9, m = 2;
  Eigen::VectorXd u = random_field(n * m, 501, 0.7);
  PinnedCase pc = pinned_case(adj, m, u);
  Eigen::MatrixXd sig(2, 2);
  sig << 0.6, -0.15, -0.15, 0.35;
  const double rho = 0.85;
  ModelSpec model;
  model.kind = ModelKind::separable;
  model.prior.sigma_iw_fixed = sig;
  model.prior.rho_fixed = rho;
  model.prior.beta_fixed = pc.beta0;

  // area-major latent precision (D - rho W) kron Sigma^{-1}
  Eigen::MatrixXd qs = dense_car(adj, rho);
  Eigen::MatrixXd sinv = sig.inverse();
  Eigen::MatrixXd q(n * m, n * m);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) q.block(a * m, b * m, m, m) = qs(a, b) * sinv;
  }

  for (int holdout : {4, 0}) {  // interior (degree 4) and corner (degree 2)
    DYNAMIC_SECTION("holdout " << holdout) {
      std::vector<int> h_idx{holdout * m, holdout * m + 1};
      CondOracle oc = schur_conditional(q, h_idx, u);
      Eigen::VectorXd exp_mean(2);
      for (int j = 0; j < 2; ++j) {
        exp_mean[j] = pc.data.X[j].row(holdout).dot(pc.beta0[j]) + oc.mean[j];
      }
      Eigen::MatrixXd theta = predict_holdout(pc.data, model, pin_cfg(), holdout);
      check_moments(theta, exp_mean, oc.cov);
    }
  }
}

TEST_CASE("held-out draws under the cross-field model match the dense conditional") {
  // Lattice with a triangle through the held-out area plus an extra cycle so
  // removal keeps the rest connected; both neighborhood constants (sum of
  // neighbor degrees, edges inside the neighborhood) are nonzero and distinct.
  Adjacency adj = load_neighbor_list(
      "a b\n"
      "a c\n"
      "b c\n"
      "a d\n"
      "d b\n"
      "c e\n"
      "e b\n");
  const int n = adj.n;
  REQUIRE(n == 5);
  const int holdout = adj.index_of_id("a");  // neighbors b, c, d with edges b-c, b-d
  Eigen::VectorXd u_am = random_field(n * 2, 502, 0.5);

  const double tau1 = 0.5, tau2 = 0.7, rho1 = 0.8, rho2 = 0.7, eta0 = 0.6, eta1 = 0.5;
  ModelSpec model;
  model.kind = ModelKind::gmcar;
  model.prior.tau1_fixed = tau1;
  model.prior.tau2_fixed = tau2;
  model.prior.rho1_fixed = rho1;
  model.prior.rho2_fixed = rho2;
  model.prior.eta0_fixed = eta0;
  model.prior.eta1_fixed = eta1;

  PinnedCase pc = pinned_case(adj, 2, u_am);
  model.prior.beta_fixed = pc.beta0;

  Eigen::MatrixXd q_om = dense_gmcar_om(adj, tau1, tau2, rho1, rho2, eta0, eta1);
  Eigen::VectorXd u_om(2 * n);
  for (int i = 0; i < n; ++i) {
    u_om[i] = u_am[i * 2];
    u_om[n + i] = u_am[i * 2 + 1];
  }
  std::vector<int> h_idx{holdout, n + holdout};
  CondOracle oc = schur_conditional(q_om, h_idx, u_om);
  Eigen::VectorXd exp_mean(2);
  for (int j = 0; j < 2; ++j) {
    exp_mean[j] = pc.data.X[j].row(holdout).dot(pc.beta0[j]) + oc.mean[j];
  }
  Eigen::MatrixXd theta = predict_holdout(pc.data, model, pin_cfg(), holdout);
  check_moments(theta, exp_mean, oc.cov);
}

TEST_CASE("cross-field holdout on a degree-one endpoint matches the dense conditional") {
  Adjacency adj = load_neighbor_list("p1 p2\np2 p3\np3 p4\np4 p5\n");
  const int n = 5;
  const int holdout = adj.index_of_id("p1");
  Eigen::VectorXd u_am = random_field(n * 2, 503, 0.5);
  const double tau1 = 0.4, tau2 = 0.6, rho1 = 0.9, rho2 = 0.6, eta0 = -0.3, eta1 = 0.25;
  ModelSpec model;
  model.kind = ModelKind::gmcar;
  model.prior.tau1_fixed = tau1;
  model.prior.tau2_fixed = tau2;
  model.prior.rho1_fixed = rho1;
  model.prior.rho2_fixed = rho2;
  model.prior.eta0_fixed = eta0;
  model.prior.eta1_fixed = eta1;
  PinnedCase pc = pinned_case(adj, 2, u_am);
  model.prior.beta_fixed = pc.beta0;

  Eigen::MatrixXd q_om = dense_gmcar_om(adj, tau1, tau2, rho1, rho2, eta0, eta1);
  Eigen::VectorXd u_om(2 * n);
  for (int i = 0; i < n; ++i) {
    u_om[i] = u_am[i * 2];
    u_om[n + i] = u_am[i * 2 + 1];
  }
  CondOracle oc = schur_conditional(q_om, {holdout, n + holdout}, u_om);
  Eigen::VectorXd exp_mean(2);
  for (int j = 0; j < 2; ++j) {
    exp_mean[j] = pc.data.X[j].row(holdout).dot(pc.beta0[j]) + oc.mean[j];
  }
  Eigen::MatrixXd theta = predict_holdout(pc.data, model, pin_cfg(), holdout);
  check_moments(theta, exp_mean, oc.cov);
}

TEST_CASE("with no cross-links the cross-field conditional splits into independent fields") {
  Adjacency adj = grid_lattice(3, 3);
  const int n = 9;
  const int holdout = 4;
  Eigen::VectorXd u_am = random_field(n * 2, 504, 0.5);
  const double tau1 = 0.5, tau2 = 0.8, rho1 = 0.75, rho2 = 0.9;
  ModelSpec model;
  model.kind = ModelKind::gmcar;
  model.prior.tau1_fixed = tau1;
  model.prior.tau2_fixed = tau2;
  model.prior.rho1_fixed = rho1;
  model.prior.rho2_fixed = rho2;
  model.prior.eta0_fixed = 0.0;
  model.prior.eta1_fixed = 0.0;
  PinnedCase pc = pinned_case(adj, 2, u_am);
  model.prior.beta_fixed = pc.beta0;

  // independent single-field conditionals: mean rho/deg * sum of neighbors,
  // variance tau^2/deg
  const int deg = adj.degrees[holdout];
  double s1 = 0.0, s2 = 0.0;
  for (int k : adj.neighbors[holdout]) {
    s1 += u_am[k * 2];
    s2 += u_am[k * 2 + 1];
  }
  Eigen::VectorXd exp_mean(2);
  exp_mean[0] = pc.data.X[0].row(holdout).dot(pc.beta0[0]) + rho1 / deg * s1;
  exp_mean[1] = pc.data.X[1].row(holdout).dot(pc.beta0[1]) + rho2 / deg * s2;
  Eigen::MatrixXd exp_cov = Eigen::MatrixXd::Zero(2, 2);
  exp_cov(0, 0) = tau1 * tau1 / deg;
  exp_cov(1, 1) = tau2 * tau2 / deg;
  Eigen::MatrixXd theta = predict_holdout(pc.data, model, pin_cfg(), holdout);
  check_moments(theta, exp_mean, exp_cov);
}

TEST_CASE("adding sampling noise widens held-out draws by the area's sampling covariance") {
  Adjacency adj = grid_lattice(3, 3);
  Eigen::VectorXd u = random_field(18, 505, 0.5);
  const int holdout = 4;
  // the held-out area's own sampling variance is not used by the fit, only by
  // the noise option, so it can be large while the rest stay pinned
  PinnedCase pc = pinned_case(adj, 2, u, 0.8, holdout);
  pc.data.sampling_cov[holdout](0, 1) = pc.data.sampling_cov[holdout](1, 0) = 0.3;
  ModelSpec model;
  model.kind = ModelKind::iw;
  Eigen::MatrixXd sig(2, 2);
  sig << 0.4, 0.1, 0.1, 0.3;
  model.prior.sigma_iw_fixed = sig;
  model.prior.beta_fixed = pc.beta0;

  Eigen::VectorXd exp_mean(2);
  for (int j = 0; j < 2; ++j) exp_mean[j] = pc.data.X[j].row(holdout).dot(pc.beta0[j]);
  Eigen::MatrixXd noisy = predict_holdout(pc.data, model, pin_cfg(), holdout, true);
  check_moments(noisy, exp_mean, sig + pc.data.sampling_cov[holdout]);
}

TEST_CASE("held-out prediction is deterministic and keyed to the held-out area") {
  Adjacency adj = grid_lattice(2, 3);
  Eigen::VectorXd u = random_field(6, 506, 0.5);
  PinnedCase pc = pinned_case(adj, 1, u);
  ModelSpec model;
  model.kind = ModelKind::separable;
  model.prior.sigma_iw_fixed = Eigen::MatrixXd::Constant(1, 1, 0.5);
  model.prior.rho_fixed = 0.8;
  McmcConfig cfg;
  cfg.iterations = 400;
  cfg.burn_in = 100;
  cfg.seed = 9;
  Eigen::MatrixXd a = predict_holdout(pc.data, model, cfg, 1);
  Eigen::MatrixXd b = predict_holdout(pc.data, model, cfg, 1);
  CHECK(a == b);
  cfg.seed = 10;
  Eigen::MatrixXd c = predict_holdout(pc.data, model, cfg, 1);
  CHECK(a != c);
}

TEST_CASE("held-out prediction validates its inputs") {
  Adjacency adj = load_neighbor_list("x y\ny z\n");
  Eigen::VectorXd u = random_field(3, 507, 0.3);
  PinnedCase pc = pinned_case(adj, 1, u);
  ModelSpec model;
  model.kind = ModelKind::iw;
  McmcConfig cfg;
  cfg.iterations = 100;
  cfg.burn_in = 10;
  CHECK_THROWS_AS(predict_holdout(pc.data, model, cfg, -1), ValidationError);
  CHECK_THROWS_AS(predict_holdout(pc.data, model, cfg, 3), ValidationError);
  // dropping the middle of a path disconnects the lattice
  const int mid = adj.index_of_id("y");
  CHECK_THROWS_AS(predict_holdout(pc.data, model, cfg, mid), ValidationError);
}
