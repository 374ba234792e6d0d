#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "mvfh/simulate.hpp"

using namespace mvfh;

namespace {

const char* kFullProtocol =
    "# study configuration\n"
    "lattice = grid:4x5\n"
    "gmcar.tau1 = 0.3   # latent sd, field 1\n"
    "gmcar.tau2 = 0.4\n"
    "gmcar.rho1 = 0.9\n"
    "gmcar.rho2 = 0.8\n"
    "gmcar.eta0 = 0.26\n"
    "gmcar.eta1 = -0.04\n"
    "beta.1 = 1.0, 0.01\n"
    "beta.2 = 0.5, 0.02\n"
    "covariates.synthetic = rho=0.9 mean=40 sd=8\n"
    "variances.constant = 0.05\n"
    "seed = 2024\n"
    "replicates = 3\n";

SimProtocol parse_str(const std::string& text) {
  std::istringstream in(text);
  return parse_sim_protocol(in);
}

// remove one "key = ..." line from the canonical protocol
std::string drop_key(const std::string& key) {
  std::istringstream in(kFullProtocol);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + " ", 0) == 0 || line.rfind(key + "=", 0) == 0) continue;
    out << line << "\n";
  }
  return out.str();
}

Eigen::MatrixXd dense_gmcar_cov_om(const GmcarParams& g, const Adjacency& adj) {
  const int n = adj.n;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd q1 = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd q2 = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    q1(i, i) = adj.degrees[i] / g.tau1_sq;
    q2(i, i) = adj.degrees[i] / g.tau2_sq;
    for (int j : adj.neighbors[i]) {
      w(i, j) = 1.0;
      q1(i, j) = -g.rho1 / g.tau1_sq;
      q2(i, j) = -g.rho2 / g.tau2_sq;
    }
  }
  Eigen::MatrixXd a = g.eta0 * Eigen::MatrixXd::Identity(n, n) + g.eta1 * w;
  Eigen::MatrixXd q(2 * n, 2 * n);
  q.topLeftCorner(n, n) = q1;
  q.topRightCorner(n, n) = -q1 * a;
  q.bottomLeftCorner(n, n) = -a.transpose() * q1;
  q.bottomRightCorner(n, n) = q2 + a.transpose() * q1 * a;
  return q.inverse();
}

}  // namespace

TEST_CASE("protocol parsing fills every field") {
  SimProtocol p = parse_str(kFullProtocol);
  CHECK(p.grid_rows == 4);
  CHECK(p.grid_cols == 5);
  CHECK(p.neighbors_path.empty());
  CHECK(p.gmcar.tau1_sq == Catch::Approx(0.09));
  CHECK(p.gmcar.tau2_sq == Catch::Approx(0.16));
  CHECK(p.gmcar.rho1 == 0.9);
  CHECK(p.gmcar.rho2 == 0.8);
  CHECK(p.gmcar.eta0 == 0.26);
  CHECK(p.gmcar.eta1 == -0.04);
  REQUIRE(p.beta.size() == 2);
  CHECK(p.beta[0][0] == 1.0);
  CHECK(p.beta[0][1] == 0.01);
  CHECK(p.beta[1][0] == 0.5);
  CHECK(p.beta[1][1] == 0.02);
  CHECK(p.covariates_synthetic);
  CHECK(p.synthetic.rho == 0.9);
  CHECK(p.synthetic.mean == 40.0);
  CHECK(p.synthetic.sd == 8.0);
  CHECK(p.variance_constant == 0.05);
  CHECK(p.seed == 2024);
  CHECK(p.replicates == 3);
  CHECK(p.m() == 2);
}

TEST_CASE("protocol accepts a neighbor-file lattice and plain synthetic flag") {
  std::string text = drop_key("lattice");
  text = "lattice = file:neighbors.txt\n" + text;
  SimProtocol p = parse_str(text);
  CHECK(p.neighbors_path == "neighbors.txt");
  CHECK(p.grid_rows == 0);

  std::string plain = drop_key("covariates.synthetic");
  plain += "covariates.synthetic = true\n";
  SimProtocol p2 = parse_str(plain);
  CHECK(p2.covariates_synthetic);
  CHECK(p2.synthetic.rho == 0.95);  // defaults kept
  CHECK(p2.synthetic.mean == 40.0);
  CHECK(p2.synthetic.sd == 8.0);
}

TEST_CASE("protocol rejects unknown keys outright") {
  CHECK_THROWS_WITH(parse_str(std::string(kFullProtocol) + "gmcar.tau3 = 1\n"),
                    Catch::Matchers::ContainsSubstring("unknown key 'gmcar.tau3'"));
  CHECK_THROWS_WITH(parse_str(std::string(kFullProtocol) + "betas = 1\n"),
                    Catch::Matchers::ContainsSubstring("unknown key 'betas'"));
}

TEST_CASE("protocol reports which required key is missing") {
  CHECK_THROWS_WITH(parse_str(drop_key("lattice")),
                    Catch::Matchers::ContainsSubstring("missing lattice"));
  CHECK_THROWS_WITH(parse_str(drop_key("gmcar.tau1")),
                    Catch::Matchers::ContainsSubstring("tau1"));
  CHECK_THROWS_WITH(parse_str(drop_key("gmcar.rho2")),
                    Catch::Matchers::ContainsSubstring("rho2"));
  CHECK_THROWS_WITH(parse_str(drop_key("beta.2")),
                    Catch::Matchers::ContainsSubstring("beta.1 and beta.2"));
  CHECK_THROWS_WITH(parse_str(drop_key("seed")),
                    Catch::Matchers::ContainsSubstring("missing seed"));
  CHECK_THROWS_WITH(parse_str(drop_key("replicates")),
                    Catch::Matchers::ContainsSubstring("missing replicates"));
  CHECK_THROWS_WITH(parse_str(drop_key("variances.constant")),
                    Catch::Matchers::ContainsSubstring("variances"));
  CHECK_THROWS_WITH(parse_str(drop_key("covariates.synthetic")),
                    Catch::Matchers::ContainsSubstring("covariates"));
}

TEST_CASE("protocol rejects malformed lines and values") {
  CHECK_THROWS_WITH(parse_str(std::string(kFullProtocol) + "just words\n"),
                    Catch::Matchers::ContainsSubstring("expected key = value"));
  CHECK_THROWS_WITH(parse_str(std::string(kFullProtocol) + "seed = \n"),
                    Catch::Matchers::ContainsSubstring("empty key or value"));
  CHECK_THROWS_WITH(parse_str(drop_key("lattice") + "lattice = grid:4y5\n"),
                    Catch::Matchers::ContainsSubstring("grid:RxC"));
  CHECK_THROWS_WITH(parse_str(drop_key("lattice") + "lattice = torus:4x5\n"),
                    Catch::Matchers::ContainsSubstring("grid:RxC or file:PATH"));
  CHECK_THROWS_WITH(parse_str(drop_key("gmcar.tau1") + "gmcar.tau1 = -0.3\n"),
                    Catch::Matchers::ContainsSubstring("positive"));
  CHECK_THROWS_WITH(parse_str(drop_key("gmcar.rho1") + "gmcar.rho1 = 1.2\n"),
                    Catch::Matchers::ContainsSubstring("rho"));
  CHECK_THROWS_WITH(parse_str(drop_key("beta.2") + "beta.2 = 0.5, 0.02, 1.0\n"),
                    Catch::Matchers::ContainsSubstring("equal"));
  CHECK_THROWS_WITH(parse_str(drop_key("variances.constant") + "variances.constant = 0\n"),
                    Catch::Matchers::ContainsSubstring("positive"));
  CHECK_THROWS_WITH(parse_str(drop_key("replicates") + "replicates = 0\n"),
                    Catch::Matchers::ContainsSubstring("replicates"));
  CHECK_THROWS_WITH(
      parse_str(drop_key("covariates.synthetic") + "covariates.synthetic = frobs=1\n"),
      Catch::Matchers::ContainsSubstring("unknown covariates.synthetic setting"));
  CHECK_THROWS_WITH(
      parse_str(drop_key("covariates.synthetic") + "covariates.synthetic = maybe\n"),
      Catch::Matchers::ContainsSubstring("true or k=v"));
  // both lattice forms at once
  CHECK_THROWS_WITH(parse_str(std::string(kFullProtocol) + "lattice = file:x.txt\n"),
                    Catch::Matchers::ContainsSubstring("exactly one"));
  // both variance forms at once
  CHECK_THROWS_WITH(parse_str(std::string(kFullProtocol) + "variances.path = v.csv\n"),
                    Catch::Matchers::ContainsSubstring("exactly one"));
  // both covariate forms at once
  CHECK_THROWS_WITH(parse_str(std::string(kFullProtocol) + "covariates.path = c.csv\n"),
                    Catch::Matchers::ContainsSubstring("exactly one"));
}

TEST_CASE("loading a protocol file resolves data paths against its directory") {
  const std::string dir = "/tmp/mvfh_proto_test";
  std::remove((dir + "/proto.txt").c_str());
  std::filesystem::create_directories(dir);
  std::string text = drop_key("covariates.synthetic") + "covariates.path = covs.csv\n";
  {
    std::ofstream out(dir + "/proto.txt");
    out << text;
  }
  SimProtocol p = load_sim_protocol(dir + "/proto.txt");
  CHECK(p.covariates_path == dir + "/covs.csv");

  // absolute paths pass through untouched
  std::string abs_text = drop_key("covariates.synthetic") + "covariates.path = /data/c.csv\n";
  {
    std::ofstream out(dir + "/proto2.txt");
    out << abs_text;
  }
  CHECK(load_sim_protocol(dir + "/proto2.txt").covariates_path == "/data/c.csv");

  CHECK_THROWS_WITH(load_sim_protocol(dir + "/nope.txt"),
                    Catch::Matchers::ContainsSubstring("cannot open protocol file"));
}

TEST_CASE("protocol lattice construction") {
  SimProtocol p = parse_str(kFullProtocol);
  Adjacency adj = protocol_lattice(p);
  CHECK(adj.n == 20);

  const std::string dir = "/tmp/mvfh_proto_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir + "/nb.txt");
    out << "u v\nv w\n";
  }
  std::string text = drop_key("lattice") + "lattice = file:" + dir + "/nb.txt\n";
  SimProtocol p2 = parse_str(text);
  CHECK(protocol_lattice(p2).n == 3);

  std::string missing = drop_key("lattice") + "lattice = file:/tmp/definitely_absent.txt\n";
  CHECK_THROWS_WITH(protocol_lattice(parse_str(missing)),
                    Catch::Matchers::ContainsSubstring("cannot open neighbor file"));
}

TEST_CASE("latent field draws have the advertised joint covariance") {
  Adjacency adj = load_neighbor_list("a b\nb c\nc d\n");
  GmcarParams g(0.25, 0.49, 0.8, 0.6, 0.5, -0.3);
  Eigen::MatrixXd expected = dense_gmcar_cov_om(g, adj);
  const int dim = 8;
  const int draws = 40000;
  RngStream rng(2718);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(dim, dim);
  for (int d = 0; d < draws; ++d) {
    Eigen::VectorXd u = draw_gmcar_field(g, adj, rng);
    mean += u;
    second.noalias() += u * u.transpose();
  }
  mean /= draws;
  Eigen::MatrixXd cov = second / draws - mean * mean.transpose();
  for (int a = 0; a < dim; ++a) {
    const double sda = std::sqrt(expected(a, a));
    CHECK(mean[a] == Catch::Approx(0.0).margin(5.0 * sda / std::sqrt(double(draws))));
    for (int b = a; b < dim; ++b) {
      const double scale = sda * std::sqrt(expected(b, b));
      INFO("covariance entry " << a << "," << b);
      CHECK(cov(a, b) ==
            Catch::Approx(expected(a, b)).margin(6.0 * scale / std::sqrt(double(draws)) + 1e-4));
    }
  }
}

TEST_CASE("seeded field drawing is deterministic") {
  Adjacency adj = grid_lattice(3, 3);
  GmcarParams g(0.09, 0.09, 0.9, 0.9, 0.26, -0.04);
  Eigen::VectorXd a = draw_gmcar_field(g, adj, 777);
  Eigen::VectorXd b = draw_gmcar_field(g, adj, 777);
  CHECK(a == b);
  Eigen::VectorXd c = draw_gmcar_field(g, adj, 778);
  CHECK(a != c);
}

TEST_CASE("synthetic covariates are standardized exactly and reproducible") {
  Adjacency adj = grid_lattice(5, 5);
  SyntheticCovariate s;
  s.rho = 0.9;
  s.mean = 40.0;
  s.sd = 8.0;
  Eigen::VectorXd x = synthetic_covariate(s, adj, 99);
  CHECK(x.mean() == Catch::Approx(40.0).margin(1e-9));
  const double sd = std::sqrt((x.array() - x.mean()).square().sum() / (adj.n - 1));
  CHECK(sd == Catch::Approx(8.0).margin(1e-9));
  CHECK(synthetic_covariate(s, adj, 99) == x);
  CHECK(synthetic_covariate(s, adj, 100) != x);
}

TEST_CASE("covariate csv reading places rows by area id") {
  Adjacency adj = load_neighbor_list("a b\nb c\n");
  std::istringstream in(
      "area_id,covariate_1,covariate_2\n"
      "c,3.0,30\n"
      "a,1.0,10\n"
      "b,2.0,20\n");
  Eigen::MatrixXd x = detail::read_covariate_csv(in, adj, "covariates");
  REQUIRE(x.rows() == 3);
  REQUIRE(x.cols() == 2);
  CHECK(x(adj.index_of_id("a"), 0) == 1.0);
  CHECK(x(adj.index_of_id("b"), 1) == 20.0);
  CHECK(x(adj.index_of_id("c"), 0) == 3.0);

  std::istringstream dup(
      "area_id,covariate_1\n"
      "a,1\n"
      "a,2\n"
      "b,3\n"
      "c,4\n");
  CHECK_THROWS_WITH(detail::read_covariate_csv(dup, adj, "covariates"),
                    Catch::Matchers::ContainsSubstring("duplicate area 'a'"));

  std::istringstream missing(
      "area_id,covariate_1\n"
      "a,1\n"
      "b,2\n");
  CHECK_THROWS_WITH(detail::read_covariate_csv(missing, adj, "covariates"),
                    Catch::Matchers::ContainsSubstring("missing area 'c'"));

  std::istringstream badhdr(
      "region,covariate_1\n"
      "a,1\n");
  CHECK_THROWS_WITH(detail::read_covariate_csv(badhdr, adj, "covariates"),
                    Catch::Matchers::ContainsSubstring("area_id"));

  std::istringstream badcol(
      "area_id,x1\n"
      "a,1\n");
  CHECK_THROWS_WITH(detail::read_covariate_csv(badcol, adj, "covariates"),
                    Catch::Matchers::ContainsSubstring("covariate_1"));

  std::istringstream badcount(
      "area_id,covariate_1\n"
      "a,1,9\n");
  CHECK_THROWS_WITH(detail::read_covariate_csv(badcount, adj, "covariates"),
                    Catch::Matchers::ContainsSubstring("wrong field count"));

  std::istringstream unknown(
      "area_id,covariate_1\n"
      "zz,1\n");
  CHECK_THROWS_AS(detail::read_covariate_csv(unknown, adj, "covariates"), ValidationError);
}

TEST_CASE("variance csv reading validates coverage and positivity") {
  Adjacency adj = load_neighbor_list("a b\nb c\n");
  std::istringstream in(
      "area_id,outcome,variance\n"
      "a,1,0.1\n"
      "a,2,0.2\n"
      "b,1,0.3\n"
      "b,2,0.4\n"
      "c,1,0.5\n"
      "c,2,0.6\n");
  Eigen::MatrixXd v = detail::read_variance_csv(in, adj, 2, "variances");
  CHECK(v(adj.index_of_id("a"), 0) == 0.1);
  CHECK(v(adj.index_of_id("c"), 1) == 0.6);

  std::istringstream dup(
      "area_id,outcome,variance\n"
      "a,1,0.1\n"
      "a,1,0.2\n");
  CHECK_THROWS_WITH(detail::read_variance_csv(dup, adj, 2, "variances"),
                    Catch::Matchers::ContainsSubstring("duplicate"));

  std::istringstream missing(
      "area_id,outcome,variance\n"
      "a,1,0.1\n"
      "a,2,0.2\n"
      "b,1,0.3\n"
      "b,2,0.4\n"
      "c,1,0.5\n");
  CHECK_THROWS_WITH(detail::read_variance_csv(missing, adj, 2, "variances"),
                    Catch::Matchers::ContainsSubstring("missing variance for area 'c' outcome 2"));

  std::istringstream outrange(
      "area_id,outcome,variance\n"
      "a,3,0.1\n");
  CHECK_THROWS_WITH(detail::read_variance_csv(outrange, adj, 2, "variances"),
                    Catch::Matchers::ContainsSubstring("outcome index out of range"));

  std::istringstream nonpos(
      "area_id,outcome,variance\n"
      "a,1,0\n");
  CHECK_THROWS_WITH(detail::read_variance_csv(nonpos, adj, 2, "variances"),
                    Catch::Matchers::ContainsSubstring("variance must be positive"));

  std::istringstream badhdr(
      "area_id,outcome,var\n"
      "a,1,0.1\n");
  CHECK_THROWS_WITH(detail::read_variance_csv(badhdr, adj, 2, "variances"),
                    Catch::Matchers::ContainsSubstring("area_id,outcome,variance"));
}

TEST_CASE("generated datasets satisfy the truth identity and share covariates") {
  SimProtocol p = parse_str(kFullProtocol);
  SimDataset d0 = make_dataset(p, 0);
  const int n = 20;
  REQUIRE(d0.data.n() == n);
  REQUIRE(d0.data.m == 2);
  // theta = X beta + u exactly, same X for both outcomes
  for (int j = 0; j < 2; ++j) {
    Eigen::MatrixXd x = d0.data.X[j];
    REQUIRE(x.cols() == 2);
    CHECK((x.col(0).array() == 1.0).all());
    Eigen::VectorXd recon = x * p.beta[j] + d0.u_true.col(j);
    CHECK(d0.theta_true.col(j).isApprox(recon, 1e-14));
  }
  CHECK(d0.data.X[0] == d0.data.X[1]);
  // diagonal sampling covariance at the constant variance
  for (int i = 0; i < n; ++i) {
    CHECK(d0.data.sampling_cov[i](0, 0) == 0.05);
    CHECK(d0.data.sampling_cov[i](1, 1) == 0.05);
    CHECK(d0.data.sampling_cov[i](0, 1) == 0.0);
  }
  // noise is scaled plausibly: every deviation within 6 sampling sds
  CHECK(((d0.data.y - d0.theta_true).array().abs() < 6.0 * std::sqrt(0.05)).all());

  // determinism per replicate; replicates share X but differ in field and noise
  SimDataset d0b = make_dataset(p, 0);
  CHECK(d0b.data.y == d0.data.y);
  CHECK(d0b.u_true == d0.u_true);
  SimDataset d1 = make_dataset(p, 1);
  CHECK(d1.data.X[0] == d0.data.X[0]);
  CHECK(d1.u_true != d0.u_true);
  CHECK(d1.data.y != d0.data.y);

  CHECK_THROWS_AS(make_dataset(p, -1), ValidationError);

  // beta length must match intercept + covariates
  SimProtocol bad = p;
  bad.beta[0] = Eigen::VectorXd::Zero(3);
  bad.beta[1] = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_WITH(make_dataset(bad, 0),
                    Catch::Matchers::ContainsSubstring("does not match intercept"));
}

TEST_CASE("per-fit seeds are deterministic and collision-free across the study grid") {
  std::set<std::uint64_t> seen;
  for (ModelKind k : {ModelKind::iw, ModelKind::separable, ModelKind::gmcar}) {
    for (long r = 0; r < 4; ++r) {
      seen.insert(fit_seed(42, k, r));
      CHECK(fit_seed(42, k, r) == fit_seed(42, k, r));
    }
  }
  CHECK(seen.size() == 12);
  CHECK(fit_seed(42, ModelKind::iw, 0) != fit_seed(43, ModelKind::iw, 0));
}

TEST_CASE("a small study reports per-model accuracy against the truth") {
  std::string text =
      "lattice = grid:3x3\n"
      "gmcar.tau1 = 0.3\ngmcar.tau2 = 0.4\n"
      "gmcar.rho1 = 0.9\ngmcar.rho2 = 0.8\n"
      "gmcar.eta0 = 0.26\ngmcar.eta1 = -0.04\n"
      "beta.1 = 1.0, 0.01\nbeta.2 = 0.5, 0.02\n"
      "covariates.synthetic = true\n"
      "variances.constant = 0.05\n"
      "seed = 2024\nreplicates = 2\n";
  SimProtocol p = parse_str(text);
  REQUIRE(p.replicates == 2);

  std::vector<ModelSpec> models(2);
  models[0].kind = ModelKind::iw;
  models[1].kind = ModelKind::gmcar;
  McmcConfig cfg;
  cfg.iterations = 800;
  cfg.burn_in = 200;
  cfg.seed = 77;

  SimStudyReport rep = run_sim_study(p, models, cfg);
  REQUIRE(rep.model_names == std::vector<std::string>{"iw", "gmcar"});
  CHECK(rep.area_ids.size() == 9);
  CHECK(rep.m == 2);
  CHECK(rep.replicates == 2);
  REQUIRE(rep.overall_mse.size() == 2);
  for (int mi = 0; mi < 2; ++mi) {
    CHECK(rep.overall_mse[mi].rows() == 2);
    CHECK(rep.overall_mse[mi].cols() == 2);
    CHECK((rep.overall_mse[mi].array() >= 0.0).all());
    // posterior means track y closely at this sampling variance; the error
    // against truth stays well under the raw noise scale
    CHECK((rep.overall_mse[mi].array() < 0.25).all());
    REQUIRE(rep.per_location[mi].size() == 2);
    for (int r = 0; r < 2; ++r) {
      CHECK(rep.per_location[mi][r].rows() == 9);
      CHECK(rep.per_location[mi][r].cols() == 2);
      // overall is the average of per-location entries
      CHECK(rep.overall_mse[mi].row(r).transpose().isApprox(
          rep.per_location[mi][r].colwise().mean().transpose(), 1e-12));
      CHECK(rep.fit_seeds[mi][r] == fit_seed(77, models[mi].kind, r));
    }
    CHECK(rep.mean_mse(mi).isApprox(rep.overall_mse[mi].colwise().mean().transpose(), 1e-12));
  }

  // win counts split the replicates between the models, per outcome
  double ties = 0.0;
  Eigen::VectorXi w01 = rep.wins(0, 1, &ties);
  Eigen::VectorXi w10 = rep.wins(1, 0);
  for (int j = 0; j < 2; ++j) {
    CHECK(w01[j] + w10[j] <= 2);
    CHECK(w01[j] >= 0);
  }
  CHECK(w01.sum() + w10.sum() + static_cast<int>(ties) == 4);

  Eigen::VectorXd pct = rep.mean_percent_better(0, 1);
  for (int j = 0; j < 2; ++j) {
    CHECK(pct[j] >= 0.0);
    CHECK(pct[j] <= 100.0);
  }

  // the whole study is reproducible
  SimStudyReport rep2 = run_sim_study(p, models, cfg);
  for (int mi = 0; mi < 2; ++mi) {
    CHECK(rep2.overall_mse[mi] == rep.overall_mse[mi]);
  }

  CHECK_THROWS_AS(run_sim_study(p, {}, cfg), ValidationError);
}
