#pragma once

#include <Eigen/Dense>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mvfh/adjacency.hpp"
#include "mvfh/errors.hpp"
#include "mvfh/linalg.hpp"
#include "mvfh/metrics.hpp"

namespace mvfh {

// Ingestion-time transform of direct estimates. With Kind::log_scale the
// analysis runs on log(pre_scale * estimate) and margins of error are turned
// into log-scale variances by the delta method at confidence z-value moe_z.
struct TransformSpec {
  enum class Kind { none, log_scale };
  Kind kind = Kind::none;
  double pre_scale = 100.0;
  double moe_z = 1.645;

  void validate() const {
    if (!(pre_scale > 0.0)) throw ValidationError("TransformSpec: pre_scale must be positive");
    if (!(moe_z > 0.0)) throw ValidationError("TransformSpec: moe_z must be positive");
  }
};

// Direct survey estimates with known sampling covariances on a lattice.
// y holds analysis-scale values (post-transform); X_j includes the intercept
// as its first column.
struct SurveyDataset {
  Adjacency adj;
  int m = 0;
  Eigen::MatrixXd y;                         // n x m
  std::vector<Eigen::MatrixXd> sampling_cov; // per area, m x m SPD
  std::vector<Eigen::MatrixXd> X;            // per outcome, n x p_j
  TransformSpec transform;

  int n() const { return adj.n; }

  void validate() const {
    if (m < 1) throw ValidationError("SurveyDataset: need at least one outcome");
    if (y.rows() != adj.n || y.cols() != m)
      throw ValidationError("SurveyDataset: y dimensions do not match lattice/outcomes");
    if (!y.allFinite()) throw ValidationError("SurveyDataset: missing or non-finite estimate");
    if (static_cast<int>(sampling_cov.size()) != adj.n)
      throw ValidationError("SurveyDataset: one sampling covariance per area required");
    for (int i = 0; i < adj.n; ++i) {
      const auto& s = sampling_cov[i];
      if (s.rows() != m || s.cols() != m)
        throw ValidationError("SurveyDataset: sampling covariance dimension mismatch at area " +
                              adj.ids[i]);
      if (!is_spd(s))
        throw ValidationError("SurveyDataset: sampling covariance not SPD at area " + adj.ids[i]);
    }
    if (static_cast<int>(X.size()) != m)
      throw ValidationError("SurveyDataset: one design matrix per outcome required");
    for (int j = 0; j < m; ++j) {
      if (X[j].rows() != adj.n)
        throw ValidationError("SurveyDataset: design matrix row count mismatch");
      if (X[j].cols() < 1) throw ValidationError("SurveyDataset: empty design matrix");
      if (!X[j].allFinite()) throw ValidationError("SurveyDataset: non-finite covariate");
    }
  }

  // Drop one area: sub-lattice data for leave-one-out refits. The sub-lattice
  // may reindex areas, so rows are mapped through area identifiers.
  SurveyDataset without_area(int drop) const {
    SurveyDataset out;
    out.adj = adj.without_area(drop);
    out.m = m;
    out.transform = transform;
    const int nn = out.adj.n;
    out.y.resize(nn, m);
    out.sampling_cov.resize(nn);
    out.X.resize(m);
    for (int j = 0; j < m; ++j) out.X[j].resize(nn, X[j].cols());
    for (int k = 0; k < nn; ++k) {
      const int i = adj.index_of_id(out.adj.ids[k]);
      out.y.row(k) = y.row(i);
      out.sampling_cov[k] = sampling_cov[i];
      for (int j = 0; j < m; ++j) out.X[j].row(k) = X[j].row(i);
    }
    return out;
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

inline double parse_number(const std::string& s, int line_no, const std::string& what) {
  const std::string t = trim(s);
  if (t.empty()) {
    throw ValidationError("line " + std::to_string(line_no) + ": empty " + what);
  }
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) {
    throw ValidationError("line " + std::to_string(line_no) + ": cannot parse " + what + " '" +
                          t + "'");
  }
  return v;
}

inline long parse_int(const std::string& s, int line_no, const std::string& what) {
  const std::string t = trim(s);
  char* end = nullptr;
  long v = std::strtol(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size()) {
    throw ValidationError("line " + std::to_string(line_no) + ": cannot parse " + what + " '" +
                          t + "'");
  }
  return v;
}

inline double parse_number(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size()) {
    throw ValidationError("cannot parse " + what + " '" + t + "'");
  }
  return v;
}

inline long parse_int(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  char* end = nullptr;
  long v = std::strtol(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size()) {
    throw ValidationError("cannot parse " + what + " '" + t + "'");
  }
  return v;
}

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Reads the data CSV (header: area_id,outcome,estimate,moe_or_var,var_flag,
// covariate_1..covariate_p). One row per (area, outcome); var_flag selects
// whether moe_or_var is a margin of error (converted to a variance using
// transform.moe_z) or already a variance on the analysis scale.
inline SurveyDataset read_survey_csv(std::istream& in, const Adjacency& adj,
                                     const TransformSpec& transform) {
  transform.validate();
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("data CSV: empty file");
  auto header = detail::split_csv_line(line);
  const std::vector<std::string> fixed = {"area_id", "outcome", "estimate", "moe_or_var",
                                          "var_flag"};
  if (header.size() < fixed.size()) {
    throw ValidationError("data CSV: header must start with area_id,outcome,estimate,"
                          "moe_or_var,var_flag");
  }
  for (size_t k = 0; k < fixed.size(); ++k) {
    if (detail::trim(header[k]) != fixed[k]) {
      throw ValidationError("data CSV: expected header column '" + fixed[k] + "', found '" +
                            detail::trim(header[k]) + "'");
    }
  }
  const int p = static_cast<int>(header.size() - fixed.size());
  for (int k = 0; k < p; ++k) {
    std::string expect = "covariate_" + std::to_string(k + 1);
    if (detail::trim(header[fixed.size() + k]) != expect) {
      throw ValidationError("data CSV: expected header column '" + expect + "', found '" +
                            detail::trim(header[fixed.size() + k]) + "'");
    }
  }

  struct Row {
    double estimate;
    double variance;
    std::vector<double> covs;
  };
  std::map<std::pair<int, int>, Row> rows;  // (area index, outcome-1) -> row
  int m = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != header.size()) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, found " +
                            std::to_string(f.size()));
    }
    const std::string id = detail::trim(f[0]);
    int area = adj.index_of_id(id);
    long outcome = detail::parse_int(f[1], line_no, "outcome");
    if (outcome < 1) {
      throw ValidationError("line " + std::to_string(line_no) + ": outcome must be >= 1");
    }
    m = std::max(m, static_cast<int>(outcome));
    double estimate = detail::parse_number(f[2], line_no, "estimate");
    double mv = detail::parse_number(f[3], line_no, "moe_or_var");
    const std::string flag = detail::trim(f[4]);

    Row row;
    if (transform.kind == TransformSpec::Kind::log_scale) {
      if (!(estimate > 0.0)) {
        throw ValidationError("line " + std::to_string(line_no) +
                              ": estimate must be positive under the log transform");
      }
      row.estimate = std::log(transform.pre_scale * estimate);
    } else {
      row.estimate = estimate;
    }
    if (flag == "moe") {
      if (transform.kind == TransformSpec::Kind::log_scale) {
        row.variance = delta_log_variance(estimate, mv, transform.moe_z, transform.pre_scale);
      } else {
        if (!(mv > 0.0)) {
          throw ValidationError("line " + std::to_string(line_no) + ": moe must be positive");
        }
        double sd = mv / transform.moe_z;
        row.variance = sd * sd;
      }
    } else if (flag == "var") {
      if (!(mv > 0.0)) {
        throw ValidationError("line " + std::to_string(line_no) + ": variance must be positive");
      }
      row.variance = mv;
    } else {
      throw ValidationError("line " + std::to_string(line_no) + ": var_flag must be 'moe' or "
                            "'var', found '" + flag + "'");
    }
    row.covs.resize(p);
    for (int k = 0; k < p; ++k) {
      row.covs[k] = detail::parse_number(f[fixed.size() + k], line_no,
                                         "covariate_" + std::to_string(k + 1));
    }
    auto key = std::make_pair(area, static_cast<int>(outcome) - 1);
    if (!rows.emplace(key, std::move(row)).second) {
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate row for area '" +
                            id + "' outcome " + std::to_string(outcome));
    }
  }
  if (m == 0) throw ValidationError("data CSV: no data rows");

  SurveyDataset ds;
  ds.adj = adj;
  ds.m = m;
  ds.transform = transform;
  ds.y.resize(adj.n, m);
  ds.sampling_cov.assign(adj.n, Eigen::MatrixXd::Zero(m, m));
  ds.X.assign(m, Eigen::MatrixXd::Ones(adj.n, p + 1));
  for (int i = 0; i < adj.n; ++i) {
    for (int j = 0; j < m; ++j) {
      auto it = rows.find({i, j});
      if (it == rows.end()) {
        throw ValidationError("data CSV: missing row for area '" + adj.ids[i] + "' outcome " +
                              std::to_string(j + 1));
      }
      ds.y(i, j) = it->second.estimate;
      ds.sampling_cov[i](j, j) = it->second.variance;
      for (int k = 0; k < p; ++k) ds.X[j](i, k + 1) = it->second.covs[k];
    }
  }
  ds.validate();
  return ds;
}

inline SurveyDataset load_survey_csv(const std::string& path, const Adjacency& adj,
                                     const TransformSpec& transform) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open data CSV: " + path);
  return read_survey_csv(in, adj, transform);
}

// Truth CSV: header area_id,outcome,value. Values are on the same raw scale as
// the data CSV's estimates; the dataset's transform is applied so truth and
// fitted values live on one scale.
inline Eigen::MatrixXd read_truth_csv(std::istream& in, const Adjacency& adj, int m,
                                      const TransformSpec& transform) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("truth CSV: empty file");
  auto header = detail::split_csv_line(line);
  if (header.size() != 3 || detail::trim(header[0]) != "area_id" ||
      detail::trim(header[1]) != "outcome" || detail::trim(header[2]) != "value") {
    throw ValidationError("truth CSV: header must be area_id,outcome,value");
  }
  Eigen::MatrixXd truth = Eigen::MatrixXd::Constant(adj.n, m,
                                                    std::numeric_limits<double>::quiet_NaN());
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 3) {
      throw ValidationError("truth CSV line " + std::to_string(line_no) + ": expected 3 fields");
    }
    int area = adj.index_of_id(detail::trim(f[0]));
    long outcome = detail::parse_int(f[1], line_no, "outcome");
    if (outcome < 1 || outcome > m) {
      throw ValidationError("truth CSV line " + std::to_string(line_no) +
                            ": outcome out of range");
    }
    double v = detail::parse_number(f[2], line_no, "value");
    if (transform.kind == TransformSpec::Kind::log_scale) {
      if (!(v > 0.0)) {
        throw ValidationError("truth CSV line " + std::to_string(line_no) +
                              ": value must be positive under the log transform");
      }
      v = std::log(transform.pre_scale * v);
    }
    if (!std::isnan(truth(area, outcome - 1))) {
      throw ValidationError("truth CSV line " + std::to_string(line_no) + ": duplicate entry");
    }
    truth(area, outcome - 1) = v;
  }
  if (truth.hasNaN()) throw ValidationError("truth CSV: missing entries for some area/outcome");
  return truth;
}

inline Eigen::MatrixXd load_truth_csv(const std::string& path, const Adjacency& adj, int m,
                                      const TransformSpec& transform) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open truth CSV: " + path);
  return read_truth_csv(in, adj, m, transform);
}

// Writes a dataset in the data CSV schema with var_flag=var and analysis-scale
// values (used to freeze simulated fixtures). Requires diagonal sampling
// covariances and a common covariate count across outcomes.
inline void write_survey_csv(std::ostream& out, const SurveyDataset& ds) {
  int p = static_cast<int>(ds.X[0].cols()) - 1;
  for (const auto& x : ds.X) {
    if (static_cast<int>(x.cols()) - 1 != p) {
      throw ValidationError("write_survey_csv: outcomes disagree on covariate count");
    }
  }
  out << "area_id,outcome,estimate,moe_or_var,var_flag";
  for (int k = 1; k <= p; ++k) out << ",covariate_" << k;
  out << "\n";
  for (int i = 0; i < ds.n(); ++i) {
    for (int j = 0; j < ds.m; ++j) {
      for (int a = 0; a < ds.m; ++a) {
        if (a != j && ds.sampling_cov[i](j, a) != 0.0) {
          throw ValidationError("write_survey_csv: sampling covariance must be diagonal");
        }
      }
      out << ds.adj.ids[i] << "," << (j + 1) << "," << detail::format_g17(ds.y(i, j)) << ","
          << detail::format_g17(ds.sampling_cov[i](j, j)) << ",var";
      for (int k = 1; k <= p; ++k) out << "," << detail::format_g17(ds.X[j](i, k));
      out << "\n";
    }
  }
}

inline void write_truth_csv(std::ostream& out, const Adjacency& adj,
                            const Eigen::MatrixXd& truth) {
  out << "area_id,outcome,value\n";
  for (int i = 0; i < adj.n; ++i) {
    for (Eigen::Index j = 0; j < truth.cols(); ++j) {
      out << adj.ids[i] << "," << (j + 1) << "," << detail::format_g17(truth(i, j)) << "\n";
    }
  }
}

}  // namespace mvfh
