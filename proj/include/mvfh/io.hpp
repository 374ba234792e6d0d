#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mvfh/dataset.hpp"
#include "mvfh/errors.hpp"
#include "mvfh/evaluate.hpp"
#include "mvfh/ols.hpp"
#include "mvfh/sampler.hpp"
#include "mvfh/simulate.hpp"

namespace mvfh {

// ---------------------------------------------------------------------------
// Config digests: short stable fingerprints embedded in every artifact so a
// result file can be traced back to the exact run settings.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

inline std::string describe_config(const McmcConfig& cfg) {
  std::ostringstream out;
  out << "iterations=" << cfg.iterations << ";burn_in=" << cfg.burn_in << ";thin=" << cfg.thin
      << ";seed=" << cfg.seed << ";chains=" << cfg.chains << ";adapt=" << (cfg.adapt ? 1 : 0);
  for (const auto& [k, v] : cfg.proposal_sd) {
    out << ";proposal_sd." << k << "=" << detail::format_g17(v);
  }
  return out.str();
}

inline std::string describe_model(const ModelSpec& model) {
  std::ostringstream out;
  out << "model=" << model_kind_name(model.kind);
  const auto& pr = model.prior;
  auto mat = [&](const char* key, const Eigen::MatrixXd& m) {
    if (m.size() == 0) return;
    out << ';' << key << '=';
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      out << (i ? "," : "") << detail::format_g17(m.data()[i]);
    }
  };
  auto opt = [&](const char* key, const std::optional<double>& v) {
    if (v) out << ';' << key << '=' << detail::format_g17(*v);
  };
  out << ";sigma_iw_df=" << detail::format_g17(pr.sigma_iw_df);
  mat("sigma_iw_scale", pr.sigma_iw_scale);
  out << ";tau_range=" << detail::format_g17(pr.tau_lo) << "," << detail::format_g17(pr.tau_hi);
  out << ";eta_prior=" << detail::format_g17(pr.eta_mean) << ","
      << detail::format_g17(pr.eta_sd);
  if (pr.beta_proper) out << ";beta_sd=" << detail::format_g17(pr.beta_sd);
  if (pr.sigma_iw_fixed) mat("sigma_iw_fixed", *pr.sigma_iw_fixed);
  if (pr.beta_fixed) {
    out << ";beta_fixed=";
    bool first = true;
    for (const auto& b : *pr.beta_fixed) {
      for (Eigen::Index i = 0; i < b.size(); ++i) {
        out << (first ? "" : ",") << detail::format_g17(b[i]);
        first = false;
      }
    }
  }
  opt("rho_fixed", pr.rho_fixed);
  opt("rho1_fixed", pr.rho1_fixed);
  opt("rho2_fixed", pr.rho2_fixed);
  opt("tau1_fixed", pr.tau1_fixed);
  opt("tau2_fixed", pr.tau2_fixed);
  opt("eta0_fixed", pr.eta0_fixed);
  opt("eta1_fixed", pr.eta1_fixed);
  return out.str();
}

inline std::string config_digest(const ModelSpec& model, const McmcConfig& cfg) {
  return hex64(fnv1a64(describe_model(model) + "|" + describe_config(cfg)));
}

// ---------------------------------------------------------------------------
// Chain CSVs: one file per chain, one row per retained draw, full precision.
// Column order: beta, structure parameters, u, theta.
// ---------------------------------------------------------------------------

inline void write_chain_csv(const PosteriorDraws& draws, int chain, std::ostream& out) {
  const auto& c = draws.chains.at(static_cast<size_t>(chain));
  const auto names = draws.all_names();
  for (size_t k = 0; k < names.size(); ++k) out << (k ? "," : "") << names[k];
  out << '\n';
  const Eigen::Index rows = c.beta.rows();
  for (Eigen::Index r = 0; r < rows; ++r) {
    bool first = true;
    auto emit = [&](const Eigen::MatrixXd& block) {
      for (Eigen::Index k = 0; k < block.cols(); ++k) {
        if (!first) out << ',';
        first = false;
        out << detail::format_g17(block(r, k));
      }
    };
    emit(c.beta);
    emit(c.structure);
    emit(c.u);
    emit(c.theta);
    out << '\n';
  }
}

inline void save_chain_csv(const PosteriorDraws& draws, int chain, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open output file: " + path);
  write_chain_csv(draws, chain, out);
  if (!out) throw ValidationError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// JSON writers
// ---------------------------------------------------------------------------

inline nlohmann::json summary_to_json(const SummaryReport& rep,
                                      const std::map<std::string, std::string>& metadata = {}) {
  nlohmann::json j;
  j["chains"] = rep.chains;
  j["retained_per_chain"] = rep.retained_per_chain;
  j["warnings"] = rep.warnings;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : rep.params) {
    nlohmann::json e;
    e["name"] = p.name;
    e["mean"] = p.mean;
    e["median"] = p.median;
    e["sd"] = p.sd;
    e["q5"] = p.q5;
    e["q95"] = p.q95;
    e["rhat"] = p.rhat;
    e["ess"] = p.ess;
    if (p.acceptance) e["acceptance"] = *p.acceptance;
    params.push_back(std::move(e));
  }
  j["params"] = std::move(params);
  for (const auto& [k, v] : metadata) j["metadata"][k] = v;
  return j;
}

inline nlohmann::json evaluation_to_json(const EvaluationReport& rep) {
  nlohmann::json j;
  j["area_ids"] = rep.area_ids;
  j["outcomes"] = rep.m;
  for (const auto& me : rep.models) {
    nlohmann::json e;
    e["model"] = me.model;
    e["overall"] = std::vector<double>(me.overall.data(), me.overall.data() + me.overall.size());
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < me.per_location.rows(); ++i) {
      rows.push_back(std::vector<double>(me.per_location.row(i).begin(),
                                         me.per_location.row(i).end()));
    }
    e["per_location_sqerr"] = std::move(rows);
    j["models"].push_back(std::move(e));
  }
  for (const auto& pc : rep.pairs) {
    nlohmann::json e;
    e["baseline"] = pc.baseline;
    e["comparator"] = pc.comparator;
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < pc.relative_reduction.rows(); ++i) {
      rows.push_back(std::vector<double>(pc.relative_reduction.row(i).begin(),
                                         pc.relative_reduction.row(i).end()));
    }
    e["relative_reduction"] = std::move(rows);
    for (const auto& pb : pc.percent) {
      e["percent_better"].push_back({{"baseline_better", pb.pct_a_better},
                                     {"comparator_better", pb.pct_b_better},
                                     {"tied", pb.pct_tied}});
    }
    j["pairs"].push_back(std::move(e));
  }
  for (const auto& [k, v] : rep.metadata) j["metadata"][k] = v;
  return j;
}

// Long-format per-location CSV: area_id,outcome,metric,value. Metrics are
// "sqerr:<model>" and "relred:<baseline>_vs_<comparator>".
inline void write_evaluation_csv(const EvaluationReport& rep, std::ostream& out) {
  out << "area_id,outcome,metric,value\n";
  const auto n = static_cast<Eigen::Index>(rep.area_ids.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < rep.m; ++j) {
      for (const auto& me : rep.models) {
        out << rep.area_ids[static_cast<size_t>(i)] << ',' << (j + 1) << ",sqerr:" << me.model
            << ',' << detail::format_g17(me.per_location(i, j)) << '\n';
      }
      for (const auto& pc : rep.pairs) {
        out << rep.area_ids[static_cast<size_t>(i)] << ',' << (j + 1) << ",relred:" << pc.baseline
            << "_vs_" << pc.comparator << ','
            << detail::format_g17(pc.relative_reduction(i, j)) << '\n';
      }
    }
  }
}

inline nlohmann::json sim_study_to_json(const SimStudyReport& rep,
                                        const std::map<std::string, std::string>& metadata = {}) {
  nlohmann::json j;
  j["models"] = rep.model_names;
  j["area_ids"] = rep.area_ids;
  j["outcomes"] = rep.m;
  j["replicates"] = rep.replicates;
  for (size_t mi = 0; mi < rep.model_names.size(); ++mi) {
    nlohmann::json e;
    e["model"] = rep.model_names[mi];
    nlohmann::json mse = nlohmann::json::array();
    for (int r = 0; r < rep.replicates; ++r) {
      mse.push_back(std::vector<double>(rep.overall_mse[mi].row(r).begin(),
                                        rep.overall_mse[mi].row(r).end()));
    }
    e["overall_mse"] = std::move(mse);
    Eigen::VectorXd mm = rep.mean_mse(static_cast<int>(mi));
    e["mean_mse"] = std::vector<double>(mm.data(), mm.data() + mm.size());
    nlohmann::json seeds = nlohmann::json::array();
    for (auto s : rep.fit_seeds[mi]) seeds.push_back(s);
    e["fit_seeds"] = std::move(seeds);
    j["per_model"].push_back(std::move(e));
  }
  for (size_t a = 0; a < rep.model_names.size(); ++a) {
    for (size_t b = a + 1; b < rep.model_names.size(); ++b) {
      nlohmann::json e;
      e["baseline"] = rep.model_names[a];
      e["comparator"] = rep.model_names[b];
      double ties = 0;
      Eigen::VectorXi w = rep.wins(static_cast<int>(a), static_cast<int>(b), &ties);
      e["baseline_mse_wins"] = std::vector<int>(w.data(), w.data() + w.size());
      e["ties"] = ties;
      Eigen::VectorXd pct = rep.mean_percent_better(static_cast<int>(a), static_cast<int>(b));
      e["mean_percent_comparator_better"] =
          std::vector<double>(pct.data(), pct.data() + pct.size());
      j["comparisons"].push_back(std::move(e));
    }
  }
  for (const auto& [k, v] : metadata) j["metadata"][k] = v;
  return j;
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  }
  return rows;
}

inline nlohmann::json ols_to_json(const OlsDiagnostics& d) {
  nlohmann::json j;
  int idx = 0;
  for (const auto& o : d.outcomes) {
    nlohmann::json e;
    e["outcome"] = ++idx;
    e["coefficients"] =
        std::vector<double>(o.coefficients.data(), o.coefficients.data() + o.coefficients.size());
    e["residual_sd"] = o.residual_sd;
    e["moran_i"] = o.moran.statistic;
    e["moran_p"] = o.moran.p_value;
    e["moran_permutations"] = o.moran.permutations;
    j["outcomes"].push_back(std::move(e));
  }
  j["residual_cross_correlation"] = matrix_to_json(d.residual_correlation);
  j["residual_cross_correlation_p"] = matrix_to_json(d.correlation_p_value);
  return j;
}

inline void save_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open output file: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw ValidationError("write failed: " + path);
}

}  // namespace mvfh
