#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "mvfh/concurrency.hpp"
#include "mvfh/dataset.hpp"
#include "mvfh/errors.hpp"
#include "mvfh/metrics.hpp"
#include "mvfh/sampler.hpp"

namespace mvfh {

struct LooResult {
  Eigen::VectorXd mspe;          // per outcome
  Eigen::MatrixXd per_location;  // n x m squared prediction errors
  Eigen::MatrixXd predicted;     // n x m posterior-mean theta at each held-out area
};

// Leave-one-out mean squared prediction error: every area is held out in turn,
// the model refit on the remaining lattice, and the held-out theta draws are
// scored against the observed (analysis-scale) direct estimate.
inline LooResult loo_mspe(const SurveyDataset& data, const ModelSpec& model,
                          const McmcConfig& cfg) {
  data.validate();
  const int n = data.n();
  const int m = data.m;
  // fail fast if any removal disconnects the lattice
  for (int i = 0; i < n; ++i) {
    try {
      data.adj.without_area(i);
    } catch (const ValidationError& e) {
      throw ValidationError("loo_mspe: holding out area '" + data.adj.ids[i] +
                            "' disconnects the lattice (" + e.what() + ")");
    }
  }
  LooResult out;
  out.per_location.resize(n, m);
  out.predicted.resize(n, m);
  parallel_for(n, [&](int i) {
    Eigen::MatrixXd theta = predict_holdout(data, model, cfg, i);
    Eigen::VectorXd mean = theta.colwise().mean();
    for (int j = 0; j < m; ++j) {
      out.predicted(i, j) = mean[j];
      const double d = mean[j] - data.y(i, j);
      out.per_location(i, j) = d * d;
    }
  });
  out.mspe = out.per_location.colwise().mean();
  return out;
}

// ---------------------------------------------------------------------------
// Cross-model evaluation report
// ---------------------------------------------------------------------------

struct ModelEvaluation {
  std::string model;
  Eigen::VectorXd overall;       // per-outcome MSE (or MSPE)
  Eigen::MatrixXd per_location;  // n x m squared errors
};

struct PairwiseComparison {
  std::string baseline;    // model a
  std::string comparator;  // model b; positive relative reduction favors b
  Eigen::MatrixXd relative_reduction;  // n x m
  std::vector<PercentBetter> percent;  // per outcome, pct_a/pct_b/pct_tied
};

struct EvaluationReport {
  std::vector<std::string> area_ids;
  int m = 0;
  std::vector<ModelEvaluation> models;
  std::vector<PairwiseComparison> pairs;  // all ordered pairs a<b in listed order
  std::map<std::string, std::string> metadata;  // seeds, config digest, scale notes
};

// Assembles the pairwise comparisons for every (baseline, comparator) pair in
// listing order: the first-listed model plays the baseline role.
inline EvaluationReport build_evaluation_report(const std::vector<std::string>& area_ids, int m,
                                                std::vector<ModelEvaluation> models) {
  EvaluationReport rep;
  rep.area_ids = area_ids;
  rep.m = m;
  const auto n = static_cast<Eigen::Index>(area_ids.size());
  for (const auto& me : models) {
    if (me.per_location.rows() != n || me.per_location.cols() != m) {
      throw ValidationError("build_evaluation_report: per-location shape mismatch for " +
                            me.model);
    }
  }
  rep.models = std::move(models);
  for (size_t a = 0; a < rep.models.size(); ++a) {
    for (size_t b = a + 1; b < rep.models.size(); ++b) {
      PairwiseComparison pc;
      pc.baseline = rep.models[a].model;
      pc.comparator = rep.models[b].model;
      pc.relative_reduction.resize(n, m);
      for (int j = 0; j < m; ++j) {
        pc.relative_reduction.col(j) =
            relative_reduction(Eigen::VectorXd(rep.models[a].per_location.col(j)),
                               Eigen::VectorXd(rep.models[b].per_location.col(j)));
        pc.percent.push_back(percent_better(rep.models[a].per_location.col(j),
                                            rep.models[b].per_location.col(j)));
      }
      rep.pairs.push_back(std::move(pc));
    }
  }
  return rep;
}

}  // namespace mvfh
