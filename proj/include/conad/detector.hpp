#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "conad/common.hpp"
#include "conad/dataset.hpp"
#include "conad/metric.hpp"
#include "conad/nca.hpp"
#include "conad/predictors.hpp"

namespace conad {

enum class MetricKind { euclidean, mahalanobis, rca, nca };
enum class Scope { global, local };
enum class ModelKind { softmax, naive_bayes };

inline const char* to_string(MetricKind m) {
  switch (m) {
    case MetricKind::euclidean: return "euclidean";
    case MetricKind::mahalanobis: return "mahalanobis";
    case MetricKind::rca: return "rca";
    case MetricKind::nca: return "nca";
  }
  return "?";
}

inline const char* to_string(Scope s) { return s == Scope::global ? "global" : "local"; }

inline const char* to_string(ModelKind m) {
  return m == ModelKind::softmax ? "softmax" : "nb";
}

inline MetricKind metric_kind_from_string(const std::string& s) {
  if (s == "euclidean") return MetricKind::euclidean;
  if (s == "mahalanobis") return MetricKind::mahalanobis;
  if (s == "rca") return MetricKind::rca;
  if (s == "nca") return MetricKind::nca;
  fail("unknown metric kind '%s' (expected euclidean|mahalanobis|rca|nca)", s.c_str());
}

inline Scope scope_from_string(const std::string& s) {
  if (s == "global") return Scope::global;
  if (s == "local") return Scope::local;
  fail("unknown scope '%s' (expected global|local)", s.c_str());
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "softmax") return ModelKind::softmax;
  if (s == "nb" || s == "naive_bayes") return ModelKind::naive_bayes;
  fail("unknown model kind '%s' (expected softmax|nb)", s.c_str());
}

/// One cell of the evaluation grid: which metric, which reference scope, and
/// which predictive model, plus the fitting hyperparameters.
struct DetectorConfig {
  MetricKind metric_kind = MetricKind::euclidean;
  Scope scope = Scope::global;
  std::size_t k = 40;  // local neighborhood size
  ModelKind model_kind = ModelKind::softmax;
  double threshold = 0.05;  // p_epsilon
  double nb_alpha = 1.0;
  double nb_beta = 1.0;
  /// Ridge for covariance-based metrics; unset means 1e-6 * trace/d.
  std::optional<double> ridge;
  NcaOptions nca;

  void validate() const {
    if (scope == Scope::local && k < 1) fail("detector config: local k must be >= 1");
    if (!(threshold > 0.0 && threshold < 1.0))
      fail("detector config: threshold %g outside (0,1)", threshold);
    if (ridge && *ridge < 0.0) fail("detector config: ridge %g is negative", *ridge);
  }

  /// Whether scoring under this config reads the metric at all. A global
  /// Naive Bayes detector treats every case the same way, so the metric is
  /// irrelevant there.
  bool uses_metric() const {
    return model_kind == ModelKind::softmax || scope == Scope::local;
  }
};

/// Absolute threshold test: anomalous iff the posterior falls strictly below
/// p_epsilon.
inline bool flag(double posterior, double p_epsilon) {
  if (!(posterior >= 0.0 && posterior <= 1.0)) fail("flag: posterior %g outside [0,1]", posterior);
  if (!(p_epsilon >= 0.0 && p_epsilon <= 1.0)) fail("flag: threshold %g outside [0,1]", p_epsilon);
  return posterior < p_epsilon;
}

/// Posterior probability of the case's observed target value plus the
/// threshold call.
struct AnomalyScore {
  std::string case_id;
  double posterior = 0.0;
  bool is_anomaly = false;
  DetectorConfig config;
};

/// Fit the metric a config asks for on a reference database (class labels are
/// the target values). Euclidean needs no fitting and configs that never read
/// the metric get the identity.
inline GeneralizedMetric fit_config_metric(const DetectorConfig& config,
                                           const Dataset& database) {
  const Eigen::Index dc = static_cast<Eigen::Index>(database.schema().context_size());
  if (!config.uses_metric() || config.metric_kind == MetricKind::euclidean)
    return GeneralizedMetric::identity(dc);
  const Eigen::MatrixXd contexts = database.context_matrix();
  switch (config.metric_kind) {
    case MetricKind::mahalanobis: {
      const double ridge =
          config.ridge ? *config.ridge : default_ridge(detail::population_covariance(contexts));
      return fit_mahalanobis(contexts, ridge);
    }
    case MetricKind::rca: {
      const double ridge =
          config.ridge ? *config.ridge : default_ridge(detail::population_covariance(contexts));
      return fit_rca(contexts, database.labels(), ridge);
    }
    case MetricKind::nca:
      return fit_nca(contexts, database.labels(), config.nca);
    default:
      return GeneralizedMetric::identity(dc);
  }
}

/// Score one case against a database that must not contain it: build the
/// instance-specific model the config describes, evaluate the probability of
/// the case's observed target value, and apply the threshold test.
inline AnomalyScore score_case(const std::string& case_id, const Instance& instance,
                               const Dataset& database, const DetectorConfig& config,
                               const GeneralizedMetric& metric) {
  config.validate();
  if (database.size() == 0) fail("score_case: empty database");
  if (database.contains(case_id))
    fail("score_case: case '%s' is still present in the database (leave-one-out violation)",
         case_id.c_str());

  const Projection query = project(instance, database.schema());
  Eigen::MatrixXd contexts = database.context_matrix();
  Eigen::VectorXd targets = database.target_vector();

  if (config.scope == Scope::local) {
    const NeighborSet neighbors = select_neighbors(metric, query.context, database, config.k);
    // Database order, so a neighborhood covering everything reproduces the
    // global sums bit for bit.
    std::vector<std::size_t> rows = neighbors.indices;
    std::sort(rows.begin(), rows.end());
    Eigen::MatrixXd local_contexts(static_cast<Eigen::Index>(rows.size()), contexts.cols());
    Eigen::VectorXd local_targets(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      local_contexts.row(static_cast<Eigen::Index>(i)) =
          contexts.row(static_cast<Eigen::Index>(rows[i]));
      local_targets[static_cast<Eigen::Index>(i)] =
          targets[static_cast<Eigen::Index>(rows[i])];
    }
    contexts = std::move(local_contexts);
    targets = std::move(local_targets);
  }

  BinaryDistribution predicted;
  if (config.model_kind == ModelKind::softmax) {
    predicted = softmax_predict(SoftmaxPredictor{contexts, targets, metric}, query.context);
  } else {
    const NaiveBayesModel model = nb_fit(contexts, targets, config.nb_alpha, config.nb_beta);
    predicted = nb_predict(model, query.context);
  }

  AnomalyScore score;
  score.case_id = case_id;
  score.posterior = predicted.probability_of(query.target);
  score.is_anomaly = flag(score.posterior, config.threshold);
  score.config = config;
  return score;
}

}  // namespace conad
