#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "conad/common.hpp"
#include "conad/dataset.hpp"
#include "conad/detector.hpp"
#include "conad/rng.hpp"
#include "conad/synthetic.hpp"

namespace conad {

/// The evaluated cases and their ground-truth anomaly labels.
struct Cohort {
  std::vector<std::string> case_ids;
  std::vector<std::uint8_t> labels;  // 1 = anomalous
  std::vector<std::string> warnings;

  std::size_t size() const { return case_ids.size(); }
};

/// Assemble the evaluation cohort: up to `n_flagged` cases flagged by a plain
/// global Naive Bayes detector (leave-one-out, lowest posteriors first), the
/// rest drawn uniformly from the unflagged remainder. Labels come from the
/// generator's ground truth.
inline Cohort select_cohort(const Dataset& database, const GroundTruth& truth,
                            std::size_t n_flagged, std::size_t n_random, double p_epsilon,
                            std::uint64_t seed) {
  const std::size_t n = database.size();
  const std::size_t m = n_flagged + n_random;
  if (n < m) fail("select_cohort: database has %zu cases, cohort needs %zu", n, m);
  if (truth.size() != n)
    fail("select_cohort: ground truth covers %zu cases, database has %zu", truth.size(), n);
  for (std::size_t i = 0; i < n; ++i)
    if (truth.case_ids[i] != database.case_ids()[i])
      fail("select_cohort: ground truth id '%s' does not match database id '%s' at row %zu",
           truth.case_ids[i].c_str(), database.case_ids()[i].c_str(), i);

  DetectorConfig nb_config;
  nb_config.metric_kind = MetricKind::euclidean;
  nb_config.scope = Scope::global;
  nb_config.model_kind = ModelKind::naive_bayes;
  nb_config.threshold = p_epsilon;

  const GeneralizedMetric identity =
      GeneralizedMetric::identity(static_cast<Eigen::Index>(database.schema().context_size()));
  std::vector<std::pair<double, std::size_t>> flagged;  // (posterior, row)
  std::vector<std::size_t> unflagged;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& id = database.case_ids()[i];
    const AnomalyScore score =
        score_case(id, database.instance(i), database.without(id), nb_config, identity);
    if (score.is_anomaly)
      flagged.emplace_back(score.posterior, i);
    else
      unflagged.push_back(i);
  }
  std::sort(flagged.begin(), flagged.end());

  Cohort cohort;
  const std::size_t take = std::min(n_flagged, flagged.size());
  for (std::size_t i = 0; i < take; ++i) cohort.case_ids.push_back(database.case_ids()[flagged[i].second]);
  if (take < n_flagged)
    cohort.warnings.push_back(detail::strformat(
        "detector flagged only %zu of %zu requested cases; filling the cohort randomly",
        flagged.size(), n_flagged));

  const std::size_t fill = m - take;
  if (unflagged.size() < fill)
    fail("select_cohort: only %zu unflagged cases available, need %zu", unflagged.size(), fill);
  Rng rng(seed);
  for (std::size_t i = 0; i < fill; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.uniform_below(unflagged.size() - i));
    std::swap(unflagged[i], unflagged[j]);
    cohort.case_ids.push_back(database.case_ids()[unflagged[i]]);
  }

  cohort.labels.reserve(m);
  for (const auto& id : cohort.case_ids)
    cohort.labels.push_back(truth.anomaly_flags[database.index_of(id)]);
  return cohort;
}

struct ScoreRecord {
  std::string case_id;
  double posterior = 0.0;
  bool is_anomaly = false;
  bool label = false;
};

struct LooResult {
  DetectorConfig config;
  std::size_t n_reference = 0;  // database size - 1 for global, k for local
  std::vector<ScoreRecord> records;
};

struct RunLooOptions {
  /// Worker threads; 0 means hardware concurrency.
  unsigned jobs = 1;
  /// Refit metrics on the remaining database for every evaluated case. When
  /// false each metric is fitted once on the full database and reused.
  bool refit_per_case = true;
};

namespace detail {

/// Configs that share fitting hyperparameters share one fit per case.
inline std::string metric_signature(const DetectorConfig& c) {
  if (!c.uses_metric() || c.metric_kind == MetricKind::euclidean) return "identity";
  std::ostringstream key;
  key << to_string(c.metric_kind);
  if (c.metric_kind == MetricKind::nca) {
    key << ':' << c.nca.max_iterations << ':' << c.nca.tolerance << ':' << c.nca.initial_step
        << ':' << c.nca.step_growth << ':' << c.nca.step_shrink << ':' << c.nca.min_step << ':'
        << c.nca.epsilon_reg << ':' << c.nca.initial.rows();
  } else {
    key << ':' << (c.ridge ? *c.ridge : -1.0);
  }
  return key.str();
}

template <class Fn>
inline void parallel_for(std::size_t count, unsigned jobs, Fn&& body) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min<unsigned>(jobs, count == 0 ? 1 : static_cast<unsigned>(count));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(jobs);
  for (unsigned t = 0; t < jobs; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Leave-one-out scoring of the cohort over a configuration grid: for every
/// config and cohort case, the case is removed, the config's metric is fitted
/// on the remaining database, and the detector scores the held-out case.
/// Results are indexed by (config, case) so they do not depend on scheduling.
inline std::vector<LooResult> run_loo(const Dataset& database, const Cohort& cohort,
                                      const std::vector<DetectorConfig>& grid,
                                      const RunLooOptions& opts = {}) {
  if (grid.empty()) fail("run_loo: empty config grid");
  if (cohort.size() == 0) fail("run_loo: empty cohort");
  if (cohort.labels.size() != cohort.size()) fail("run_loo: cohort labels incomplete");
  for (const auto& config : grid) config.validate();
  for (const auto& id : cohort.case_ids)
    if (!database.contains(id)) fail("run_loo: cohort case '%s' not in database", id.c_str());

  std::vector<LooResult> results(grid.size());
  for (std::size_t c = 0; c < grid.size(); ++c) {
    results[c].config = grid[c];
    results[c].n_reference =
        grid[c].scope == Scope::global ? database.size() - 1 : grid[c].k;
    results[c].records.resize(cohort.size());
  }

  // Configs with equal fitting hyperparameters share one fit per case.
  std::vector<std::string> signatures(grid.size());
  std::map<std::string, std::size_t> fit_config;  // signature -> first config index
  for (std::size_t c = 0; c < grid.size(); ++c) {
    signatures[c] = detail::metric_signature(grid[c]);
    fit_config.emplace(signatures[c], c);
  }

  std::map<std::string, GeneralizedMetric> shared_fits;
  if (!opts.refit_per_case) {
    for (const auto& [signature, c] : fit_config)
      shared_fits.emplace(signature, fit_config_metric(grid[c], database));
  }

  detail::parallel_for(cohort.size(), opts.jobs, [&](std::size_t i) {
    const std::string& id = cohort.case_ids[i];
    const Instance held_out = database.instance(database.index_of(id));
    const Dataset remaining = database.without(id);
    std::map<std::string, GeneralizedMetric> fits;
    if (opts.refit_per_case) {
      for (const auto& [signature, c] : fit_config) {
        try {
          fits.emplace(signature, fit_config_metric(grid[c], remaining));
        } catch (const Error& e) {
          fail("run_loo: fitting %s metric for case '%s': %s",
               to_string(grid[c].metric_kind), id.c_str(), e.what());
        }
      }
    } else {
      fits = shared_fits;
    }
    for (std::size_t c = 0; c < grid.size(); ++c) {
      try {
        const AnomalyScore score =
            score_case(id, held_out, remaining, grid[c], fits.at(signatures[c]));
        results[c].records[i] =
            ScoreRecord{id, score.posterior, score.is_anomaly, cohort.labels[i] != 0};
      } catch (const Error& e) {
        fail("run_loo: config (%s, %s, %s), case '%s': %s", to_string(grid[c].metric_kind),
             to_string(grid[c].scope), to_string(grid[c].model_kind), id.c_str(), e.what());
      }
    }
  });
  return results;
}

/// ROC points (fpr, tpr) from sweeping the detection threshold over all
/// distinct posterior values, lower posterior meaning more anomalous. Tied
/// posteriors collapse to one point; endpoints (0,0) and (1,1) are included.
struct RocCurve {
  std::vector<std::pair<double, double>> points;
};

inline RocCurve roc_curve(const std::vector<std::pair<double, bool>>& scores) {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  for (const auto& [posterior, label] : scores) {
    (void)posterior;
    (label ? positives : negatives) += 1;
  }
  if (positives == 0 || negatives == 0)
    fail("roc_curve: need both anomalous and normal cases (%zu positive, %zu negative)",
         positives, negatives);

  std::vector<std::pair<double, bool>> sorted = scores;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  RocCurve curve;
  curve.points.emplace_back(0.0, 0.0);
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const double value = sorted[i].first;
    while (i < sorted.size() && sorted[i].first == value) {
      (sorted[i].second ? tp : fp) += 1;
      ++i;
    }
    const std::pair<double, double> point{static_cast<double>(fp) / static_cast<double>(negatives),
                                          static_cast<double>(tp) / static_cast<double>(positives)};
    if (point != curve.points.back()) curve.points.push_back(point);
  }
  if (curve.points.back() != std::pair<double, double>{1.0, 1.0})
    curve.points.emplace_back(1.0, 1.0);
  return curve;
}

/// Normalized partial area: trapezoidal TPR area over fpr in
/// [0, 1 - min_specificity], linearly interpolated at the right edge, divided
/// by the region width. Returned in percent; a random scorer gives about
/// half the width (2.5% at 95% specificity) and a perfect one 100%.
inline double partial_auc_norm(const RocCurve& curve, double min_specificity = 0.95) {
  if (!(min_specificity >= 0.0 && min_specificity < 1.0))
    fail("partial_auc_norm: min_specificity %g outside [0,1)", min_specificity);
  if (curve.points.size() < 2) fail("partial_auc_norm: curve has fewer than 2 points");
  const double fpr_max = 1.0 - min_specificity;

  double area = 0.0;
  for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
    const auto [f1, t1] = curve.points[i];
    const auto [f2, t2] = curve.points[i + 1];
    if (f2 <= fpr_max) {
      area += (f2 - f1) * (t1 + t2) / 2.0;
    } else if (f1 < fpr_max) {
      const double t_edge = t1 + (t2 - t1) * (fpr_max - f1) / (f2 - f1);
      area += (fpr_max - f1) * (t1 + t_edge) / 2.0;
      break;
    } else {
      break;
    }
  }
  return 100.0 * area / fpr_max;
}

/// One row of the Table-1 style report.
struct EvalReportRow {
  ModelKind model = ModelKind::softmax;
  std::string metric;  // metric kind name, or "any" for the collapsed row
  Scope scope = Scope::global;
  std::size_t n_reference = 0;
  double pauc_percent = 0.0;
};

struct EvalReport {
  std::vector<EvalReportRow> rows;

  std::string to_text() const {
    std::string out = detail::strformat("%-9s %-10s %-13s %8s %8s\n", "model", "selection",
                                        "metric", "#cases", "area");
    for (const auto& row : rows)
      out += detail::strformat("%-9s %-10s %-13s %8zu %6.1f %%\n", to_string(row.model),
                               to_string(row.scope), row.metric.c_str(), row.n_reference,
                               row.pauc_percent);
    return out;
  }

  std::string to_csv() const {
    std::string out = "model_kind,metric_kind,scope,n_reference_cases,pauc_percent\n";
    for (const auto& row : rows)
      out += detail::strformat("%s,%s,%s,%zu,%s\n", to_string(row.model), row.metric.c_str(),
                               to_string(row.scope), row.n_reference,
                               format_g17(row.pauc_percent).c_str());
    return out;
  }
};

/// Collapse per-config score lists into the report grid. Global Naive Bayes
/// rows are metric-independent and merge into a single "any" row.
inline EvalReport emit_report(const std::vector<LooResult>& results) {
  if (results.empty()) fail("emit_report: no results");

  auto pauc_of = [](const LooResult& result) {
    std::vector<std::pair<double, bool>> scores;
    scores.reserve(result.records.size());
    for (const auto& r : result.records) scores.emplace_back(r.posterior, r.label);
    return partial_auc_norm(roc_curve(scores));
  };

  const MetricKind metric_order[] = {MetricKind::nca, MetricKind::mahalanobis, MetricKind::rca,
                                     MetricKind::euclidean};
  EvalReport report;
  std::vector<bool> used(results.size(), false);
  auto block = [&](ModelKind model, Scope scope) {
    bool collapsed_emitted = false;
    for (MetricKind metric : metric_order) {
      for (std::size_t i = 0; i < results.size(); ++i) {
        const DetectorConfig& c = results[i].config;
        if (used[i] || c.model_kind != model || c.scope != scope || c.metric_kind != metric)
          continue;
        used[i] = true;
        const bool collapse = model == ModelKind::naive_bayes && scope == Scope::global;
        if (collapse && collapsed_emitted) continue;
        EvalReportRow row;
        row.model = model;
        row.metric = collapse ? "any" : to_string(metric);
        row.scope = scope;
        row.n_reference = results[i].n_reference;
        row.pauc_percent = pauc_of(results[i]);
        report.rows.push_back(row);
        collapsed_emitted = collapse;
      }
    }
  };
  block(ModelKind::softmax, Scope::global);
  block(ModelKind::softmax, Scope::local);
  block(ModelKind::naive_bayes, Scope::global);
  block(ModelKind::naive_bayes, Scope::local);
  return report;
}

/// The full audit grid: every metric crossed with both models and both
/// scopes (16 configs). The grid's NCA settings differ from the bare fit_nca
/// defaults: ascent is damped (epsilon_reg) and the budget bounded, since an
/// undamped full-batch fit drifts toward a hard nearest-neighbor metric that
/// starves the softmax predictor, and per-case refits have to stay within
/// desktop minutes. Pass NcaOptions to override.
inline std::vector<DetectorConfig> table1_grid(std::size_t k = 40, double threshold = 0.05,
                                               const NcaOptions* nca = nullptr) {
  NcaOptions default_nca;
  default_nca.max_iterations = 45;
  default_nca.epsilon_reg = 1.5;
  default_nca.initial_step = 0.1;
  default_nca.step_growth = 1.3;
  if (nca) default_nca = *nca;
  std::vector<DetectorConfig> grid;
  for (ModelKind model : {ModelKind::softmax, ModelKind::naive_bayes}) {
    for (Scope scope : {Scope::global, Scope::local}) {
      for (MetricKind metric : {MetricKind::nca, MetricKind::mahalanobis, MetricKind::rca,
                                MetricKind::euclidean}) {
        DetectorConfig config;
        config.metric_kind = metric;
        config.scope = scope;
        config.k = k;
        config.model_kind = model;
        config.threshold = threshold;
        config.nca = default_nca;
        grid.push_back(config);
      }
    }
  }
  return grid;
}

}  // namespace conad
