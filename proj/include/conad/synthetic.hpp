#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "conad/common.hpp"
#include "conad/dataset.hpp"
#include "conad/rng.hpp"

namespace conad {

/// Pneumonia-admission style schema: 19 binary context attributes plus one
/// binary admission target, target in the last column.
inline AttributeSchema port_schema() {
  std::vector<std::string> names = {
      "age_over_50",
      "male_gender",
      "congestive_heart_failure",
      "cerebrovascular_disease",
      "neoplastic_disease",
      "renal_disease",
      "liver_disease",
      "altered_mental_status",
      "pulse_ge_125",
      "respiratory_rate_ge_30",
      "systolic_bp_lt_90",
      "temperature_extreme",
      "blood_urea_nitrogen_ge_30",
      "glucose_ge_250",
      "hematocrit_lt_30",
      "sodium_lt_130",
      "arterial_po2_lt_60",
      "arterial_ph_lt_7_35",
      "pleural_effusion",
      "hospitalization",
  };
  return AttributeSchema(std::move(names), 19);
}

/// Child attribute sampled conditionally on a single earlier parent.
/// Keeps parent < child so one left-to-right pass generates a row.
struct DependencyRule {
  std::size_t parent = 0;
  std::size_t child = 0;
  double p_given_parent1 = 0.5;
  double p_given_parent0 = 0.5;
};

/// Generator coefficients for PORT-shaped synthetic data.
///
/// The default coefficients are arbitrary-but-fixed values chosen so that
/// context features correlate and differ in relevance; they make no claim of
/// matching any clinical distribution.
struct SyntheticConfig {
  std::size_t n_cases = 2300;
  double anomaly_rate = 0.1;  // fraction of cases whose target is flipped
  std::uint64_t seed = 0;

  std::vector<double> marginals;         // root marginal per context attribute
  std::vector<DependencyRule> dependencies;
  double logistic_bias = 0.0;
  std::vector<double> logistic_weights;  // per context attribute

  static SyntheticConfig defaults() {
    SyntheticConfig c;
    // Eight attributes drive the target; the rest are padding whose common,
    // partly duplicated bits dominate unweighted Hamming distances. The age
    // and heart-failure anchors each pull a block of children, so contexts
    // cluster and neighborhoods carry real structure.
    c.marginals = {0.50, 0.50, 0.20, 0.08, 0.12, 0.08, 0.30, 0.15, 0.10, 0.25,
                   0.12, 0.30, 0.20, 0.35, 0.40, 0.35, 0.09, 0.25, 0.18};
    // Child marginals above are used only when the attribute has no rule.
    c.dependencies = {
        {0, 3, 0.28, 0.06},    // age -> cerebrovascular disease
        {0, 11, 0.48, 0.14},   // age -> temperature extreme
        {0, 14, 0.58, 0.22},   // age -> low hematocrit
        {0, 17, 0.42, 0.10},   // age -> acidosis
        {2, 5, 0.40, 0.06},    // heart failure -> renal disease
        {2, 8, 0.42, 0.10},    // heart failure -> elevated pulse
        {2, 12, 0.55, 0.12},   // heart failure -> elevated blood urea nitrogen
        {4, 18, 0.45, 0.18},   // neoplastic disease -> pleural effusion
        {9, 16, 0.52, 0.08},   // elevated respiratory rate -> low PaO2
    };
    c.logistic_bias = -4.6;
    c.logistic_weights = std::vector<double>(19, 0.0);
    c.logistic_weights[0] = 1.6;    // age_over_50
    c.logistic_weights[2] = 2.4;    // congestive_heart_failure
    c.logistic_weights[4] = 2.0;    // neoplastic_disease
    c.logistic_weights[7] = 2.6;    // altered_mental_status
    c.logistic_weights[9] = 2.6;    // respiratory_rate_ge_30
    c.logistic_weights[10] = 3.0;   // systolic_bp_lt_90
    c.logistic_weights[12] = 2.0;   // blood_urea_nitrogen_ge_30
    c.logistic_weights[16] = 1.8;   // arterial_po2_lt_60
    return c;
  }

  std::size_t context_size() const { return marginals.size(); }

  void validate() const {
    if (n_cases == 0) fail("synthetic: n_cases must be positive");
    if (!(anomaly_rate >= 0.0 && anomaly_rate < 0.5))
      fail("synthetic: anomaly_rate %g outside [0, 0.5)", anomaly_rate);
    if (marginals.empty()) fail("synthetic: no context marginals configured");
    for (std::size_t i = 0; i < marginals.size(); ++i)
      if (!(marginals[i] > 0.0 && marginals[i] < 1.0))
        fail("synthetic: marginal %g for attribute %zu outside (0,1)", marginals[i], i);
    if (logistic_weights.size() != marginals.size())
      fail("synthetic: %zu logistic weights for %zu context attributes",
           logistic_weights.size(), marginals.size());
    std::vector<bool> is_child(marginals.size(), false);
    for (const auto& dep : dependencies) {
      if (dep.parent >= marginals.size() || dep.child >= marginals.size())
        fail("synthetic: dependency indices (%zu -> %zu) out of range", dep.parent, dep.child);
      if (dep.parent >= dep.child)
        fail("synthetic: dependency parent %zu must precede child %zu", dep.parent, dep.child);
      if (is_child[dep.child]) fail("synthetic: attribute %zu has two dependency rules", dep.child);
      is_child[dep.child] = true;
      if (!(dep.p_given_parent1 > 0.0 && dep.p_given_parent1 < 1.0) ||
          !(dep.p_given_parent0 > 0.0 && dep.p_given_parent0 < 1.0))
        fail("synthetic: dependency probabilities for attribute %zu outside (0,1)", dep.child);
    }
    for (const auto& dep : dependencies)
      if (is_child[dep.parent])
        fail("synthetic: attribute %zu is both parent and child (two-level rules only)",
             dep.parent);
  }
};

/// Per-case generation record: whether the stored target was flipped, and the
/// generator's conditional probability of target=1 (unchanged by the flip).
struct GroundTruth {
  std::vector<std::string> case_ids;
  std::vector<std::uint8_t> anomaly_flags;
  std::vector<double> true_conditional;

  std::size_t size() const { return case_ids.size(); }

  std::size_t flag_count() const {
    return static_cast<std::size_t>(
        std::accumulate(anomaly_flags.begin(), anomaly_flags.end(), std::size_t{0}));
  }
};

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace detail

/// Sample a PORT-shaped dataset with planted anomalies.
///
/// Context bits are drawn left to right (dependency children conditionally on
/// their parent), the target from a logistic model on the context, and then
/// exactly round(anomaly_rate * n) cases get their target flipped. Output is
/// a pure function of the config, including its seed.
inline std::pair<Dataset, GroundTruth> generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  const std::size_t n = config.n_cases;
  const std::size_t dc = config.context_size();
  if (dc != 19)
    fail("synthetic: PORT-shaped generator expects 19 context attributes, got %zu", dc);

  std::vector<const DependencyRule*> rule_for(dc, nullptr);
  for (const auto& dep : config.dependencies) rule_for[dep.child] = &dep;

  Rng rng(config.seed);
  Dataset::CellMatrix cells(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dc) + 1);
  GroundTruth truth;
  truth.case_ids.resize(n);
  truth.anomaly_flags.assign(n, 0);
  truth.true_conditional.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Index row = static_cast<Eigen::Index>(i);
    double z = config.logistic_bias;
    for (std::size_t a = 0; a < dc; ++a) {
      double p = config.marginals[a];
      if (const DependencyRule* dep = rule_for[a])
        p = cells(row, static_cast<Eigen::Index>(dep->parent)) ? dep->p_given_parent1
                                                               : dep->p_given_parent0;
      const std::uint8_t bit = rng.bernoulli(p) ? 1 : 0;
      cells(row, static_cast<Eigen::Index>(a)) = bit;
      if (bit) z += config.logistic_weights[a];
    }
    const double p_star = detail::sigmoid(z);
    truth.true_conditional[i] = p_star;
    cells(row, static_cast<Eigen::Index>(dc)) = rng.bernoulli(p_star) ? 1 : 0;
    truth.case_ids[i] = detail::strformat("c%06zu", i + 1);
  }

  // Plant anomalies: flip the sampled target of exactly round(rate*n) cases,
  // chosen uniformly without replacement (partial Fisher-Yates).
  const std::size_t n_flips =
      static_cast<std::size_t>(std::llround(config.anomaly_rate * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < n_flips; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(n - i));
    std::swap(order[i], order[j]);
    const Eigen::Index row = static_cast<Eigen::Index>(order[i]);
    const Eigen::Index t = static_cast<Eigen::Index>(dc);
    cells(row, t) = cells(row, t) ? 0 : 1;
    truth.anomaly_flags[order[i]] = 1;
  }

  Dataset dataset(port_schema(), truth.case_ids, std::move(cells));
  return {std::move(dataset), std::move(truth)};
}

inline void write_truth_csv(const GroundTruth& truth, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write ground-truth file '%s'", path.c_str());
  out << "id,is_anomaly,true_conditional\n";
  for (std::size_t i = 0; i < truth.size(); ++i)
    out << truth.case_ids[i] << ',' << static_cast<int>(truth.anomaly_flags[i]) << ','
        << format_g17(truth.true_conditional[i]) << '\n';
}

inline GroundTruth load_truth_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open ground-truth file '%s'", path.c_str());
  std::string line;
  if (!std::getline(in, line)) fail("%s: missing header row", path.c_str());
  const auto header = detail::split_csv_line(line);
  if (header.size() < 2 || header[0] != "id" || header[1] != "is_anomaly")
    fail("%s: expected header 'id,is_anomaly[,true_conditional]'", path.c_str());
  const bool has_conditional = header.size() > 2;

  GroundTruth truth;
  std::size_t rowno = 1;
  while (std::getline(in, line)) {
    ++rowno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      fail("%s:%zu: expected %zu cells, got %zu", path.c_str(), rowno, header.size(),
           cells.size());
    truth.case_ids.push_back(cells[0]);
    if (cells[1] != "0" && cells[1] != "1")
      fail("%s:%zu: non-binary anomaly flag '%s'", path.c_str(), rowno, cells[1].c_str());
    truth.anomaly_flags.push_back(cells[1] == "1" ? 1 : 0);
    truth.true_conditional.push_back(has_conditional ? std::stod(cells[2]) : 0.0);
  }
  return truth;
}

}  // namespace conad
