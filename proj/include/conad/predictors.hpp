#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "conad/common.hpp"
#include "conad/dataset.hpp"
#include "conad/metric.hpp"

namespace conad {

/// Distribution over the binary target value.
struct BinaryDistribution {
  double p0 = 0.5;
  double p1 = 0.5;

  double probability_of(double value) const {
    if (value != 0.0 && value != 1.0) fail("probability_of: target value %g is not binary", value);
    return value == 1.0 ? p1 : p0;
  }
};

/// Result of a k-nearest query: case indices with their squared distances,
/// sorted ascending. Ties with the k-th distance are always included whole,
/// so the set may be larger than k.
struct NeighborSet {
  std::vector<std::size_t> indices;
  std::vector<double> distances_sq;

  std::size_t size() const { return indices.size(); }
};

/// Absolute tolerance for treating squared distances as tied. Binary data
/// under a fixed metric produces exactly equal distances; this only absorbs
/// floating-point noise.
inline constexpr double kNeighborTieTolerance = 1e-12;

/// The k cases of `reference` closest to `query_context`, expanded to include
/// every case tied with the k-th nearest.
inline NeighborSet select_neighbors(const GeneralizedMetric& metric,
                                    const Eigen::VectorXd& query_context,
                                    const Dataset& reference, std::size_t k) {
  if (reference.size() == 0) fail("select_neighbors: empty reference set");
  if (k < 1) fail("select_neighbors: k must be >= 1");

  const Eigen::VectorXd dists = distances_sq(metric, reference.context_matrix(), query_context);
  std::vector<std::size_t> order(reference.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double da = dists[static_cast<Eigen::Index>(a)];
    const double db = dists[static_cast<Eigen::Index>(b)];
    return da != db ? da < db : a < b;
  });

  const std::size_t base = std::min(k, order.size());
  const double cutoff = dists[static_cast<Eigen::Index>(order[base - 1])] + kNeighborTieTolerance;
  NeighborSet out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const double d = dists[static_cast<Eigen::Index>(order[i])];
    if (i >= base && d > cutoff) break;
    out.indices.push_back(order[i]);
    out.distances_sq.push_back(d);
  }
  return out;
}

/// Soft nearest-neighbor predictor: each reference case contributes to the
/// target distribution with weight proportional to exp(-squared distance)
/// under the metric.
struct SoftmaxPredictor {
  Eigen::MatrixXd reference_contexts;  // n x d_c
  Eigen::VectorXd reference_targets;   // 0/1 per row
  GeneralizedMetric metric;
};

inline BinaryDistribution softmax_predict(const SoftmaxPredictor& predictor,
                                          const Eigen::VectorXd& query_context) {
  const Eigen::Index n = predictor.reference_contexts.rows();
  if (n == 0) fail("softmax_predict: empty reference set");
  if (predictor.reference_targets.size() != n)
    fail("softmax_predict: %ld targets for %ld references",
         static_cast<long>(predictor.reference_targets.size()), static_cast<long>(n));

  Eigen::VectorXd dists = distances_sq(predictor.metric, predictor.reference_contexts,
                                       query_context);
  dists.array() -= dists.minCoeff();  // max-shift in weight space
  const Eigen::ArrayXd weights = (-dists).array().exp();
  const double mass1 = (weights * predictor.reference_targets.array()).sum();
  const double mass0 = (weights * (1.0 - predictor.reference_targets.array())).sum();
  const double total = mass0 + mass1;
  return BinaryDistribution{mass0 / total, mass1 / total};
}

/// Naive Bayes over binary context features with Beta(alpha, beta) conjugate
/// priors on the class prior and on every per-class feature probability.
/// Fitting reduces to count updates; prediction uses the posterior-mean
/// parameters, evaluated in log space.
class NaiveBayesModel {
 public:
  NaiveBayesModel(Eigen::Index context_dim, double alpha, double beta)
      : alpha_(alpha),
        beta_(beta),
        class_count_{0.0, 0.0},
        feature_count_{Eigen::VectorXd::Zero(context_dim), Eigen::VectorXd::Zero(context_dim)} {
    if (!(alpha > 0.0) || !(beta > 0.0))
      fail("naive bayes: hyperparameters must be positive (alpha=%g, beta=%g)", alpha, beta);
  }

  Eigen::Index context_dim() const { return feature_count_[0].size(); }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double class_count(int cls) const { return class_count_[check_class(cls)]; }
  const Eigen::VectorXd& feature_count(int cls) const {
    return feature_count_[check_class(cls)];
  }

  void add_case(const Eigen::VectorXd& context, double target) {
    check_context(context);
    const std::size_t cls = target == 1.0 ? 1 : 0;
    if (target != 0.0 && target != 1.0) fail("naive bayes: target %g is not binary", target);
    class_count_[cls] += 1.0;
    feature_count_[cls] += context;
  }

  void remove_case(const Eigen::VectorXd& context, double target) {
    check_context(context);
    const std::size_t cls = target == 1.0 ? 1 : 0;
    if (target != 0.0 && target != 1.0) fail("naive bayes: target %g is not binary", target);
    class_count_[cls] -= 1.0;
    feature_count_[cls] -= context;
  }

  /// Posterior mean of the class prior, p(target = 1).
  double prior_mean_p1() const {
    return (class_count_[1] + alpha_) / (class_count_[0] + class_count_[1] + alpha_ + beta_);
  }

  bool operator==(const NaiveBayesModel& other) const {
    return alpha_ == other.alpha_ && beta_ == other.beta_ &&
           class_count_[0] == other.class_count_[0] &&
           class_count_[1] == other.class_count_[1] &&
           feature_count_[0] == other.feature_count_[0] &&
           feature_count_[1] == other.feature_count_[1];
  }

 private:
  static std::size_t check_class(int cls) {
    if (cls != 0 && cls != 1) fail("naive bayes: class %d is not binary", cls);
    return static_cast<std::size_t>(cls);
  }

  void check_context(const Eigen::VectorXd& context) const {
    if (context.size() != context_dim())
      fail("naive bayes: context length %ld does not match model dimension %ld",
           static_cast<long>(context.size()), static_cast<long>(context_dim()));
  }

  double alpha_;
  double beta_;
  double class_count_[2];
  Eigen::VectorXd feature_count_[2];

  friend BinaryDistribution nb_predict(const NaiveBayesModel&, const Eigen::VectorXd&);
};

/// Tally sufficient statistics from (context, target) rows. An empty training
/// set yields the prior-only model. Order-independent.
inline NaiveBayesModel nb_fit(const Eigen::MatrixXd& contexts, const Eigen::VectorXd& targets,
                              double alpha = 1.0, double beta = 1.0) {
  if (contexts.rows() != targets.size())
    fail("nb_fit: %ld targets for %ld rows", static_cast<long>(targets.size()),
         static_cast<long>(contexts.rows()));
  NaiveBayesModel model(contexts.cols(), alpha, beta);
  for (Eigen::Index i = 0; i < contexts.rows(); ++i)
    model.add_case(contexts.row(i).transpose(), targets[i]);
  return model;
}

inline NaiveBayesModel nb_fit(const Dataset& cases, double alpha = 1.0, double beta = 1.0) {
  return nb_fit(cases.context_matrix(), cases.target_vector(), alpha, beta);
}

/// p(target | context) from posterior-mean parameters:
/// p(a | c) proportional to p(a) * prod_f p(c_f | a), evaluated in log space.
inline BinaryDistribution nb_predict(const NaiveBayesModel& model,
                                     const Eigen::VectorXd& query_context) {
  if (query_context.size() != model.context_dim())
    fail("nb_predict: context length %ld does not match model dimension %ld",
         static_cast<long>(query_context.size()), static_cast<long>(model.context_dim()));

  double log_mass[2];
  const double n = model.class_count_[0] + model.class_count_[1];
  for (int cls : {0, 1}) {
    const std::size_t c = static_cast<std::size_t>(cls);
    const double n_c = model.class_count_[c];
    double lm = std::log((n_c + (cls == 1 ? model.alpha_ : model.beta_)) /
                         (n + model.alpha_ + model.beta_));
    const double denom = n_c + model.alpha_ + model.beta_;
    for (Eigen::Index f = 0; f < model.context_dim(); ++f) {
      const double v = query_context[f];
      if (v != 0.0 && v != 1.0) fail("nb_predict: context value %g is not binary", v);
      const double count1 = model.feature_count_[c][f];
      const double p1 = (count1 + model.alpha_) / denom;
      const double p0 = (n_c - count1 + model.beta_) / denom;
      lm += std::log(v == 1.0 ? p1 : p0);
    }
    log_mass[cls] = lm;
  }
  const double shift = std::max(log_mass[0], log_mass[1]);
  const double m0 = std::exp(log_mass[0] - shift);
  const double m1 = std::exp(log_mass[1] - shift);
  return BinaryDistribution{m0 / (m0 + m1), m1 / (m0 + m1)};
}

}  // namespace conad
