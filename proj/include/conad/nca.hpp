#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "conad/common.hpp"
#include "conad/metric.hpp"

namespace conad {

/// Optimizer settings for fit_nca. The objective fixes no hyperparameters of
/// its own, so these control the gradient-ascent schedule only.
struct NcaOptions {
  int max_iterations = 200;
  /// Stop when an accepted iteration improves the objective by less than this
  /// (absolute).
  double tolerance = 1e-6;
  /// Starting transform; empty means identity.
  Eigen::MatrixXd initial;
  /// Frobenius norm of the first trial displacement step*gradient.
  double initial_step = 0.25;
  double step_growth = 2.0;
  double step_shrink = 0.5;
  /// Give up when the trial displacement norm falls below this.
  double min_step = 1e-14;
  /// Optional L2 penalty on the transform, for degenerate data where the
  /// objective is unbounded along some direction. Zero keeps the pure
  /// objective.
  double epsilon_reg = 0.0;
};

struct NcaFitInfo {
  std::vector<double> objective_trace;  // accepted iterates, starting value first
  int iterations = 0;
  bool converged = false;
};

namespace detail {

/// Identical (row, label) pairs collapsed to one representative with a
/// multiplicity. The soft-neighbor sums over cases factor exactly through
/// groups, which turns the n^2 pair work into U^2 for U distinct rows --
/// a large saving on binary data.
struct NcaGroups {
  Eigen::MatrixXd rows;        // U x d distinct representatives
  Eigen::VectorXd counts;      // multiplicity per group
  Eigen::VectorXd class1;      // 1.0 where the group's label is 1
  double total = 0.0;          // n

  static NcaGroups build(const Eigen::MatrixXd& points, const std::vector<int>& labels) {
    const Eigen::Index n = points.rows();
    const Eigen::Index d = points.cols();
    std::unordered_map<std::string, Eigen::Index> index;
    std::vector<Eigen::Index> order;
    std::vector<double> counts;
    std::vector<int> group_label;
    std::string key(static_cast<std::size_t>(d) * sizeof(double) + 1, '\0');
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index c = 0; c < d; ++c)
        std::memcpy(key.data() + static_cast<std::size_t>(c) * sizeof(double), &points(i, c),
                    sizeof(double));
      key.back() = static_cast<char>(labels[static_cast<std::size_t>(i)]);
      const auto [it, inserted] = index.emplace(key, static_cast<Eigen::Index>(counts.size()));
      if (inserted) {
        order.push_back(i);
        counts.push_back(1.0);
        group_label.push_back(labels[static_cast<std::size_t>(i)]);
      } else {
        counts[static_cast<std::size_t>(it->second)] += 1.0;
      }
    }
    NcaGroups g;
    const Eigen::Index u = static_cast<Eigen::Index>(counts.size());
    g.rows.resize(u, d);
    g.counts.resize(u);
    g.class1.resize(u);
    for (Eigen::Index k = 0; k < u; ++k) {
      g.rows.row(k) = points.row(order[static_cast<std::size_t>(k)]);
      g.counts[k] = counts[static_cast<std::size_t>(k)];
      g.class1[k] = group_label[static_cast<std::size_t>(k)] == 1 ? 1.0 : 0.0;
    }
    g.total = static_cast<double>(n);
    return g;
  }

  bool both_classes_present() const {
    const double ones = (counts.array() * class1.array()).sum();
    return ones > 0.0 && ones < total;
  }
};

/// Reusable buffers for the per-iteration group computations.
struct NcaWorkspace {
  Eigen::MatrixXd projected;   // U x d
  Eigen::MatrixXd weights;     // U x U, distances then selection weights
  Eigen::MatrixXd pair_coeff;  // U x U, gradient pair coefficients
  Eigen::VectorXd sq_norms, shifts, denom, same_mass, p_same;
};

/// Soft-neighbor statistics at transform A. Fills ws.weights with the
/// unnormalized selection weights exp(shift_u - dist_uv) (zero diagonal) and
/// the per-group vectors; returns the objective sum_i p_i.
inline double nca_forward(const Eigen::MatrixXd& transform, const NcaGroups& g,
                          NcaWorkspace& ws) {
  const Eigen::Index u = g.rows.rows();
  ws.projected.noalias() = g.rows * transform.transpose();
  ws.sq_norms = ws.projected.rowwise().squaredNorm();

  // Squared pair distances; diagonal parked at +inf so row minima and the
  // exp() below skip the self pair.
  ws.weights.noalias() = ws.projected * ws.projected.transpose();
  ws.weights *= -2.0;
  ws.weights.colwise() += ws.sq_norms;
  ws.weights.rowwise() += ws.sq_norms.transpose();
  ws.weights = ws.weights.cwiseMax(0.0);
  ws.weights.diagonal().setConstant(std::numeric_limits<double>::infinity());

  // Numerical shift per row: a group with duplicates has same-row neighbors
  // at distance zero, otherwise shift by the nearest other row.
  ws.shifts = ws.weights.rowwise().minCoeff();
  for (Eigen::Index i = 0; i < u; ++i)
    if (g.counts[i] > 1.0) ws.shifts[i] = 0.0;

  ws.weights.colwise() -= ws.shifts;
  ws.weights = (-ws.weights).array().exp();
  // Vectorized exp may clamp -inf instead of returning 0; the self pair must
  // carry no weight.
  ws.weights.diagonal().setZero();

  ws.denom.noalias() = ws.weights * g.counts;
  const Eigen::VectorXd class1_mass =
      ws.weights * (g.counts.array() * g.class1.array()).matrix();
  const Eigen::VectorXd class0_mass =
      ws.weights * (g.counts.array() * (1.0 - g.class1.array())).matrix();
  ws.same_mass.resize(u);
  for (Eigen::Index i = 0; i < u; ++i)
    ws.same_mass[i] = g.class1[i] == 1.0 ? class1_mass[i] : class0_mass[i];
  // Duplicates of the row itself are same-class neighbors at distance zero.
  for (Eigen::Index i = 0; i < u; ++i) {
    if (g.counts[i] > 1.0) {
      ws.denom[i] += g.counts[i] - 1.0;
      ws.same_mass[i] += g.counts[i] - 1.0;
    }
  }
  ws.p_same = ws.same_mass.array() / ws.denom.array();
  return (g.counts.array() * ws.p_same.array()).sum();
}

/// Gradient of the objective at the transform used for the last nca_forward
/// call (consumes ws.weights).
inline Eigen::MatrixXd nca_backward(const Eigen::MatrixXd& transform, const NcaGroups& g,
                                    NcaWorkspace& ws) {
  const Eigen::Index u = g.rows.rows();
  // Pair coefficient: cases in group i weight the pair (i,j), j != i, by
  // count_i * count_j * q_ij * (p_i - [same class]) with q_ij the selection
  // probability of one member of group j.
  ws.pair_coeff.resize(u, u);
  for (Eigen::Index i = 0; i < u; ++i) {
    const double scale = g.counts[i] / ws.denom[i];
    const double p_i = ws.p_same[i];
    if (g.class1[i] == 1.0) {
      ws.pair_coeff.row(i).array() = ws.weights.row(i).array() *
                                     g.counts.transpose().array() *
                                     (p_i - g.class1.transpose().array()) * scale;
    } else {
      ws.pair_coeff.row(i).array() = ws.weights.row(i).array() *
                                     g.counts.transpose().array() *
                                     (p_i - (1.0 - g.class1.transpose().array())) * scale;
    }
  }
  // sum_ij W_ij (z_i - z_j)(z_i - z_j)^T  ==  Z^T (diag(r) - W - W^T) Z
  // with r the row sums of W + W^T.
  const Eigen::VectorXd row_sums =
      ws.pair_coeff.rowwise().sum() + ws.pair_coeff.colwise().sum().transpose();
  ws.projected.noalias() = ws.pair_coeff * g.rows;  // reuse as U x d scratch
  Eigen::MatrixXd cross = g.rows.transpose() * ws.projected;
  Eigen::MatrixXd quad = g.rows.transpose() * (row_sums.asDiagonal() * g.rows);
  quad -= cross + cross.transpose();
  return 2.0 * transform * quad;
}

inline void check_binary_labels(const std::vector<int>& labels, const char* what) {
  for (int label : labels)
    if (label != 0 && label != 1) fail("%s: class label %d is not binary", what, label);
}

inline void check_nca_inputs(const Eigen::MatrixXd& transform, const Eigen::MatrixXd& points,
                             const std::vector<int>& labels, const char* what) {
  if (points.rows() < 2) fail("%s: need at least 2 cases, got %ld", what,
                              static_cast<long>(points.rows()));
  if (static_cast<Eigen::Index>(labels.size()) != points.rows())
    fail("%s: %zu labels for %ld rows", what, labels.size(), static_cast<long>(points.rows()));
  check_binary_labels(labels, what);
  if (transform.rows() != transform.cols() || transform.cols() != points.cols())
    fail("%s: transform is %ldx%ld for %ld-dimensional points", what,
         static_cast<long>(transform.rows()), static_cast<long>(transform.cols()),
         static_cast<long>(points.cols()));
}

}  // namespace detail

/// Expected number of correctly classified cases under the soft-neighbor
/// rule: g(A) = sum_i sum_{j in C_i, j != i} p_ij, where p_ij is the softmax
/// over squared distances from case i in the transformed space. Lies in
/// [0, n].
inline double nca_objective(const Eigen::MatrixXd& transform, const Eigen::MatrixXd& points,
                            const std::vector<int>& labels) {
  detail::check_nca_inputs(transform, points, labels, "nca_objective");
  const auto groups = detail::NcaGroups::build(points, labels);
  detail::NcaWorkspace ws;
  return detail::nca_forward(transform, groups, ws);
}

/// dg/dA = 2A sum_i (p_i sum_k p_ik x_ik x_ik^T - sum_{j in C_i} p_ij x_ij x_ij^T)
/// with x_ij = x_i - x_j and p_i = sum_{j in C_i} p_ij.
inline Eigen::MatrixXd nca_gradient(const Eigen::MatrixXd& transform,
                                    const Eigen::MatrixXd& points,
                                    const std::vector<int>& labels) {
  detail::check_nca_inputs(transform, points, labels, "nca_gradient");
  const auto groups = detail::NcaGroups::build(points, labels);
  detail::NcaWorkspace ws;
  detail::nca_forward(transform, groups, ws);
  return detail::nca_backward(transform, groups, ws);
}

/// Learn a transform by full-batch gradient ascent on the objective, from the
/// identity (or opts.initial) with a backtracking line search: the step is
/// halved until the objective does not decrease. Degenerate inputs (fewer
/// than two cases, or a single class) return the initial transform unchanged.
inline GeneralizedMetric fit_nca(const Eigen::MatrixXd& points, const std::vector<int>& labels,
                                 const NcaOptions& opts = {}, NcaFitInfo* info = nullptr) {
  if (static_cast<Eigen::Index>(labels.size()) != points.rows())
    fail("fit_nca: %zu labels for %ld rows", labels.size(), static_cast<long>(points.rows()));
  detail::check_binary_labels(labels, "fit_nca");
  if (opts.max_iterations < 1) fail("fit_nca: max_iterations must be >= 1");
  if (opts.tolerance <= 0.0) fail("fit_nca: tolerance must be positive");

  Eigen::MatrixXd transform = opts.initial.size() > 0
                                  ? opts.initial
                                  : Eigen::MatrixXd::Identity(points.cols(), points.cols());
  if (transform.rows() != points.cols() || transform.cols() != points.cols())
    fail("fit_nca: initial transform is %ldx%ld for %ld-dimensional points",
         static_cast<long>(opts.initial.rows()), static_cast<long>(opts.initial.cols()),
         static_cast<long>(points.cols()));
  if (info) *info = NcaFitInfo{};

  const auto groups = detail::NcaGroups::build(points, labels);
  if (points.rows() < 2 || !groups.both_classes_present()) {
    if (info) info->converged = true;
    return GeneralizedMetric(std::move(transform));
  }

  detail::NcaWorkspace ws;
  const double reg = opts.epsilon_reg;
  auto regularized = [&](const Eigen::MatrixXd& a, double pure) {
    return reg == 0.0 ? pure : pure - reg * a.squaredNorm();
  };

  double objective = regularized(transform, detail::nca_forward(transform, groups, ws));
  if (info) info->objective_trace.push_back(objective);

  double step = 0.0;  // set from the first gradient
  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    if (info) info->iterations = iter;
    Eigen::MatrixXd gradient = detail::nca_backward(transform, groups, ws);
    if (reg != 0.0) gradient -= 2.0 * reg * transform;
    const double gradient_norm = gradient.norm();
    if (gradient_norm == 0.0) {
      if (info) {
        info->objective_trace.push_back(objective);
        info->converged = true;
      }
      break;
    }
    if (step == 0.0) step = opts.initial_step / gradient_norm;

    bool accepted = false;
    bool first_trial = true;
    while (step * gradient_norm >= opts.min_step) {
      const Eigen::MatrixXd trial = transform + step * gradient;
      const double trial_objective = regularized(trial, detail::nca_forward(trial, groups, ws));
      if (trial_objective >= objective) {
        const double improvement = trial_objective - objective;
        transform = trial;
        objective = trial_objective;
        if (info) info->objective_trace.push_back(objective);
        if (first_trial) step *= opts.step_growth;
        accepted = true;
        if (improvement < opts.tolerance) {
          if (info) info->converged = true;
          return GeneralizedMetric(std::move(transform));
        }
        break;
      }
      step *= opts.step_shrink;
      first_trial = false;
    }
    if (!accepted) {
      // No admissible uphill step left.
      if (info) info->converged = true;
      break;
    }
  }
  return GeneralizedMetric(std::move(transform));
}

}  // namespace conad
