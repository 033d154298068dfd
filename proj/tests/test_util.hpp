#pragma once

// Shared helpers and independent oracles for the test suites. The oracles are
// deliberately written as plain loops, separate from the library's vectorized
// implementations.

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "conad/dataset.hpp"
#include "conad/metric.hpp"
#include "conad/schema.hpp"

namespace test_util {

/// Per-case soft-neighbor selection probabilities p_ij, computed the naive
/// way: softmax over squared distances from case i with a max-shift, p_ii = 0.
inline Eigen::MatrixXd nca_probabilities_oracle(const Eigen::MatrixXd& transform,
                                                const Eigen::MatrixXd& points) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd projected = points * transform.transpose();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd neg_dist(n);
    for (Eigen::Index j = 0; j < n; ++j)
      neg_dist[j] = -(projected.row(i) - projected.row(j)).squaredNorm();
    double shift = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) shift = std::max(shift, neg_dist[j]);
    double denom = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) denom += std::exp(neg_dist[j] - shift);
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) p(i, j) = std::exp(neg_dist[j] - shift) / denom;
  }
  return p;
}

/// g(A) = sum_i sum_{j in C_i, j != i} p_ij via the naive probability matrix.
inline double nca_objective_oracle(const Eigen::MatrixXd& transform,
                                   const Eigen::MatrixXd& points,
                                   const std::vector<int>& labels) {
  const Eigen::MatrixXd p = nca_probabilities_oracle(transform, points);
  double g = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      if (i != j && labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)])
        g += p(i, j);
  return g;
}

/// Central finite differences of the oracle objective, entry by entry.
inline Eigen::MatrixXd nca_gradient_fd_oracle(const Eigen::MatrixXd& transform,
                                              const Eigen::MatrixXd& points,
                                              const std::vector<int>& labels,
                                              double step = 1e-5) {
  Eigen::MatrixXd grad(transform.rows(), transform.cols());
  Eigen::MatrixXd probe = transform;
  for (Eigen::Index r = 0; r < transform.rows(); ++r) {
    for (Eigen::Index c = 0; c < transform.cols(); ++c) {
      const double saved = probe(r, c);
      probe(r, c) = saved + step;
      const double plus = nca_objective_oracle(probe, points, labels);
      probe(r, c) = saved - step;
      const double minus = nca_objective_oracle(probe, points, labels);
      probe(r, c) = saved;
      grad(r, c) = (plus - minus) / (2.0 * step);
    }
  }
  return grad;
}

/// Direct weight-sum softmax prediction: w_i = exp(-d^2), p(a) summed per
/// class and normalized (no shift; fine at test scale).
inline std::pair<double, double> softmax_oracle(const conad::GeneralizedMetric& metric,
                                                const Eigen::MatrixXd& contexts,
                                                const Eigen::VectorXd& targets,
                                                const Eigen::VectorXd& query) {
  double mass0 = 0.0;
  double mass1 = 0.0;
  for (Eigen::Index i = 0; i < contexts.rows(); ++i) {
    const double w =
        std::exp(-conad::distance_sq(metric, contexts.row(i).transpose(), query));
    (targets[i] == 1.0 ? mass1 : mass0) += w;
  }
  return {mass0 / (mass0 + mass1), mass1 / (mass0 + mass1)};
}

/// Random binary matrix with uniform cell balance.
inline Eigen::MatrixXd random_binary(std::mt19937_64& rng, Eigen::Index rows,
                                     Eigen::Index cols, double p_one = 0.5) {
  Eigen::MatrixXd m(rows, cols);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = unif(rng) < p_one ? 1.0 : 0.0;
  return m;
}

inline Eigen::MatrixXd random_gaussian(std::mt19937_64& rng, Eigen::Index rows,
                                       Eigen::Index cols, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  std::normal_distribution<double> normal(0.0, scale);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

inline std::vector<int> random_labels(std::mt19937_64& rng, std::size_t n) {
  std::vector<int> labels(n);
  std::uniform_int_distribution<int> coin(0, 1);
  for (auto& l : labels) l = coin(rng);
  return labels;
}

/// Random orthogonal matrix via QR of a Gaussian draw.
inline Eigen::MatrixXd random_rotation(std::mt19937_64& rng, Eigen::Index dim) {
  const Eigen::MatrixXd gauss = random_gaussian(rng, dim, dim);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  Eigen::MatrixXd q = qr.householderQ();
  return q;
}

/// Small in-memory dataset over generic attribute names, target last.
inline conad::Dataset make_dataset(const std::vector<std::vector<int>>& rows) {
  const std::size_t d = rows.at(0).size();
  std::vector<std::string> names;
  for (std::size_t i = 0; i + 1 < d; ++i) names.push_back("x" + std::to_string(i));
  names.push_back("y");
  conad::AttributeSchema schema(names, d - 1);
  std::vector<std::string> ids;
  conad::Dataset::CellMatrix cells(static_cast<Eigen::Index>(rows.size()),
                                   static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    ids.push_back("case" + std::to_string(r));
    for (std::size_t c = 0; c < d; ++c)
      cells(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          static_cast<std::uint8_t>(rows[r][c]);
  }
  return conad::Dataset(std::move(schema), std::move(ids), std::move(cells));
}

}  // namespace test_util
