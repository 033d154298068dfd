#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "conad/common.hpp"

namespace conad {

/// Generalized squared distance (u-v)^T Q (u-v) with Q = A^T A, represented
/// by its linear transform A. Q is positive semidefinite by construction, so
/// the squared form is a pseudometric: zero on equal points, symmetric, and
/// its square root satisfies the triangle inequality.
class GeneralizedMetric {
 public:
  explicit GeneralizedMetric(Eigen::MatrixXd transform) : transform_(std::move(transform)) {
    if (transform_.rows() != transform_.cols() || transform_.rows() == 0)
      fail("metric: transform must be a nonempty square matrix");
  }

  static GeneralizedMetric identity(Eigen::Index dim) {
    return GeneralizedMetric(Eigen::MatrixXd::Identity(dim, dim));
  }

  Eigen::Index dim() const { return transform_.rows(); }
  const Eigen::MatrixXd& transform() const { return transform_; }
  Eigen::MatrixXd weight_matrix() const { return transform_.transpose() * transform_; }

 private:
  Eigen::MatrixXd transform_;
};

/// ||A(u - v)||^2
inline double distance_sq(const GeneralizedMetric& metric, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& v) {
  if (u.size() != metric.dim() || v.size() != metric.dim())
    fail("distance_sq: vector lengths (%ld, %ld) do not match metric dimension %ld",
         static_cast<long>(u.size()), static_cast<long>(v.size()),
         static_cast<long>(metric.dim()));
  return (metric.transform() * (u - v)).squaredNorm();
}

/// Squared distances from `query` to every row of `points`.
inline Eigen::VectorXd distances_sq(const GeneralizedMetric& metric,
                                    const Eigen::MatrixXd& points,
                                    const Eigen::VectorXd& query) {
  if (points.cols() != metric.dim() || query.size() != metric.dim())
    fail("distances_sq: dimension mismatch (points %ld, query %ld, metric %ld)",
         static_cast<long>(points.cols()), static_cast<long>(query.size()),
         static_cast<long>(metric.dim()));
  return ((points.rowwise() - query.transpose()) * metric.transform().transpose())
      .rowwise()
      .squaredNorm();
}

/// Default ridge for covariance-based fits: 1e-6 * trace(cov)/d. Binary data
/// routinely yields singular covariances.
inline double default_ridge(const Eigen::MatrixXd& covariance) {
  return 1e-6 * covariance.trace() / static_cast<double>(covariance.cols());
}

namespace detail {

/// Population covariance (divide by n) of the rows.
inline Eigen::MatrixXd population_covariance(const Eigen::MatrixXd& rows) {
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mean;
  return (centered.transpose() * centered) / static_cast<double>(rows.rows());
}

inline bool is_exactly_diagonal(const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      if (r != c && m(r, c) != 0.0) return false;
  return true;
}

/// Symmetric inverse square root of (sigma + ridge*I), eigenvalues clamped
/// from below at the ridge to absorb roundoff negatives. Exactly diagonal
/// inputs skip the eigendecomposition, which keeps uncorrelated covariances
/// (identity included) exact.
inline Eigen::MatrixXd inverse_sqrt(const Eigen::MatrixXd& sigma, double ridge,
                                    const char* what) {
  if (ridge < 0.0) fail("%s: ridge must be nonnegative, got %g", what, ridge);
  Eigen::VectorXd d;
  Eigen::MatrixXd vectors;
  const bool diagonal = is_exactly_diagonal(sigma);
  if (diagonal) {
    d = sigma.diagonal();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
    if (eig.info() != Eigen::Success) fail("%s: eigendecomposition failed", what);
    d = eig.eigenvalues();
    vectors = eig.eigenvectors();
  }
  const double scale = std::max(d.cwiseAbs().maxCoeff(), 1.0);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    d[i] = std::max(d[i] + ridge, ridge);
    if (d[i] <= 1e-14 * scale)
      fail("%s: covariance is singular; pass a positive ridge to regularize it", what);
    d[i] = 1.0 / std::sqrt(d[i]);
  }
  if (diagonal) return d.asDiagonal();
  return vectors * d.asDiagonal() * vectors.transpose();
}

}  // namespace detail

/// Mahalanobis metric: Q = (cov + ridge*I)^-1 with cov the population
/// covariance of the rows; A is the symmetric inverse square root.
inline GeneralizedMetric fit_mahalanobis(const Eigen::MatrixXd& rows, double ridge) {
  if (rows.rows() < 2) fail("fit_mahalanobis: need at least 2 rows, got %ld",
                            static_cast<long>(rows.rows()));
  const Eigen::MatrixXd cov = detail::population_covariance(rows);
  return GeneralizedMetric(detail::inverse_sqrt(cov, ridge, "fit_mahalanobis"));
}

/// RCA metric: whitens the average within-class covariance.
///
/// With `class_size_weighted` (the default) the average is sum_i (n_i/n) *
/// cov_i, which makes the transformed pooled within-class covariance exactly
/// the identity; the plain unweighted sum of class covariances is kept behind
/// the switch for comparison.
inline GeneralizedMetric fit_rca(const Eigen::MatrixXd& rows, const std::vector<int>& labels,
                                 double ridge, bool class_size_weighted = true) {
  const Eigen::Index n = rows.rows();
  if (n < 1) fail("fit_rca: empty input");
  if (static_cast<Eigen::Index>(labels.size()) != n)
    fail("fit_rca: %zu labels for %ld rows", labels.size(), static_cast<long>(n));
  for (int label : labels)
    if (label != 0 && label != 1) fail("fit_rca: class label %d is not binary", label);

  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(rows.cols(), rows.cols());
  for (int cls : {0, 1}) {
    std::vector<Eigen::Index> members;
    for (Eigen::Index i = 0; i < n; ++i)
      if (labels[static_cast<std::size_t>(i)] == cls) members.push_back(i);
    if (members.empty()) continue;
    Eigen::MatrixXd class_rows(static_cast<Eigen::Index>(members.size()), rows.cols());
    for (std::size_t i = 0; i < members.size(); ++i)
      class_rows.row(static_cast<Eigen::Index>(i)) = rows.row(members[i]);
    const Eigen::MatrixXd cov = detail::population_covariance(class_rows);
    const double weight =
        class_size_weighted ? static_cast<double>(members.size()) / static_cast<double>(n) : 1.0;
    sigma += weight * cov;
  }
  return GeneralizedMetric(detail::inverse_sqrt(sigma, ridge, "fit_rca"));
}

/// Plain-text transform file: dimension, then row-major entries of A with 17
/// significant digits, so CLI stages can pass metrics between runs exactly.
inline void save_metric(const GeneralizedMetric& metric, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write metric file '%s'", path.c_str());
  const Eigen::MatrixXd& a = metric.transform();
  out << a.rows() << '\n';
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      if (c) out << ' ';
      out << format_g17(a(r, c));
    }
    out << '\n';
  }
}

inline GeneralizedMetric load_metric(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open metric file '%s'", path.c_str());
  Eigen::Index dim = 0;
  if (!(in >> dim) || dim <= 0) fail("%s: bad metric dimension", path.c_str());
  Eigen::MatrixXd a(dim, dim);
  for (Eigen::Index r = 0; r < dim; ++r)
    for (Eigen::Index c = 0; c < dim; ++c)
      if (!(in >> a(r, c))) fail("%s: truncated metric file", path.c_str());
  return GeneralizedMetric(std::move(a));
}

}  // namespace conad
