#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "wormhole/rng.hpp"

namespace wormhole {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// One empirical distribution: n points in d dimensions, uniform weights 1/n.
struct PointCloud {
  Matrix points;  // n x d, one point per row
  std::optional<int> label;

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
};

// Affine min-max transform shared by all clouds of a cohort.  extra_scale is
// the divisor applied after the [-1, 1] mapping (sqrt(d) for high-d data).
struct NormalizationInfo {
  Vector axis_min;
  Vector axis_max;
  double extra_scale = 1.0;
};

struct Cohort {
  std::vector<PointCloud> clouds;
  std::optional<NormalizationInfo> norm;

  std::size_t size() const { return clouds.size(); }
  Eigen::Index dim() const { return clouds.empty() ? 0 : clouds.front().dim(); }

  void validate() const {
    if (clouds.size() < 2)
      throw std::invalid_argument("cohort must contain at least 2 clouds");
    const Eigen::Index d = clouds.front().dim();
    for (const auto& c : clouds) {
      if (c.dim() != d)
        throw std::invalid_argument("cohort clouds must share a dimension");
      if (c.size() < 1)
        throw std::invalid_argument("cohort contains an empty cloud");
      if (!c.points.allFinite())
        throw std::invalid_argument("cohort contains non-finite coordinates");
    }
  }
};

// Maps raw coordinates through the stored transform.  Degenerate axes
// (max == min) collapse to 0.
inline Matrix apply_normalization(const Matrix& points,
                                  const NormalizationInfo& info) {
  Matrix out(points.rows(), points.cols());
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    const double lo = info.axis_min[j], hi = info.axis_max[j];
    if (hi > lo) {
      const double scale = 2.0 / (hi - lo);
      for (Eigen::Index i = 0; i < points.rows(); ++i)
        out(i, j) = (scale * (points(i, j) - lo) - 1.0) / info.extra_scale;
    } else {
      out.col(j).setZero();
    }
  }
  return out;
}

inline Matrix invert_normalization(const Matrix& points,
                                   const NormalizationInfo& info) {
  Matrix out(points.rows(), points.cols());
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    const double lo = info.axis_min[j], hi = info.axis_max[j];
    for (Eigen::Index i = 0; i < points.rows(); ++i)
      out(i, j) = lo + (points(i, j) * info.extra_scale + 1.0) * 0.5 * (hi - lo);
  }
  return out;
}

// Global per-axis min-max normalization to [-1, 1], shared across all clouds,
// with an extra 1/sqrt(d) shrink above `high_dim_threshold` dimensions to keep
// ground costs small enough for stable entropic solves.
inline std::pair<Cohort, NormalizationInfo> normalize_cohort(
    const Cohort& cohort, int high_dim_threshold = 10) {
  if (cohort.clouds.empty())
    throw std::invalid_argument("normalize_cohort: empty cohort");
  const Eigen::Index d = cohort.dim();
  NormalizationInfo info;
  info.axis_min = Vector::Constant(d, std::numeric_limits<double>::infinity());
  info.axis_max = Vector::Constant(d, -std::numeric_limits<double>::infinity());
  for (const auto& c : cohort.clouds) {
    info.axis_min = info.axis_min.cwiseMin(c.points.colwise().minCoeff().transpose());
    info.axis_max = info.axis_max.cwiseMax(c.points.colwise().maxCoeff().transpose());
  }
  info.extra_scale = d > high_dim_threshold ? std::sqrt(static_cast<double>(d)) : 1.0;

  Cohort out;
  out.clouds.reserve(cohort.clouds.size());
  for (const auto& c : cohort.clouds)
    out.clouds.push_back({apply_normalization(c.points, info), c.label});
  out.norm = info;
  return {std::move(out), info};
}

// Pixel coordinates (row, col) of all values strictly above tau, as a 2D
// cloud in row-major order.
inline PointCloud threshold_image_to_cloud(const Matrix& image, double tau) {
  if (image.rows() < 1 || image.cols() < 1)
    throw std::invalid_argument("threshold_image_to_cloud: empty image");
  if (!(tau > 0.0 && tau < 1.0))
    throw std::invalid_argument("threshold_image_to_cloud: tau must be in (0, 1)");
  std::vector<std::pair<double, double>> hits;
  for (Eigen::Index r = 0; r < image.rows(); ++r)
    for (Eigen::Index c = 0; c < image.cols(); ++c)
      if (image(r, c) > tau) hits.emplace_back(double(r), double(c));
  if (hits.empty())
    throw std::runtime_error("threshold_image_to_cloud: no pixels above threshold");
  PointCloud cloud;
  cloud.points.resize(static_cast<Eigen::Index>(hits.size()), 2);
  for (std::size_t i = 0; i < hits.size(); ++i) {
    cloud.points(static_cast<Eigen::Index>(i), 0) = hits[i].first;
    cloud.points(static_cast<Eigen::Index>(i), 1) = hits[i].second;
  }
  return cloud;
}

// 35 four-point clouds on the unit-square corners.  Corner weights come from
// {0, 1/4, 1/2, 3/4, 1} summing to 1; each weighted cloud becomes a uniform
// one by duplicating corners according to their weight, then iid Gaussian
// noise is added so points within a cloud are all distinct.
inline Cohort simplex_cohort(double sigma = 0.01, std::uint64_t seed = 0) {
  if (sigma < 0.0) throw std::invalid_argument("simplex_cohort: sigma < 0");
  const double corners[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  Rng rng(split_seed(seed, 0));
  Cohort cohort;
  for (int k0 = 0; k0 <= 4; ++k0)
    for (int k1 = 0; k1 + k0 <= 4; ++k1)
      for (int k2 = 0; k2 + k1 + k0 <= 4; ++k2) {
        const int k3 = 4 - k0 - k1 - k2;
        const int counts[4] = {k0, k1, k2, k3};
        PointCloud cloud;
        cloud.points.resize(4, 2);
        Eigen::Index row = 0;
        for (int c = 0; c < 4; ++c)
          for (int rep = 0; rep < counts[c]; ++rep, ++row) {
            cloud.points(row, 0) = corners[c][0] + sigma * rng.normal();
            cloud.points(row, 1) = corners[c][1] + sigma * rng.normal();
          }
        cohort.clouds.push_back(std::move(cloud));
      }
  return cohort;
}

// N clouds sampled from random Gaussians: mu_i standard normal, covariance
// A_i A_i^T with A_i standard normal d x d.  All values are rescaled by one
// global affine map into [-3, 3].
inline Cohort gaussian_cohort(int n_clouds, int dim, int n_points,
                              std::uint64_t seed = 0) {
  if (n_clouds < 2 || dim < 1 || n_points < 2)
    throw std::invalid_argument("gaussian_cohort: need N >= 2, d >= 1, n_points >= 2");
  Rng rng(split_seed(seed, 1));
  Cohort cohort;
  cohort.clouds.reserve(n_clouds);
  for (int i = 0; i < n_clouds; ++i) {
    Vector mu(dim);
    for (int a = 0; a < dim; ++a) mu[a] = rng.normal();
    Matrix A(dim, dim);
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) A(a, b) = rng.normal();
    Matrix Z(n_points, dim);
    for (int a = 0; a < n_points; ++a)
      for (int b = 0; b < dim; ++b) Z(a, b) = rng.normal();
    PointCloud cloud;
    cloud.points = (Z * A.transpose()).rowwise() + mu.transpose();
    cohort.clouds.push_back(std::move(cloud));
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& c : cohort.clouds) {
    lo = std::min(lo, c.points.minCoeff());
    hi = std::max(hi, c.points.maxCoeff());
  }
  const double scale = hi > lo ? 6.0 / (hi - lo) : 0.0;
  for (auto& c : cohort.clouds)
    c.points = ((c.points.array() - lo) * scale - 3.0).matrix();
  return cohort;
}

// Rotation matrix drawn uniformly from SO(3) via a normalized random
// quaternion.
inline Matrix random_rotation_matrix_3d(Rng& rng) {
  double q[4];
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& v : q) {
      v = rng.normal();
      norm += v * v;
    }
  } while (norm < 1e-24);
  norm = std::sqrt(norm);
  const double w = q[0] / norm, x = q[1] / norm, y = q[2] / norm, z = q[3] / norm;
  Matrix R(3, 3);
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

inline PointCloud random_rotation_3d(const PointCloud& cloud, std::uint64_t seed) {
  if (cloud.dim() != 3)
    throw std::invalid_argument("random_rotation_3d: cloud must be 3-dimensional");
  Rng rng(split_seed(seed, 2));
  const Matrix R = random_rotation_matrix_3d(rng);
  return {cloud.points * R.transpose(), cloud.label};
}

// ceil(n / factor) points chosen uniformly without replacement.
inline PointCloud subsample(const PointCloud& cloud, int factor, std::uint64_t seed) {
  if (factor < 1) throw std::invalid_argument("subsample: factor must be >= 1");
  const Eigen::Index n = cloud.size();
  if (n < factor)
    throw std::invalid_argument("subsample: cloud smaller than factor");
  const Eigen::Index keep = (n + factor - 1) / factor;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  Rng rng(split_seed(seed, 3));
  for (Eigen::Index i = 0; i < keep; ++i) {
    const auto j = i + static_cast<Eigen::Index>(
                           rng.uniform_int(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  std::sort(idx.begin(), idx.begin() + keep);
  PointCloud out;
  out.label = cloud.label;
  out.points.resize(keep, cloud.dim());
  for (Eigen::Index i = 0; i < keep; ++i)
    out.points.row(i) = cloud.points.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace wormhole
