#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

#include "wormhole/parallel.hpp"
#include "wormhole/pointcloud.hpp"

namespace wormhole {

enum class GroundMetric { sq_euclidean, l1 };

struct OTConfig {
  double epsilon = 0.1;  // entropic regularization
  int max_iters = 2000;
  double tol = 1e-6;  // L1 marginal violation stopping threshold
  GroundMetric metric = GroundMetric::sq_euclidean;
};

struct TransportPlan {
  Matrix coupling;  // n x m, strictly positive at convergence
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline Matrix cost_matrix(const PointCloud& x, const PointCloud& y,
                          GroundMetric metric) {
  if (x.dim() != y.dim())
    throw std::invalid_argument("cost_matrix: dimension mismatch");
  const Eigen::Index n = x.size(), m = y.size();
  Matrix c(n, m);
  if (metric == GroundMetric::sq_euclidean) {
    const Vector xn = x.points.rowwise().squaredNorm();
    const Vector yn = y.points.rowwise().squaredNorm();
    c.noalias() = -2.0 * x.points * y.points.transpose();
    c.colwise() += xn;
    c.rowwise() += yn.transpose();
    c = c.cwiseMax(0.0);
  } else {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j)
        c(i, j) = (x.points.row(i) - y.points.row(j)).cwiseAbs().sum();
  }
  return c;
}

struct SinkhornResult {
  double value = 0.0;  // entropic OT objective at the converged plan
  TransportPlan plan;
};

namespace detail {

using RowArray =
    Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline double lse(const Eigen::Ref<const Eigen::ArrayXd>& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;  // all -inf stays -inf
  return mx + std::log((v - mx).exp().sum());
}

}  // namespace detail

// Log-domain Sinkhorn for uniform marginals on an arbitrary cost matrix.
// Potentials are kept in the cost/epsilon scale so no per-iteration division
// is needed; the marginal violation of the previous plan falls out of the f
// update for free.
inline SinkhornResult sinkhorn_from_cost(const Matrix& cost, double epsilon,
                                         double tol, int max_iters) {
  if (epsilon <= 0.0) throw std::invalid_argument("sinkhorn: epsilon must be > 0");
  if (max_iters < 1) throw std::invalid_argument("sinkhorn: max_iters must be >= 1");
  if (tol <= 0.0) throw std::invalid_argument("sinkhorn: tol must be > 0");

  const Eigen::Index n = cost.rows(), m = cost.cols();
  const double mu = 1.0 / static_cast<double>(n);
  const double log_mu = -std::log(static_cast<double>(n));
  const double log_nu = -std::log(static_cast<double>(m));

  const detail::RowArray ce = cost.array() / epsilon;       // row-major scans
  const detail::RowArray cet = ce.transpose();              // column scans

  Eigen::ArrayXd phi = Eigen::ArrayXd::Zero(n);  // f / epsilon
  Eigen::ArrayXd gam = Eigen::ArrayXd::Zero(m);  // g / epsilon
  Eigen::ArrayXd row_lse(n), col_lse(m), scratch_m(m), scratch_n(n);

  bool converged = false;
  int it = 0;
  for (; it < max_iters; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      scratch_m = gam - ce.row(i).transpose();
      row_lse[i] = detail::lse(scratch_m);
    }
    if (it > 0) {
      // marginal violation of the plan built from (phi_old, gamma): column
      // sums are exact after every gamma update, so only rows can deviate.
      const double viol = ((phi + row_lse).exp() - mu).abs().sum();
      if (viol < tol) {
        converged = true;
        break;
      }
    }
    phi = log_mu - row_lse;
    for (Eigen::Index j = 0; j < m; ++j) {
      scratch_n = phi - cet.row(j).transpose();
      col_lse[j] = detail::lse(scratch_n);
    }
    gam = log_nu - col_lse;
    if (!phi.allFinite() || !gam.allFinite()) {
      std::ostringstream msg;
      msg << "sinkhorn: non-finite potentials at iteration " << it
          << " (epsilon=" << epsilon << " too small for this cost scale)";
      throw std::runtime_error(msg.str());
    }
  }

  SinkhornResult res;
  res.plan.iterations = it;
  res.plan.converged = converged;
  Matrix log_plan(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      log_plan(i, j) = phi[i] + gam[j] - ce(i, j);
  res.plan.coupling = log_plan.array().exp().matrix();
  const double transport = (res.plan.coupling.array() * cost.array()).sum();
  const double entropy_term =
      (res.plan.coupling.array() * (log_plan.array() - 1.0)).sum();
  res.value = transport + epsilon * entropy_term;
  res.plan.cost = res.value;
  return res;
}

// Entropically regularized OT distance between two uniform point clouds.
inline SinkhornResult sinkhorn(const PointCloud& x, const PointCloud& y,
                               const OTConfig& cfg) {
  return sinkhorn_from_cost(cost_matrix(x, y, cfg.metric), cfg.epsilon, cfg.tol,
                            cfg.max_iters);
}

// Debiased divergence: S(x, y) = W(x, y) - (W(x, x) + W(y, y)) / 2.
inline double sinkhorn_divergence(const PointCloud& x, const PointCloud& y,
                                  const OTConfig& cfg) {
  const double wxy = sinkhorn(x, y, cfg).value;
  const double wxx = sinkhorn(x, x, cfg).value;
  const double wyy = sinkhorn(y, y, cfg).value;
  return wxy - 0.5 * (wxx + wyy);
}

struct DivergenceWithGrad {
  double value = 0.0;
  Matrix grad_x;  // d value / d x coordinates
};

// Divergence and its coordinate gradient from one set of solves, with an
// optional precomputed W(y, y) self term (it does not depend on x).
inline DivergenceWithGrad sinkhorn_divergence_with_grad(
    const PointCloud& x, const PointCloud& y, const OTConfig& cfg,
    const double* wyy_precomputed = nullptr) {
  const SinkhornResult rxy = sinkhorn(x, y, cfg);
  const SinkhornResult rxx = sinkhorn(x, x, cfg);
  const double wyy =
      wyy_precomputed ? *wyy_precomputed : sinkhorn(y, y, cfg).value;
  DivergenceWithGrad out;
  out.value = rxy.value - 0.5 * (rxx.value + wyy);
  const Matrix& pxy = rxy.plan.coupling;
  const Matrix& pxx = rxx.plan.coupling;
  if (cfg.metric == GroundMetric::sq_euclidean) {
    const Vector sxy = pxy.rowwise().sum();
    const Vector sxx = pxx.rowwise().sum();
    out.grad_x = 2.0 * (sxy.asDiagonal() * x.points - pxy * y.points) -
                 2.0 * (sxx.asDiagonal() * x.points - pxx * x.points);
  } else {
    const Eigen::Index n = x.size(), d = x.dim();
    out.grad_x = Matrix::Zero(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index k = 0; k < d; ++k) {
        double g = 0.0;
        for (Eigen::Index j = 0; j < y.size(); ++j) {
          const double diff = x.points(i, k) - y.points(j, k);
          g += pxy(i, j) * (diff > 0 ? 1.0 : diff < 0 ? -1.0 : 0.0);
        }
        for (Eigen::Index j = 0; j < n; ++j) {
          const double diff = x.points(i, k) - x.points(j, k);
          g -= pxx(i, j) * (diff > 0 ? 1.0 : diff < 0 ? -1.0 : 0.0);
        }
        out.grad_x(i, k) = g;
      }
  }
  return out;
}

// Gradient of the divergence with respect to x's coordinates, with the
// converged plans held fixed.  The self term picks up both argument slots of
// the symmetric plan, which cancels the 1/2 in front of W(x, x).
inline Matrix sinkhorn_divergence_grad(const PointCloud& x, const PointCloud& y,
                                       const OTConfig& cfg) {
  const double skip_self = 0.0;  // W(y, y) only affects the value
  return sinkhorn_divergence_with_grad(x, y, cfg, &skip_self).grad_x;
}

// Brute-force unregularized OT for equal-size uniform clouds.  The optimum of
// a uniform transport problem sits at a permutation, so enumerating all n!
// assignments is exact.
inline double exact_ot_small(const PointCloud& x, const PointCloud& y,
                             GroundMetric metric = GroundMetric::sq_euclidean) {
  const Eigen::Index n = x.size();
  if (n != y.size())
    throw std::invalid_argument("exact_ot_small: clouds must have equal size");
  if (n > 7) throw std::invalid_argument("exact_ot_small: n must be <= 7");
  const Matrix c = cost_matrix(x, y, metric);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      total += c(i, perm[static_cast<std::size_t>(i)]);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);
}

// Full pairwise divergence matrix of a set of clouds.  Self-transport terms
// are solved once per cloud; pair solves run in parallel into fixed slots so
// results are independent of the schedule.
inline Matrix pairwise_divergence_matrix(const std::vector<PointCloud>& clouds,
                                         const OTConfig& cfg, int threads = 1) {
  const std::size_t n = clouds.size();
  std::vector<double> self(n);
  parallel_for(n, threads, [&](std::size_t i) {
    self[i] = sinkhorn(clouds[i], clouds[i], cfg).value;
  });
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  std::vector<double> cross(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t k) {
    cross[k] = sinkhorn(clouds[pairs[k].first], clouds[pairs[k].second], cfg).value;
  });
  Matrix d = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    const double s = cross[k] - 0.5 * (self[i] + self[j]);
    d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s;
    d(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = s;
  }
  return d;
}

}  // namespace wormhole
