#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "wormhole/pointcloud.hpp"

namespace wormhole {

// Eigen-truncation threshold: eigenvalues with |lambda| below this fraction of
// the spectral radius are treated as zero.
inline constexpr double kEigenTruncation = 1e-12;

inline void validate_distance_matrix(const Matrix& d, double tol = 1e-10) {
  if (d.rows() != d.cols())
    throw std::invalid_argument("distance matrix must be square");
  const double scale = std::max(1.0, d.cwiseAbs().maxCoeff());
  if ((d - d.transpose()).cwiseAbs().maxCoeff() > tol * scale)
    throw std::invalid_argument("distance matrix must be symmetric");
  if (d.diagonal().cwiseAbs().maxCoeff() > tol * scale)
    throw std::invalid_argument("distance matrix must be hollow");
  if (d.minCoeff() < -tol * scale)
    throw std::invalid_argument("distance matrix must be non-negative");
}

// F = -J D J with J = I - 11^T / N, computed through row means so no N x N
// centering matrix is ever formed.
inline Matrix criterion_matrix(const Matrix& d) {
  const Vector r = d.rowwise().mean();
  const double g = d.mean();
  Matrix f = -(d.colwise() - r);
  f.rowwise() += r.transpose();
  f.array() -= g;
  // symmetrize to shed the last bits of asymmetry before eigensolves
  return 0.5 * (f + f.transpose());
}

struct SpectralSummary {
  Vector eigenvalues;   // descending
  Matrix eigenvectors;  // orthonormal columns matching eigenvalues
};

inline SpectralSummary criterion(const Matrix& d) {
  const Matrix f = criterion_matrix(d);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(f);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("criterion: eigendecomposition failed");
  SpectralSummary s;
  s.eigenvalues = eig.eigenvalues().reverse();
  s.eigenvectors = eig.eigenvectors().rowwise().reverse();
  return s;
}

// Stress lower bound: the squared mass of the negative criterion spectrum.
inline double lower_bound(const Matrix& d) {
  const SpectralSummary s = criterion(d);
  const double thr = kEigenTruncation * s.eigenvalues.cwiseAbs().maxCoeff();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i)
    if (s.eigenvalues[i] < -thr) sum += s.eigenvalues[i] * s.eigenvalues[i];
  return sum;
}

struct BoundsReport {
  double lower = 0.0;
  double upper = 0.0;
  double neg_eigen_mass = 0.0;
  Vector delta_g;
  Vector spectrum;  // full criterion spectrum, descending
};

// Stress upper bound.  delta_g[i] aggregates the squared i-th components of
// the negative-eigenvalue eigenvectors; the bound is the stress of the
// feasible matrix obtained by truncating the negative spectrum and restoring
// hollowness.
inline BoundsReport upper_bound(const Matrix& d) {
  const SpectralSummary s = criterion(d);
  const Eigen::Index n = s.eigenvalues.size();
  const double thr = kEigenTruncation * s.eigenvalues.cwiseAbs().maxCoeff();
  BoundsReport report;
  report.spectrum = s.eigenvalues;
  report.delta_g = Vector::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double lam = s.eigenvalues[j];
    if (lam < -thr) {
      report.neg_eigen_mass += lam * lam;
      report.delta_g += 0.5 * lam * s.eigenvectors.col(j).cwiseAbs2();
    }
  }
  report.lower = report.neg_eigen_mass;
  // sum_{ij} (dg_i + dg_j)^2 = 2 N sum dg_i^2 + 2 (sum dg_i)^2
  const double sq = report.delta_g.squaredNorm();
  const double total = report.delta_g.sum();
  report.upper = 2.0 * static_cast<double>(n) * sq + 2.0 * total * total +
                 report.neg_eigen_mass;
  return report;
}

// Unique symmetric G with A + G hollow and J G J = 0.
inline Matrix hollow_completion(const Matrix& a) {
  if (a.rows() != a.cols())
    throw std::invalid_argument("hollow_completion: matrix must be square");
  const Vector diag = a.diagonal();
  return -0.5 * (diag * Vector::Ones(a.rows()).transpose() +
                 Vector::Ones(a.rows()) * diag.transpose());
}

// Projection onto C1 = { K : -JKJ is PSD }: truncate the negative criterion
// spectrum and restore the row/column means of the input.
inline Matrix project_psd_centered(const Matrix& k) {
  const SpectralSummary s = criterion(k);
  const double mx = s.eigenvalues.cwiseAbs().maxCoeff();
  const double thr = kEigenTruncation * mx;
  Matrix da = Matrix::Zero(k.rows(), k.cols());
  for (Eigen::Index j = 0; j < s.eigenvalues.size(); ++j)
    if (s.eigenvalues[j] > thr)
      da.noalias() -=
          s.eigenvalues[j] * s.eigenvectors.col(j) * s.eigenvectors.col(j).transpose();
  const Vector r = k.rowwise().mean();
  const double g = k.mean();
  Matrix db = r * Vector::Ones(k.rows()).transpose();
  db += db.transpose().eval();
  db.array() -= g;
  return da + db;
}

inline Matrix project_hollow(const Matrix& k) {
  Matrix out = k;
  out.diagonal().setZero();
  return out;
}

inline Matrix project_nonneg(const Matrix& k) { return k.cwiseMax(0.0); }

struct ProjectionState {
  Matrix result;
  int iterations = 0;
  bool converged = false;
  double psd_violation = 0.0;
  double hollow_violation = 0.0;
  double nonneg_violation = 0.0;
  // Dykstra correction variables, one per constraint set
  Matrix corr_psd, corr_hollow, corr_nonneg;
};

inline double min_criterion_eigenvalue(const Matrix& d) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(criterion_matrix(d));
  return eig.eigenvalues().minCoeff();
}

// Dykstra's algorithm onto the intersection of C1 (criterion PSD), C2
// (hollow) and C3 (non-negative).  The correction variables make this the
// nearest-point projection, unlike plain alternating projections.  Hollowness
// and non-negativity hold exactly at exit because C3's thresholding keeps the
// zero diagonal produced by C2.
inline ProjectionState dykstra_project(const Matrix& k, double tol = 1e-8,
                                       int max_iters = 500) {
  ProjectionState st;
  Matrix x = 0.5 * (k + k.transpose());
  st.corr_psd = Matrix::Zero(k.rows(), k.cols());
  st.corr_hollow = st.corr_psd;
  st.corr_nonneg = st.corr_psd;

  Matrix prev = x;
  for (int cycle = 0; cycle < max_iters; ++cycle) {
    Matrix y = project_psd_centered(x + st.corr_psd);
    st.corr_psd = x + st.corr_psd - y;
    x = y;
    y = project_hollow(x + st.corr_hollow);
    st.corr_hollow = x + st.corr_hollow - y;
    x = y;
    y = project_nonneg(x + st.corr_nonneg);
    st.corr_nonneg = x + st.corr_nonneg - y;
    x = y;
    st.iterations = cycle + 1;

    const double change = (x - prev).cwiseAbs().maxCoeff();
    prev = x;
    if (change < tol || cycle == max_iters - 1) {
      st.psd_violation = std::max(0.0, -min_criterion_eigenvalue(x));
      st.hollow_violation = x.diagonal().cwiseAbs().maxCoeff();
      st.nonneg_violation = std::max(0.0, -x.minCoeff());
      if (st.psd_violation <= tol && st.hollow_violation <= tol &&
          st.nonneg_violation <= tol) {
        st.converged = true;
        break;
      }
    }
  }
  if (!st.converged) {
    st.psd_violation = std::max(0.0, -min_criterion_eigenvalue(x));
    st.hollow_violation = x.diagonal().cwiseAbs().maxCoeff();
    st.nonneg_violation = std::max(0.0, -x.minCoeff());
  }
  st.result = x;
  return st;
}

// Full-sum embedding stress, both triangles and the diagonal.
inline double stress(const Matrix& d, const Matrix& d_hat) {
  if (d.rows() != d_hat.rows() || d.cols() != d_hat.cols())
    throw std::invalid_argument("stress: shape mismatch");
  return (d_hat - d).squaredNorm();
}

struct PgdResult {
  Matrix projected;
  double stress = 0.0;
  int iterations = 0;
  bool dykstra_converged = true;
};

// Projected gradient descent on min ||D' - D||_F^2 over the EDM constraint
// sets.  The objective is 1-strongly convex, so the default step 1/2 of the
// gradient 2 (D' - D) is an exact line search and the iteration lands on the
// Dykstra projection of D immediately; the loop stays for other step sizes.
inline PgdResult pgd_edm(const Matrix& d, double lr = 0.5, int max_iters = 500,
                         double dykstra_tol = 1e-8, int dykstra_iters = 500) {
  PgdResult res;
  Matrix cur = d;
  double prev_stress = std::numeric_limits<double>::infinity();
  for (int t = 0; t < max_iters; ++t) {
    const Matrix step = cur - lr * 2.0 * (cur - d);
    ProjectionState proj = dykstra_project(step, dykstra_tol, dykstra_iters);
    res.dykstra_converged = proj.converged;
    cur = proj.result;
    res.stress = stress(d, cur);
    res.iterations = t + 1;
    if (std::abs(prev_stress - res.stress) <=
        1e-14 * std::max(1.0, res.stress))
      break;
    prev_stress = res.stress;
  }
  res.projected = cur;
  return res;
}

// Classical MDS on a squared-distance matrix: Gram G = -J D J / 2, embedding
// from the top eigenpairs with negative eigenvalues clamped to zero.
inline Matrix cmds(const Matrix& d, int dim) {
  if (dim < 1 || dim > d.rows())
    throw std::invalid_argument("cmds: dim must be in [1, N]");
  const SpectralSummary s = criterion(d);  // F = -JDJ, G = F / 2
  Matrix coords(d.rows(), dim);
  for (int j = 0; j < dim; ++j)
    coords.col(j) =
        s.eigenvectors.col(j) * std::sqrt(std::max(s.eigenvalues[j] / 2.0, 0.0));
  return coords;
}

// Pairwise squared Euclidean distances of an embedding.
inline Matrix pairwise_sq_dists(const Matrix& x) {
  const Vector sq = x.rowwise().squaredNorm();
  Matrix d = -2.0 * x * x.transpose();
  d.colwise() += sq;
  d.rowwise() += sq.transpose();
  d.diagonal().setZero();
  return d.cwiseMax(0.0);
}

}  // namespace wormhole
