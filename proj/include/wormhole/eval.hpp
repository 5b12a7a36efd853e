#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <vector>

#include "wormhole/edm.hpp"
#include "wormhole/ot.hpp"
#include "wormhole/parallel.hpp"
#include "wormhole/pointcloud.hpp"
#include "wormhole/rng.hpp"
#include "wormhole/trainer.hpp"

namespace wormhole {

struct GaussianSummary {
  Vector mu;
  Matrix sigma;  // 1/n-normalized, symmetrized
};

inline GaussianSummary gaussian_summary(const PointCloud& cloud) {
  if (cloud.size() < 2)
    throw std::invalid_argument("gaussian_summary: need at least 2 points");
  GaussianSummary s;
  s.mu = cloud.points.colwise().mean().transpose();
  const Matrix centered = cloud.points.rowwise() - s.mu.transpose();
  s.sigma = centered.transpose() * centered / static_cast<double>(cloud.size());
  s.sigma = 0.5 * (s.sigma + s.sigma.transpose()).eval();
  return s;
}

namespace detail {

// Symmetric PSD square root by eigendecomposition.  Eigenvalues in
// [-psd_tol, 0) are clamped; anything more negative is an error.
inline Matrix sqrt_psd(const Matrix& sym, double psd_tol = 1e-8) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (sym + sym.transpose()));
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("sqrt_psd: eigendecomposition failed");
  Vector lam = eig.eigenvalues();
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam[i] < -psd_tol)
      throw std::invalid_argument("sqrt_psd: matrix is not PSD");
    lam[i] = std::sqrt(std::max(lam[i], 0.0));
  }
  return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

inline Vector descending_eigenvalues(const Matrix& sym, double psd_tol = 1e-8) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (sym + sym.transpose()));
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition failed");
  Vector lam = eig.eigenvalues().reverse();
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam[i] < -psd_tol)
      throw std::invalid_argument("covariance is not PSD");
    lam[i] = std::max(lam[i], 0.0);
  }
  return lam;
}

}  // namespace detail

// Closed-form squared W2 between Gaussian fits:
//   ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2)
inline double frechet_w2(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.mu.size() != b.mu.size())
    throw std::invalid_argument("frechet_w2: dimension mismatch");
  const Matrix root_a = detail::sqrt_psd(a.sigma);
  const Matrix middle = root_a * b.sigma * root_a;
  const Matrix cross_root = detail::sqrt_psd(middle);
  const double value = (a.mu - b.mu).squaredNorm() + a.sigma.trace() +
                       b.sigma.trace() - 2.0 * cross_root.trace();
  if (value < -1e-8)
    throw std::runtime_error("frechet_w2: negative distance beyond tolerance");
  return std::max(value, 0.0);
}

// Lower bound on the GW distance between Gaussian fits, from the sorted
// covariance spectra (zero-padded when dimensions differ).
inline double gaussian_gw_lower(const GaussianSummary& a,
                                const GaussianSummary& b) {
  Vector la = detail::descending_eigenvalues(a.sigma);
  Vector lb = detail::descending_eigenvalues(b.sigma);
  const Eigen::Index d = std::max(la.size(), lb.size());
  Vector da = Vector::Zero(d), db = Vector::Zero(d);
  da.head(la.size()) = la;
  db.head(lb.size()) = lb;
  const double tra = da.sum(), trb = db.sum();
  const double fa = da.norm(), fb = db.norm();
  const double lgw_sq = 4.0 * (tra - trb) * (tra - trb) +
                        4.0 * (fa - fb) * (fa - fb) +
                        4.0 * (fa * fa - fb * fb) + 4.0 * (da - db).squaredNorm();
  return std::sqrt(std::max(lgw_sq, 0.0));
}

// Majority vote over the k nearest training embeddings; ties go to the class
// with the smallest summed distance within the k-set.
inline std::vector<int> knn_classify(const Matrix& train_emb,
                                     const std::vector<int>& train_labels,
                                     const Matrix& test_emb, int k) {
  if (train_emb.rows() == 0)
    throw std::invalid_argument("knn_classify: empty training set");
  if (static_cast<std::size_t>(train_emb.rows()) != train_labels.size())
    throw std::invalid_argument("knn_classify: label count mismatch");
  if (k < 1 || k > train_emb.rows())
    throw std::invalid_argument("knn_classify: k must be in [1, |train|]");
  std::vector<int> predictions(static_cast<std::size_t>(test_emb.rows()));
  std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(train_emb.rows()));
  for (Eigen::Index t = 0; t < test_emb.rows(); ++t) {
    for (Eigen::Index i = 0; i < train_emb.rows(); ++i)
      dist[static_cast<std::size_t>(i)] = {
          (train_emb.row(i) - test_emb.row(t)).squaredNorm(),
          train_labels[static_cast<std::size_t>(i)]};
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    std::map<int, std::pair<int, double>> votes;  // label -> (count, dist sum)
    for (int i = 0; i < k; ++i) {
      auto& v = votes[dist[static_cast<std::size_t>(i)].second];
      v.first += 1;
      v.second += dist[static_cast<std::size_t>(i)].first;
    }
    int best_label = votes.begin()->first;
    std::pair<int, double> best = votes.begin()->second;
    for (const auto& [label, v] : votes) {
      if (v.first > best.first ||
          (v.first == best.first && v.second < best.second)) {
        best = v;
        best_label = label;
      }
    }
    predictions[static_cast<std::size_t>(t)] = best_label;
  }
  return predictions;
}

struct MlpConfig {
  int hidden = 100;
  int epochs = 200;
  double lr = 1e-2;
  std::uint64_t seed = 0;
};

struct MlpResult {
  std::vector<int> predictions;
  double accuracy = 0.0;  // against test labels when provided
};

// One-hidden-layer softmax classifier trained full-batch with Adam; the
// embedding-side counterpart of the label-accuracy protocol.
inline MlpResult mlp_classify(const Matrix& train_emb,
                              const std::vector<int>& train_labels,
                              const Matrix& test_emb,
                              const std::vector<int>& test_labels = {},
                              const MlpConfig& cfg = {}) {
  if (static_cast<std::size_t>(train_emb.rows()) != train_labels.size())
    throw std::invalid_argument("mlp_classify: label count mismatch");
  std::vector<int> classes(train_labels);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2)
    throw std::invalid_argument("mlp_classify: need at least 2 classes");
  const int n_class = static_cast<int>(classes.size());
  auto class_index = [&](int label) {
    return static_cast<int>(std::lower_bound(classes.begin(), classes.end(), label) -
                            classes.begin());
  };

  const Eigen::Index n = train_emb.rows(), dim = train_emb.cols();
  Rng rng(split_seed(cfg.seed, 23));
  const double b1 = std::sqrt(6.0 / static_cast<double>(dim + cfg.hidden));
  const double b2 = std::sqrt(6.0 / static_cast<double>(cfg.hidden + n_class));
  Matrix w1(dim, cfg.hidden), w2(cfg.hidden, n_class);
  for (Eigen::Index i = 0; i < w1.size(); ++i) w1.data()[i] = rng.uniform(-b1, b1);
  for (Eigen::Index i = 0; i < w2.size(); ++i) w2.data()[i] = rng.uniform(-b2, b2);
  Vector bias1 = Vector::Zero(cfg.hidden), bias2 = Vector::Zero(n_class);

  Matrix m1 = Matrix::Zero(dim, cfg.hidden), v1 = m1;
  Matrix m2 = Matrix::Zero(cfg.hidden, n_class), v2 = m2;
  Vector mb1 = Vector::Zero(cfg.hidden), vb1 = mb1;
  Vector mb2 = Vector::Zero(n_class), vb2 = mb2;

  auto adam_step = [&](auto& par, auto& mom, auto& vel, const auto& grad, int t) {
    mom = kAdamBeta1 * mom + (1.0 - kAdamBeta1) * grad;
    vel = kAdamBeta2 * vel + (1.0 - kAdamBeta2) * grad.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
    const double bc2 = 1.0 - std::pow(kAdamBeta2, t);
    par.array() -= cfg.lr * (mom.array() / bc1) /
                   ((vel.array() / bc2).sqrt() + kAdamEps);
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Matrix hidden_pre = train_emb * w1;
    hidden_pre.rowwise() += bias1.transpose();
    const Matrix hidden = hidden_pre.unaryExpr([](double v) { return silu(v); });
    Matrix logits = hidden * w2;
    logits.rowwise() += bias2.transpose();
    // softmax cross-entropy gradient: probs - onehot, averaged over rows
    Matrix dlogits(n, n_class);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = logits.row(i).maxCoeff();
      Eigen::ArrayXd ex = (logits.row(i).array() - mx).exp();
      ex /= ex.sum();
      dlogits.row(i) = ex.matrix().transpose();
      dlogits(i, class_index(train_labels[static_cast<std::size_t>(i)])) -= 1.0;
    }
    dlogits /= static_cast<double>(n);
    const Matrix gw2 = hidden.transpose() * dlogits;
    const Vector gb2 = dlogits.colwise().sum().transpose();
    Matrix dhidden = dlogits * w2.transpose();
    dhidden.array() *=
        hidden_pre.unaryExpr([](double v) { return silu_grad(v); }).array();
    const Matrix gw1 = train_emb.transpose() * dhidden;
    const Vector gb1 = dhidden.colwise().sum().transpose();
    adam_step(w1, m1, v1, gw1, epoch);
    adam_step(bias1, mb1, vb1, gb1, epoch);
    adam_step(w2, m2, v2, gw2, epoch);
    adam_step(bias2, mb2, vb2, gb2, epoch);
  }

  MlpResult result;
  result.predictions.resize(static_cast<std::size_t>(test_emb.rows()));
  int correct = 0;
  for (Eigen::Index i = 0; i < test_emb.rows(); ++i) {
    Vector h = (test_emb.row(i) * w1).transpose() + bias1;
    h = h.unaryExpr([](double v) { return silu(v); });
    const Vector logits = (h.transpose() * w2).transpose() + bias2;
    Eigen::Index arg = 0;
    logits.maxCoeff(&arg);
    const int pred = classes[static_cast<std::size_t>(arg)];
    result.predictions[static_cast<std::size_t>(i)] = pred;
    if (!test_labels.empty() && pred == test_labels[static_cast<std::size_t>(i)])
      ++correct;
  }
  if (!test_labels.empty())
    result.accuracy =
        static_cast<double>(correct) / static_cast<double>(test_emb.rows());
  return result;
}

struct EvalReport {
  double pearson = 0.0;  // mean over valid reps
  double mse = 0.0;
  int n_sampled = 0;
  int reps = 0;
  std::vector<double> pearson_per_rep;  // NaN marks a degenerate rep
  std::vector<double> mse_per_rep;
};

inline double pearson_corr(const std::vector<double>& a,
                           const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0)
    return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

using EncodeFn = std::function<Vector(const PointCloud&)>;
using PairDistanceFn =
    std::function<double(const PointCloud&, const PointCloud&)>;

// Table-style evaluation: per rep, sample n clouds, compare the true pairwise
// divergence matrix against squared embedding distances over the strict upper
// triangle.  Degenerate reps (zero-variance embeddings) report NaN.
inline EvalReport ot_correlation_eval(const Cohort& cohort,
                                      const EncodeFn& encode_fn,
                                      const OTConfig& cfg, int n = 128,
                                      int reps = 10, std::uint64_t seed = 0,
                                      int threads = 1,
                                      const PairDistanceFn& pair_fn = {}) {
  if (cohort.size() < static_cast<std::size_t>(n))
    throw std::invalid_argument("ot_correlation_eval: cohort smaller than n");
  EvalReport report;
  report.n_sampled = n;
  report.reps = reps;
  PairDistanceFn distance = pair_fn;
  if (!distance)
    distance = [&cfg](const PointCloud& a, const PointCloud& b) {
      return sinkhorn_divergence(a, b, cfg);
    };
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng(split_seed(seed, 0x200000 + static_cast<std::uint64_t>(rep)));
    const std::vector<std::size_t> sample = sample_batch(cohort.size(), n, rng);
    std::vector<PointCloud> clouds;
    clouds.reserve(sample.size());
    for (const auto idx : sample) clouds.push_back(cohort.clouds[idx]);

    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    std::vector<double> truth(pairs.size());
    parallel_for(pairs.size(), threads, [&](std::size_t k) {
      truth[k] = distance(clouds[static_cast<std::size_t>(pairs[k].first)],
                          clouds[static_cast<std::size_t>(pairs[k].second)]);
    });

    std::vector<Vector> embeddings;
    embeddings.reserve(clouds.size());
    for (const auto& c : clouds) embeddings.push_back(encode_fn(c));
    std::vector<double> approx(pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k)
      approx[k] = (embeddings[static_cast<std::size_t>(pairs[k].first)] -
                   embeddings[static_cast<std::size_t>(pairs[k].second)])
                      .squaredNorm();

    const double rho = pearson_corr(truth, approx);
    double mse = 0.0;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const double diff = truth[k] - approx[k];
      mse += diff * diff;
    }
    mse /= static_cast<double>(pairs.size());
    report.pearson_per_rep.push_back(rho);
    report.mse_per_rep.push_back(mse);
  }
  double rho_sum = 0.0, mse_sum = 0.0;
  int valid = 0;
  for (int rep = 0; rep < reps; ++rep) {
    if (std::isnan(report.pearson_per_rep[static_cast<std::size_t>(rep)])) continue;
    rho_sum += report.pearson_per_rep[static_cast<std::size_t>(rep)];
    mse_sum += report.mse_per_rep[static_cast<std::size_t>(rep)];
    ++valid;
  }
  if (valid > 0) {
    report.pearson = rho_sum / valid;
    report.mse = mse_sum / valid;
  } else {
    report.pearson = std::numeric_limits<double>::quiet_NaN();
    report.mse = std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

}  // namespace wormhole
