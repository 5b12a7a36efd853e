#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "wormhole/gromov.hpp"
#include "wormhole/model.hpp"
#include "wormhole/ot.hpp"
#include "wormhole/parallel.hpp"
#include "wormhole/pointcloud.hpp"
#include "wormhole/rng.hpp"

namespace wormhole {

struct TrainConfig {
  int batch_size = 16;
  int total_steps = 10000;
  double lr0 = 1e-4;
  double lr_final = 1e-5;
  double eps_enc = 0.1;   // regularization for the encoder stress targets
  double eps_dec = 0.01;  // regularization for the reconstruction loss
  std::uint64_t seed = 0;
  OTConfig ot;  // tol / max_iters / metric for training solves
  bool gw_mode = false;
  int gw_max_outer = 50;
  double gw_outer_tol = 1e-6;
  int threads = 1;
  // Re-use pairwise encoder targets across steps.  They are pure functions of
  // the cohort, so this changes nothing numerically; it only pays off on
  // cohorts small enough that batches revisit pairs.
  bool cache_pairwise = false;

  void validate() const {
    if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size >= 2");
    if (total_steps < 0) throw std::invalid_argument("TrainConfig: total_steps >= 0");
    if (!(lr0 >= lr_final && lr_final > 0.0))
      throw std::invalid_argument("TrainConfig: need lr0 >= lr_final > 0");
    if (eps_enc <= 0.0 || eps_dec <= 0.0)
      throw std::invalid_argument("TrainConfig: eps_enc and eps_dec must be > 0");
  }
};

// Exponential decay from lr0 to lr_final over the step budget.
inline double lr_schedule(int step, const TrainConfig& cfg) {
  if (step < 0 || step >= cfg.total_steps)
    throw std::invalid_argument("lr_schedule: step out of range");
  if (cfg.total_steps == 1) return cfg.lr0;
  const double frac =
      static_cast<double>(step) / static_cast<double>(cfg.total_steps - 1);
  return cfg.lr0 * std::pow(cfg.lr_final / cfg.lr0, frac);
}

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t t = 0;

  static AdamState like(ModelParams& params) {
    AdamState s;
    params.for_each_param([&](const std::string&, Param& p) {
      s.m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      s.v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    });
    return s;
  }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// Bias-corrected Adam over every parameter tensor, reading the accumulated
// gradients in canonical order.
inline void adam_update(ModelParams& params, AdamState& state, double lr) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
  std::size_t idx = 0;
  params.for_each_param([&](const std::string&, Param& p) {
    Matrix& m = state.m[idx];
    Matrix& v = state.v[idx];
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * p.grad;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * p.grad.cwiseAbs2();
    const Matrix mhat = m / bc1;
    const Matrix vhat = v / bc2;
    p.value.array() -=
        lr * mhat.array() / (vhat.array().sqrt() + kAdamEps);
    ++idx;
  });
}

struct LossRecord {
  int step = 0;
  double loss_enc = 0.0;
  double loss_dec = 0.0;
  double lr = 0.0;
};

struct TrainState {
  ModelParams params;
  AdamState adam;
  int step = 0;
  std::vector<LossRecord> history;
  std::uint64_t encoder_pair_solves = 0;  // logical pair-distance evaluations
  std::uint64_t decoder_solves = 0;
  // pairwise target cache, keyed by (i, j) with i < j; self terms keyed by i
  std::unordered_map<std::uint64_t, double> pair_cache;
  std::unordered_map<std::uint64_t, double> self_cache;
  std::unordered_map<std::uint64_t, double> dec_self_cache;
};

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint64_t pair_key(std::size_t i, std::size_t j) {
  return (static_cast<std::uint64_t>(i) << 32) | static_cast<std::uint64_t>(j);
}

inline double cross_solve(const Cohort& cohort, std::size_t i, std::size_t j,
                          const OTConfig& ot, const TrainConfig& cfg) {
  if (cfg.gw_mode)
    return entropic_gw(cohort.clouds[i], cohort.clouds[j], ot, cfg.gw_max_outer,
                       cfg.gw_outer_tol)
        .value;
  return sinkhorn(cohort.clouds[i], cohort.clouds[j], ot).value;
}

// Pairwise encoder targets for a batch, symmetric with zero diagonal.  Cache
// lookups and inserts stay on the calling thread; only the missing solves run
// in parallel, each into its own slot.
inline Matrix batch_targets(TrainState& state, const Cohort& cohort,
                            const std::vector<std::size_t>& batch,
                            const TrainConfig& cfg) {
  const int b = static_cast<int>(batch.size());
  OTConfig ot = cfg.ot;
  ot.epsilon = cfg.eps_enc;

  // self-transport terms, one per batch member
  std::vector<double> self_vals(static_cast<std::size_t>(b));
  std::vector<int> self_missing;
  for (int i = 0; i < b; ++i) {
    const auto it = state.self_cache.find(batch[static_cast<std::size_t>(i)]);
    if (cfg.cache_pairwise && it != state.self_cache.end())
      self_vals[static_cast<std::size_t>(i)] = it->second;
    else
      self_missing.push_back(i);
  }
  parallel_for(self_missing.size(), cfg.threads, [&](std::size_t k) {
    const int i = self_missing[k];
    const std::size_t ci = batch[static_cast<std::size_t>(i)];
    self_vals[static_cast<std::size_t>(i)] = cross_solve(cohort, ci, ci, ot, cfg);
  });
  if (cfg.cache_pairwise)
    for (const int i : self_missing)
      state.self_cache[batch[static_cast<std::size_t>(i)]] =
          self_vals[static_cast<std::size_t>(i)];

  // cross terms per unordered pair
  struct PairJob {
    int i, j;
    std::uint64_t key;
  };
  Matrix targets = Matrix::Zero(b, b);
  std::vector<PairJob> jobs;
  for (int i = 0; i < b; ++i)
    for (int j = i + 1; j < b; ++j) {
      std::size_t ci = batch[static_cast<std::size_t>(i)];
      std::size_t cj = batch[static_cast<std::size_t>(j)];
      if (ci > cj) std::swap(ci, cj);
      const std::uint64_t key = pair_key(ci, cj);
      const auto it = state.pair_cache.find(key);
      if (cfg.cache_pairwise && it != state.pair_cache.end()) {
        targets(i, j) = targets(j, i) = it->second;
      } else {
        jobs.push_back({i, j, key});
      }
    }
  std::vector<double> cross(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t k) {
    const std::size_t ci = batch[static_cast<std::size_t>(jobs[k].i)];
    const std::size_t cj = batch[static_cast<std::size_t>(jobs[k].j)];
    cross[k] = cross_solve(cohort, ci, cj, ot, cfg);
  });
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    const auto& job = jobs[k];
    const double div =
        cross[k] - 0.5 * (self_vals[static_cast<std::size_t>(job.i)] +
                          self_vals[static_cast<std::size_t>(job.j)]);
    targets(job.i, job.j) = targets(job.j, job.i) = div;
    if (cfg.cache_pairwise) state.pair_cache[job.key] = div;
  }
  state.encoder_pair_solves +=
      static_cast<std::uint64_t>(b) * static_cast<std::uint64_t>(b - 1) / 2;
  return targets;
}

}  // namespace detail

// B distinct cohort indices, uniform without replacement.
inline std::vector<std::size_t> sample_batch(std::size_t cohort_size,
                                             int batch_size, Rng& rng) {
  if (static_cast<std::size_t>(batch_size) > cohort_size)
    throw std::invalid_argument("sample_batch: batch larger than cohort");
  std::vector<std::size_t> idx(cohort_size);
  for (std::size_t i = 0; i < cohort_size; ++i) idx[i] = i;
  for (int i = 0; i < batch_size; ++i) {
    const std::size_t j =
        static_cast<std::size_t>(i) +
        static_cast<std::size_t>(rng.uniform_int(cohort_size - static_cast<std::size_t>(i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(batch_size));
  return idx;
}

// One optimization step: sample a batch, match pairwise embedding distances
// to the pairwise OT targets, reconstruct through the decoder, update the
// encoder with grad(L_enc + L_dec) and the decoder with grad(L_dec).
inline void train_step(TrainState& state, const Cohort& cohort,
                       const TrainConfig& cfg) {
  const int b = cfg.batch_size;
  Rng rng(split_seed(cfg.seed, 0x100000 + static_cast<std::uint64_t>(state.step)));
  const std::vector<std::size_t> batch = sample_batch(cohort.size(), b, rng);

  // encoder forward
  std::vector<EncoderCache> enc_caches(static_cast<std::size_t>(b));
  std::vector<Embedding> alphas(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i)
    alphas[i] = encode(state.params, cohort.clouds[batch[i]], &enc_caches[i]);

  // pairwise targets, symmetric with zero diagonal
  const Matrix targets = detail::batch_targets(state, cohort, batch, cfg);

  // L_enc = sum_{i,j} (||a_i - a_j||^2 - D_ij)^2 over ordered pairs
  double loss_enc = 0.0;
  std::vector<Embedding> dalpha(static_cast<std::size_t>(b),
                                Embedding::Zero(alphas[0].size()));
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      if (i == j) continue;
      const Embedding diff = alphas[i] - alphas[j];
      const double err = diff.squaredNorm() - targets(i, j);
      loss_enc += err * err;
      dalpha[i] += 4.0 * err * diff;  // d/da_i of both (i,j) and (j,i) terms
    }

  // decoder forward + reconstruction loss; the W(x, x) self terms are pure
  // functions of the cohort, so they are memoized across steps
  OTConfig ot_dec = cfg.ot;
  ot_dec.epsilon = cfg.eps_dec;
  std::vector<double> input_self(static_cast<std::size_t>(b));
  std::vector<int> self_missing;
  for (int i = 0; i < b; ++i) {
    const auto it = state.dec_self_cache.find(batch[static_cast<std::size_t>(i)]);
    if (it != state.dec_self_cache.end())
      input_self[static_cast<std::size_t>(i)] = it->second;
    else
      self_missing.push_back(i);
  }
  parallel_for(self_missing.size(), cfg.threads, [&](std::size_t k) {
    const std::size_t ci = batch[static_cast<std::size_t>(self_missing[k])];
    input_self[static_cast<std::size_t>(self_missing[k])] =
        sinkhorn(cohort.clouds[ci], cohort.clouds[ci], ot_dec).value;
  });
  for (const int i : self_missing)
    state.dec_self_cache[batch[static_cast<std::size_t>(i)]] =
        input_self[static_cast<std::size_t>(i)];

  std::vector<DecoderCache> dec_caches(static_cast<std::size_t>(b));
  std::vector<PointCloud> decoded(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i)
    decoded[i] = decode(state.params, alphas[i], &dec_caches[i]);
  std::vector<DivergenceWithGrad> dec_terms(static_cast<std::size_t>(b));
  parallel_for(static_cast<std::size_t>(b), cfg.threads, [&](std::size_t i) {
    dec_terms[i] = sinkhorn_divergence_with_grad(
        decoded[i], cohort.clouds[batch[i]], ot_dec, &input_self[i]);
  });
  state.decoder_solves += static_cast<std::uint64_t>(b);
  double loss_dec = 0.0;
  for (int i = 0; i < b; ++i) loss_dec += dec_terms[static_cast<std::size_t>(i)].value;

  if (!std::isfinite(loss_enc)) {
    std::ostringstream msg;
    msg << "training diverged at step " << state.step << ": encoder loss non-finite";
    throw TrainingDiverged(msg.str());
  }
  if (!std::isfinite(loss_dec)) {
    std::ostringstream msg;
    msg << "training diverged at step " << state.step << ": decoder loss non-finite";
    throw TrainingDiverged(msg.str());
  }

  // backward: decoder grads from L_dec only; encoder grads from both losses
  state.params.zero_grads();
  for (int i = 0; i < b; ++i) {
    const Embedding dalpha_dec = decode_backward(
        state.params, dec_caches[i], dec_terms[static_cast<std::size_t>(i)].grad_x);
    encode_backward(state.params, enc_caches[i], dalpha[i] + dalpha_dec);
  }

  const double lr = lr_schedule(state.step, cfg);
  adam_update(state.params, state.adam, lr);
  state.history.push_back({state.step, loss_enc, loss_dec, lr});
  state.step += 1;
}

// Number of encoder-loss OT solves a full run performs.
inline std::uint64_t planned_encoder_ot_solves(const TrainConfig& cfg) {
  const std::uint64_t per_step =
      static_cast<std::uint64_t>(cfg.batch_size) *
      static_cast<std::uint64_t>(cfg.batch_size - 1) / 2;
  return per_step * static_cast<std::uint64_t>(cfg.total_steps);
}

inline TrainState fit(const Cohort& cohort, const TrainConfig& cfg,
                      const ModelConfig& model_cfg) {
  cfg.validate();
  cohort.validate();
  if (cohort.size() < static_cast<std::size_t>(cfg.batch_size))
    throw std::invalid_argument("fit: cohort smaller than batch size");
  TrainState state;
  state.params = init_params(model_cfg, cfg.seed);
  state.adam = AdamState::like(state.params);
  for (int t = 0; t < cfg.total_steps; ++t) train_step(state, cohort, cfg);
  return state;
}

// Median cloud size, the default decoder output size.
inline int median_cloud_size(const Cohort& cohort) {
  std::vector<Eigen::Index> sizes;
  sizes.reserve(cohort.size());
  for (const auto& c : cohort.clouds) sizes.push_back(c.size());
  std::sort(sizes.begin(), sizes.end());
  return static_cast<int>(sizes[sizes.size() / 2]);
}

}  // namespace wormhole
