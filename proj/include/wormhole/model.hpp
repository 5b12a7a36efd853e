#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "wormhole/pointcloud.hpp"
#include "wormhole/rng.hpp"

namespace wormhole {

inline constexpr double kLayerNormEps = 1e-5;

struct ModelConfig {
  int input_dim = 2;
  int embed_dim = 128;
  int n_blocks = 3;
  int n_heads = 4;
  int ffn_hidden = 512;
  int decoder_points = 32;  // m, the median cloud size of the cohort

  void validate() const {
    if (input_dim < 1 || embed_dim < 1 || n_blocks < 1 || n_heads < 1 ||
        ffn_hidden < 1 || decoder_points < 1)
      throw std::invalid_argument("ModelConfig: all sizes must be >= 1");
    if (embed_dim % n_heads != 0)
      throw std::invalid_argument("ModelConfig: embed_dim must divide by n_heads");
  }
};

struct Param {
  Matrix value;
  Matrix grad;

  void init(Eigen::Index rows, Eigen::Index cols) {
    value = Matrix::Zero(rows, cols);
    grad = Matrix::Zero(rows, cols);
  }
};

struct LinearP {
  Param w;  // in x out
  Param b;  // 1 x out

  void init(Eigen::Index in, Eigen::Index out) {
    w.init(in, out);
    b.init(1, out);
  }
};

struct LayerNormP {
  Param gamma;  // 1 x k
  Param beta;   // 1 x k

  void init(Eigen::Index k) {
    gamma.init(1, k);
    gamma.value.setOnes();
    beta.init(1, k);
  }
};

struct BlockP {
  LayerNormP ln1, ln2;
  LinearP wq, wk, wv, wo;
  LinearP ffn1, ffn2;

  void init(Eigen::Index k, Eigen::Index hidden) {
    ln1.init(k);
    ln2.init(k);
    wq.init(k, k);
    wk.init(k, k);
    wv.init(k, k);
    wo.init(k, k);
    ffn1.init(k, hidden);
    ffn2.init(hidden, k);
  }
};

// All encoder and decoder weights.  Enumeration order in for_each_param is
// the canonical order used for initialization, Adam state and checkpoints.
struct ModelParams {
  ModelConfig cfg;
  LinearP embed;  // input_dim -> embed_dim
  std::vector<BlockP> enc_blocks;
  LinearP multiplier;  // embed_dim -> decoder_points * embed_dim
  std::vector<BlockP> dec_blocks;
  LinearP unembed;  // embed_dim -> input_dim

  template <class F>
  void for_each_param(F&& fn) {
    auto visit_linear = [&](const std::string& name, LinearP& lin) {
      fn(name + ".w", lin.w);
      fn(name + ".b", lin.b);
    };
    auto visit_block = [&](const std::string& name, BlockP& blk) {
      fn(name + ".ln1.gamma", blk.ln1.gamma);
      fn(name + ".ln1.beta", blk.ln1.beta);
      visit_linear(name + ".wq", blk.wq);
      visit_linear(name + ".wk", blk.wk);
      visit_linear(name + ".wv", blk.wv);
      visit_linear(name + ".wo", blk.wo);
      fn(name + ".ln2.gamma", blk.ln2.gamma);
      fn(name + ".ln2.beta", blk.ln2.beta);
      visit_linear(name + ".ffn1", blk.ffn1);
      visit_linear(name + ".ffn2", blk.ffn2);
    };
    visit_linear("encoder.embed", embed);
    for (std::size_t i = 0; i < enc_blocks.size(); ++i)
      visit_block("encoder.block" + std::to_string(i), enc_blocks[i]);
    visit_linear("decoder.multiplier", multiplier);
    for (std::size_t i = 0; i < dec_blocks.size(); ++i)
      visit_block("decoder.block" + std::to_string(i), dec_blocks[i]);
    visit_linear("decoder.unembed", unembed);
  }

  void zero_grads() {
    for_each_param([](const std::string&, Param& p) { p.grad.setZero(); });
  }
};

using Embedding = Vector;

inline ModelParams make_params(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.cfg = cfg;
  const Eigen::Index k = cfg.embed_dim;
  p.embed.init(cfg.input_dim, k);
  p.enc_blocks.resize(cfg.n_blocks);
  for (auto& b : p.enc_blocks) b.init(k, cfg.ffn_hidden);
  p.multiplier.init(k, static_cast<Eigen::Index>(cfg.decoder_points) * k);
  p.dec_blocks.resize(cfg.n_blocks);
  for (auto& b : p.dec_blocks) b.init(k, cfg.ffn_hidden);
  p.unembed.init(k, cfg.input_dim);
  return p;
}

// Glorot-uniform weights, zero biases, unit layer-norm gains; deterministic
// in the canonical parameter order.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = make_params(cfg);
  Rng rng(split_seed(seed, 17));
  p.for_each_param([&](const std::string& name, Param& par) {
    const bool is_weight = name.size() > 2 && name.substr(name.size() - 2) == ".w";
    if (!is_weight) return;  // biases stay zero, layer-norm params stay (1, 0)
    const double bound =
        std::sqrt(6.0 / static_cast<double>(par.value.rows() + par.value.cols()));
    for (Eigen::Index i = 0; i < par.value.rows(); ++i)
      for (Eigen::Index j = 0; j < par.value.cols(); ++j)
        par.value(i, j) = rng.uniform(-bound, bound);
  });
  return p;
}

// --- layer primitives -------------------------------------------------------

struct LinearCache {
  Matrix input;
};

inline Matrix linear_forward(const LinearP& lin, const Matrix& x,
                             LinearCache* cache) {
  if (cache) cache->input = x;
  Matrix out = x * lin.w.value;
  out.rowwise() += lin.b.value.row(0);
  return out;
}

inline Matrix linear_backward(LinearP& lin, const LinearCache& cache,
                              const Matrix& dout) {
  lin.w.grad.noalias() += cache.input.transpose() * dout;
  lin.b.grad.row(0) += dout.colwise().sum();
  return dout * lin.w.value.transpose();
}

struct LayerNormCache {
  Matrix xhat;
  Vector inv_std;  // per token
};

// Per-token normalization over the feature axis; permutation-safe because no
// statistic crosses tokens.
inline Matrix layer_norm_forward(const LayerNormP& ln, const Matrix& x,
                                 LayerNormCache* cache) {
  const Eigen::Index t = x.rows(), k = x.cols();
  Matrix xhat(t, k);
  Vector inv_std(t);
  for (Eigen::Index i = 0; i < t; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[i] = is;
    xhat.row(i) = (x.row(i).array() - mean) * is;
  }
  if (cache) {
    cache->xhat = xhat;
    cache->inv_std = inv_std;
  }
  Matrix out = (xhat.array().rowwise() * ln.gamma.value.row(0).array()).matrix();
  out.rowwise() += ln.beta.value.row(0);
  return out;
}

inline Matrix layer_norm_backward(LayerNormP& ln, const LayerNormCache& cache,
                                  const Matrix& dout) {
  const Eigen::Index t = dout.rows(), k = dout.cols();
  ln.gamma.grad.row(0) +=
      (dout.array() * cache.xhat.array()).colwise().sum().matrix();
  ln.beta.grad.row(0) += dout.colwise().sum();
  Matrix dx(t, k);
  for (Eigen::Index i = 0; i < t; ++i) {
    const Eigen::ArrayXd dxhat =
        dout.row(i).array() * ln.gamma.value.row(0).array();
    const Eigen::ArrayXd xh = cache.xhat.row(i).array();
    const double m1 = dxhat.mean();
    const double m2 = (dxhat * xh).mean();
    dx.row(i) = (cache.inv_std[i] * (dxhat - m1 - xh * m2)).matrix().transpose();
  }
  return dx;
}

inline double silu(double v) { return v / (1.0 + std::exp(-v)); }

inline double silu_grad(double v) {
  const double s = 1.0 / (1.0 + std::exp(-v));
  return s * (1.0 + v * (1.0 - s));
}

struct AttentionCache {
  Matrix input;                    // tokens fed to the projections
  Matrix q, k, v;                  // T x embed_dim
  std::vector<Matrix> weights;     // per head, T x T softmax rows
  Matrix concat;                   // T x embed_dim, pre output projection
};

// Multi-head self-attention with per-head scale 1/sqrt(head_dim), heads
// concatenated then output-projected.  No positional information anywhere,
// which keeps the operator exactly permutation-equivariant.
inline Matrix attention_forward(const LinearP& wq, const LinearP& wk,
                                const LinearP& wv, const LinearP& wo,
                                int n_heads, const Matrix& x,
                                AttentionCache* cache) {
  const Eigen::Index t = x.rows(), k = x.cols();
  const Eigen::Index dh = k / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix q = x * wq.w.value;
  q.rowwise() += wq.b.value.row(0);
  Matrix key = x * wk.w.value;
  key.rowwise() += wk.b.value.row(0);
  Matrix v = x * wv.w.value;
  v.rowwise() += wv.b.value.row(0);

  Matrix concat(t, k);
  std::vector<Matrix> weights(static_cast<std::size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    const auto qh = q.middleCols(h * dh, dh);
    const auto kh = key.middleCols(h * dh, dh);
    const auto vh = v.middleCols(h * dh, dh);
    Matrix scores = scale * (qh * kh.transpose());
    for (Eigen::Index i = 0; i < t; ++i) {
      const double mx = scores.row(i).maxCoeff();
      scores.row(i) = (scores.row(i).array() - mx).exp().matrix();
      scores.row(i) /= scores.row(i).sum();
    }
    weights[static_cast<std::size_t>(h)] = scores;
    concat.middleCols(h * dh, dh).noalias() = scores * vh;
  }
  if (cache) {
    cache->input = x;
    cache->q = q;
    cache->k = key;
    cache->v = v;
    cache->weights = weights;
    cache->concat = concat;
  }
  Matrix out = concat * wo.w.value;
  out.rowwise() += wo.b.value.row(0);
  return out;
}

inline Matrix attention_backward(LinearP& wq, LinearP& wk, LinearP& wv,
                                 LinearP& wo, int n_heads,
                                 const AttentionCache& cache,
                                 const Matrix& dout) {
  const Eigen::Index t = cache.input.rows(), k = cache.input.cols();
  const Eigen::Index dh = k / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  wo.w.grad.noalias() += cache.concat.transpose() * dout;
  wo.b.grad.row(0) += dout.colwise().sum();
  const Matrix dconcat = dout * wo.w.value.transpose();

  Matrix dq(t, k), dk(t, k), dv(t, k);
  for (int h = 0; h < n_heads; ++h) {
    const auto qh = cache.q.middleCols(h * dh, dh);
    const auto kh = cache.k.middleCols(h * dh, dh);
    const auto vh = cache.v.middleCols(h * dh, dh);
    const Matrix& a = cache.weights[static_cast<std::size_t>(h)];
    const auto doh = dconcat.middleCols(h * dh, dh);

    const Matrix da = doh * vh.transpose();
    dv.middleCols(h * dh, dh).noalias() = a.transpose() * doh;
    Matrix ds(t, t);
    for (Eigen::Index i = 0; i < t; ++i) {
      const double dot = a.row(i).dot(da.row(i));
      ds.row(i) = (a.row(i).array() * (da.row(i).array() - dot)).matrix();
    }
    dq.middleCols(h * dh, dh).noalias() = scale * (ds * kh);
    dk.middleCols(h * dh, dh).noalias() = scale * (ds.transpose() * qh);
  }

  Matrix dx = Matrix::Zero(t, k);
  wq.w.grad.noalias() += cache.input.transpose() * dq;
  wq.b.grad.row(0) += dq.colwise().sum();
  dx.noalias() += dq * wq.w.value.transpose();
  wk.w.grad.noalias() += cache.input.transpose() * dk;
  wk.b.grad.row(0) += dk.colwise().sum();
  dx.noalias() += dk * wk.w.value.transpose();
  wv.w.grad.noalias() += cache.input.transpose() * dv;
  wv.b.grad.row(0) += dv.colwise().sum();
  dx.noalias() += dv * wv.w.value.transpose();
  return dx;
}

struct FfnCache {
  Matrix input;
  Matrix hidden_pre;
  Matrix hidden_act;
};

struct BlockCache {
  LayerNormCache ln1, ln2;
  AttentionCache attn;
  FfnCache ffn;
};

// Pre-norm residual block: x + Attn(LN1(x)), then x + FFN(LN2(x)).
inline Matrix block_forward(const BlockP& blk, int n_heads, const Matrix& x,
                            BlockCache* cache) {
  const Matrix u =
      layer_norm_forward(blk.ln1, x, cache ? &cache->ln1 : nullptr);
  const Matrix a = attention_forward(blk.wq, blk.wk, blk.wv, blk.wo, n_heads,
                                     u, cache ? &cache->attn : nullptr);
  const Matrix x1 = x + a;
  const Matrix w =
      layer_norm_forward(blk.ln2, x1, cache ? &cache->ln2 : nullptr);
  Matrix hidden_pre = w * blk.ffn1.w.value;
  hidden_pre.rowwise() += blk.ffn1.b.value.row(0);
  const Matrix hidden_act = hidden_pre.unaryExpr([](double v) { return silu(v); });
  Matrix f = hidden_act * blk.ffn2.w.value;
  f.rowwise() += blk.ffn2.b.value.row(0);
  if (cache) {
    cache->ffn.input = w;
    cache->ffn.hidden_pre = hidden_pre;
    cache->ffn.hidden_act = hidden_act;
  }
  return x1 + f;
}

inline Matrix block_backward(BlockP& blk, int n_heads, const BlockCache& cache,
                             const Matrix& dout) {
  // FFN branch
  blk.ffn2.w.grad.noalias() += cache.ffn.hidden_act.transpose() * dout;
  blk.ffn2.b.grad.row(0) += dout.colwise().sum();
  Matrix dhidden = dout * blk.ffn2.w.value.transpose();
  dhidden.array() *=
      cache.ffn.hidden_pre.unaryExpr([](double v) { return silu_grad(v); }).array();
  blk.ffn1.w.grad.noalias() += cache.ffn.input.transpose() * dhidden;
  blk.ffn1.b.grad.row(0) += dhidden.colwise().sum();
  const Matrix dw = dhidden * blk.ffn1.w.value.transpose();

  Matrix dx1 = dout + layer_norm_backward(blk.ln2, cache.ln2, dw);
  const Matrix du =
      attention_backward(blk.wq, blk.wk, blk.wv, blk.wo, n_heads, cache.attn, dx1);
  return dx1 + layer_norm_backward(blk.ln1, cache.ln1, du);
}

// --- encoder / decoder ------------------------------------------------------

struct EncoderCache {
  LinearCache embed;
  std::vector<BlockCache> blocks;
  Eigen::Index n_tokens = 0;
};

// Embedding layer, attention blocks, then a mean over token embeddings; the
// pooling makes the map permutation invariant.
inline Embedding encode(const ModelParams& params, const PointCloud& cloud,
                        EncoderCache* cache = nullptr) {
  if (cloud.dim() != params.cfg.input_dim)
    throw std::invalid_argument("encode: cloud dimension does not match model");
  Matrix tokens = linear_forward(params.embed, cloud.points,
                                 cache ? &cache->embed : nullptr);
  if (cache) cache->blocks.resize(params.enc_blocks.size());
  for (std::size_t i = 0; i < params.enc_blocks.size(); ++i)
    tokens = block_forward(params.enc_blocks[i], params.cfg.n_heads, tokens,
                           cache ? &cache->blocks[i] : nullptr);
  if (cache) cache->n_tokens = tokens.rows();
  return tokens.colwise().mean().transpose();
}

// Cotangent of the mean pooling: each token receives dalpha / n.
inline Matrix pool_backward(const Embedding& dalpha, Eigen::Index n_tokens) {
  return Vector::Ones(n_tokens) * dalpha.transpose() /
         static_cast<double>(n_tokens);
}

inline Matrix encode_backward(ModelParams& params, const EncoderCache& cache,
                              const Embedding& dalpha) {
  Matrix dtokens = pool_backward(dalpha, cache.n_tokens);
  for (std::size_t i = params.enc_blocks.size(); i-- > 0;)
    dtokens = block_backward(params.enc_blocks[i], params.cfg.n_heads,
                             cache.blocks[i], dtokens);
  return linear_backward(params.embed, cache.embed, dtokens);
}

struct DecoderCache {
  LinearCache multiplier;
  std::vector<BlockCache> blocks;
  LinearCache unembed;
};

// Multiplier layer expands the embedding into decoder_points token
// embeddings; mirrored attention blocks and an unembedding map produce the
// output cloud.
inline PointCloud decode(const ModelParams& params, const Embedding& alpha,
                         DecoderCache* cache = nullptr) {
  const Eigen::Index k = params.cfg.embed_dim;
  const Eigen::Index m = params.cfg.decoder_points;
  const Matrix expanded = linear_forward(params.multiplier, alpha.transpose(),
                                         cache ? &cache->multiplier : nullptr);
  Matrix tokens(m, k);
  for (Eigen::Index i = 0; i < m; ++i)
    tokens.row(i) = expanded.row(0).segment(i * k, k);
  if (cache) cache->blocks.resize(params.dec_blocks.size());
  for (std::size_t i = 0; i < params.dec_blocks.size(); ++i)
    tokens = block_forward(params.dec_blocks[i], params.cfg.n_heads, tokens,
                           cache ? &cache->blocks[i] : nullptr);
  PointCloud out;
  out.points = linear_forward(params.unembed, tokens,
                              cache ? &cache->unembed : nullptr);
  return out;
}

inline Embedding decode_backward(ModelParams& params, const DecoderCache& cache,
                                 const Matrix& dcloud) {
  const Eigen::Index k = params.cfg.embed_dim;
  const Eigen::Index m = params.cfg.decoder_points;
  Matrix dtokens = linear_backward(params.unembed, cache.unembed, dcloud);
  for (std::size_t i = params.dec_blocks.size(); i-- > 0;)
    dtokens = block_backward(params.dec_blocks[i], params.cfg.n_heads,
                             cache.blocks[i], dtokens);
  Matrix dexpanded(1, m * k);
  for (Eigen::Index i = 0; i < m; ++i)
    dexpanded.row(0).segment(i * k, k) = dtokens.row(i);
  const Matrix dalpha = linear_backward(params.multiplier, cache.multiplier, dexpanded);
  return dalpha.row(0).transpose();
}

// --- variational operations -------------------------------------------------

inline PointCloud barycenter(const ModelParams& params,
                             const std::vector<Embedding>& embeddings) {
  if (embeddings.empty())
    throw std::invalid_argument("barycenter: empty embedding list");
  Embedding mean = Embedding::Zero(embeddings.front().size());
  for (const auto& e : embeddings) mean += e;
  mean /= static_cast<double>(embeddings.size());
  return decode(params, mean);
}

inline std::vector<PointCloud> interpolate(const ModelParams& params,
                                           const Embedding& a,
                                           const Embedding& b, int steps) {
  if (steps < 2) throw std::invalid_argument("interpolate: steps must be >= 2");
  std::vector<PointCloud> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (int s = 0; s < steps; ++s) {
    const double t = static_cast<double>(s) / static_cast<double>(steps - 1);
    out.push_back(decode(params, (1.0 - t) * a + t * b));
  }
  return out;
}

}  // namespace wormhole
