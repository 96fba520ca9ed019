#pragma once

#include <utility>

#include "skinseg/masks.hpp"
#include "skinseg/ops.hpp"
#include "skinseg/types.hpp"

namespace skinseg {

// ---------------------------------------------------------------------------
// Channel attention (CBAM channel sub-module)
// ---------------------------------------------------------------------------

/// Shared one-hidden-layer MLP applied to the avg- and max-pooled channel
/// descriptors; hidden size C/r, no biases.
template <class S>
struct ChannelAttentionParams {
  MatX<S> mlp_w1;  // (C/r) × C
  MatX<S> mlp_w2;  // C × (C/r)
  int reduction_ratio = 16;
};

template <class S>
struct ChannelAttentionGrads {
  MatX<S> mlp_w1;
  MatX<S> mlp_w2;
};

template <class S>
struct ChannelAttentionCache {
  MatX<S> input;            // C×N
  VecX<S> avg_desc, max_desc;
  std::vector<Eigen::Index> argmax;  // spatial argmax per channel
  VecX<S> h_avg, h_max;     // post-ReLU hidden activations
  VecX<S> gate;             // sigmoid output M_c
};

template <class S>
Tensor<S> channel_attention(const Tensor<S>& f, const ChannelAttentionParams<S>& p,
                            ChannelAttentionCache<S>* cache = nullptr) {
  const Eigen::Index c = f.m.rows();
  require(p.mlp_w1.cols() == c && p.mlp_w2.rows() == c &&
              p.mlp_w1.rows() == p.mlp_w2.cols(),
          "channel_attention: MLP dims disagree with channel count");
  require(p.reduction_ratio >= 1 && c % p.reduction_ratio == 0,
          "channel_attention: reduction ratio must divide channel count");

  VecX<S> avg_desc = f.m.rowwise().mean();
  VecX<S> max_desc(c);
  std::vector<Eigen::Index> argmax(static_cast<std::size_t>(c));
  for (Eigen::Index i = 0; i < c; ++i) {
    max_desc(i) = f.m.row(i).maxCoeff(&argmax[static_cast<std::size_t>(i)]);
  }

  VecX<S> h_avg = (p.mlp_w1 * avg_desc).cwiseMax(S(0));
  VecX<S> h_max = (p.mlp_w1 * max_desc).cwiseMax(S(0));
  VecX<S> logits = p.mlp_w2 * h_avg + p.mlp_w2 * h_max;
  VecX<S> gate = (S(1) / (S(1) + (-logits.array()).exp())).matrix();

  Tensor<S> y;
  y.h = f.h;
  y.w = f.w;
  y.m = f.m.array().colwise() * gate.array();
  if (cache) {
    cache->input = f.m;
    cache->avg_desc = std::move(avg_desc);
    cache->max_desc = std::move(max_desc);
    cache->argmax = std::move(argmax);
    cache->h_avg = std::move(h_avg);
    cache->h_max = std::move(h_max);
    cache->gate = std::move(gate);
  }
  return y;
}

template <class S>
Tensor<S> channel_attention_backward(const Tensor<S>& dy, const ChannelAttentionParams<S>& p,
                                     const ChannelAttentionCache<S>& c,
                                     ChannelAttentionGrads<S>& g) {
  const Eigen::Index n = c.input.cols();
  Tensor<S> dx;
  dx.h = dy.h;
  dx.w = dy.w;
  dx.m = dy.m.array().colwise() * c.gate.array();

  VecX<S> dgate = (dy.m.array() * c.input.array()).rowwise().sum().matrix();
  VecX<S> dlogits =
      dgate.array() * c.gate.array() * (S(1) - c.gate.array());

  g.mlp_w2.noalias() += dlogits * (c.h_avg + c.h_max).transpose();
  VecX<S> dh = p.mlp_w2.transpose() * dlogits;
  VecX<S> dh_avg_pre = (c.h_avg.array() > S(0)).select(dh, VecX<S>::Zero(dh.size()));
  VecX<S> dh_max_pre = (c.h_max.array() > S(0)).select(dh, VecX<S>::Zero(dh.size()));

  g.mlp_w1.noalias() += dh_avg_pre * c.avg_desc.transpose();
  g.mlp_w1.noalias() += dh_max_pre * c.max_desc.transpose();

  VecX<S> davg = p.mlp_w1.transpose() * dh_avg_pre;
  VecX<S> dmax = p.mlp_w1.transpose() * dh_max_pre;

  dx.m.colwise() += davg / S(n);
  for (Eigen::Index i = 0; i < dx.m.rows(); ++i) {
    dx.m(i, c.argmax[static_cast<std::size_t>(i)]) += dmax(i);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Spatial attention with the external body mask in the descriptor stack
// ---------------------------------------------------------------------------

/// 7×7 convolution over [channel-avg; channel-max; body mask].
template <class S>
struct SpatialAttentionParams {
  static constexpr int kKernel = 7;
  MatX<S> conv_kernel;  // 1 × (3·7·7)
  S bias = S(0);
};

template <class S>
struct SpatialAttentionGrads {
  MatX<S> conv_kernel;
  S bias = S(0);
};

template <class S>
struct SpatialAttentionCache {
  MatX<S> input;                      // C×N (the tensor being gated)
  std::vector<Eigen::Index> argmax;   // channel argmax per pixel
  Conv2dCache<S> conv;
  MatX<S> gate;                       // 1×N sigmoid map M_s
};

template <class S>
Tensor<S> spatial_body_attention(const Tensor<S>& fp, const BinaryMask& body,
                                 const SpatialAttentionParams<S>& p,
                                 SpatialAttentionCache<S>* cache = nullptr) {
  constexpr int k = SpatialAttentionParams<S>::kKernel;
  require(body.h() == fp.h && body.w() == fp.w,
          "spatial_body_attention: body mask dims disagree with tensor");
  require(p.conv_kernel.rows() == 1 && p.conv_kernel.cols() == 3 * k * k,
          "spatial_body_attention: kernel must be 1×(3·7·7)");

  const Eigen::Index n = fp.pixels();
  Tensor<S> desc(3, fp.h, fp.w);
  desc.m.row(0) = fp.m.colwise().mean();
  std::vector<Eigen::Index> argmax(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    desc.m(1, j) = fp.m.col(j).maxCoeff(&argmax[static_cast<std::size_t>(j)]);
  }
  desc.m.row(2) = flat_cast<S>(body.values).transpose();

  Conv2dCache<S> conv_cache;
  VecX<S> bias1(1);
  bias1(0) = p.bias;
  Tensor<S> z = conv2d(desc, p.conv_kernel, &bias1, k, 1, cache ? &conv_cache : nullptr);
  MatX<S> gate = sigmoid(z.m);

  Tensor<S> y;
  y.h = fp.h;
  y.w = fp.w;
  y.m = fp.m.array().rowwise() * gate.row(0).array();
  if (cache) {
    cache->input = fp.m;
    cache->argmax = std::move(argmax);
    cache->conv = std::move(conv_cache);
    cache->gate = std::move(gate);
  }
  return y;
}

template <class S>
Tensor<S> spatial_body_attention_backward(const Tensor<S>& dy, const SpatialAttentionParams<S>& p,
                                          const SpatialAttentionCache<S>& c,
                                          SpatialAttentionGrads<S>& g) {
  const Eigen::Index cn = c.input.rows();
  Tensor<S> dx;
  dx.h = dy.h;
  dx.w = dy.w;
  dx.m = dy.m.array().rowwise() * c.gate.row(0).array();

  MatX<S> dgate = (dy.m.array() * c.input.array()).colwise().sum().matrix();  // 1×N
  Tensor<S> dz;
  dz.h = dy.h;
  dz.w = dy.w;
  dz.m = (dgate.array() * c.gate.array() * (S(1) - c.gate.array())).matrix();

  VecX<S> dbias1 = VecX<S>::Zero(1);
  Tensor<S> ddesc = conv2d_backward(dz, p.conv_kernel, c.conv, g.conv_kernel, &dbias1);
  g.bias += dbias1(0);

  // avg row spreads evenly over channels; max row routes to the arg channel;
  // the body-mask row is an external input with no gradient.
  dx.m.rowwise() += ddesc.m.row(0) / S(cn);
  for (Eigen::Index j = 0; j < dx.m.cols(); ++j) {
    dx.m(c.argmax[static_cast<std::size_t>(j)], j) += ddesc.m(1, j);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Body attention block: channel then spatial gating plus residual input sum
// ---------------------------------------------------------------------------

template <class S>
struct BodyAttentionParams {
  ChannelAttentionParams<S> channel;
  SpatialAttentionParams<S> spatial;
};

template <class S>
struct BodyAttentionGrads {
  ChannelAttentionGrads<S> channel;
  SpatialAttentionGrads<S> spatial;
};

template <class S>
struct BodyAttentionCache {
  ChannelAttentionCache<S> channel;
  SpatialAttentionCache<S> spatial;
};

template <class S>
Tensor<S> body_attention_block(const Tensor<S>& f, const BinaryMask& body,
                               const BodyAttentionParams<S>& p,
                               BodyAttentionCache<S>* cache = nullptr) {
  Tensor<S> fp = channel_attention(f, p.channel, cache ? &cache->channel : nullptr);
  Tensor<S> fpp = spatial_body_attention(fp, body, p.spatial, cache ? &cache->spatial : nullptr);
  fpp.m += f.m;
  return fpp;
}

template <class S>
Tensor<S> body_attention_block_backward(const Tensor<S>& dy, const BodyAttentionParams<S>& p,
                                        const BodyAttentionCache<S>& c, BodyAttentionGrads<S>& g) {
  Tensor<S> dfp = spatial_body_attention_backward(dy, p.spatial, c.spatial, g.spatial);
  Tensor<S> df = channel_attention_backward(dfp, p.channel, c.channel, g.channel);
  df.m += dy.m;  // residual path
  return df;
}

// ---------------------------------------------------------------------------
// Skin attention: affinity of body embeddings to the mean face/hand embedding
// ---------------------------------------------------------------------------

template <class S>
struct SkinAffinityCache {
  MatX<S> k, q;        // projections, C×N
  VecX<S> fh, body;    // flattened masks as scalars
  S n_fh = S(0);
  VecX<S> mean_fh;     // mean face/hand column of masked K
  PlaneX<S> attention; // tanh output, H×W
};

/// Reduced-form affinity: instead of the N×N energy matrix E = Q̂ᵀK̂ averaged
/// over face/hand columns, compute S = Q̂ᵀ·m with m the mean face/hand column
/// of K̂ — identical values in O(N·C) memory. Empty face/hand mask yields an
/// all-zero map.
template <class S>
SkinProbMap<S> skin_affinity_map(const Tensor<S>& k, const Tensor<S>& q,
                                 const BinaryMask& face_hand, const BinaryMask& body,
                                 SkinAffinityCache<S>* cache = nullptr) {
  require(k.same_shape(q), "skin_affinity_map: K and Q must share shape");
  require(face_hand.h() == k.h && face_hand.w() == k.w && body.h() == k.h && body.w() == k.w,
          "skin_affinity_map: mask dims disagree with tensors");

  VecX<S> fh = flat_cast<S>(face_hand.values);
  VecX<S> bd = flat_cast<S>(body.values);
  const S n_fh = fh.sum();

  PlaneX<S> a;
  VecX<S> mean_fh = VecX<S>::Zero(k.m.rows());
  if (n_fh == S(0)) {
    a = PlaneX<S>::Zero(k.h, k.w);
  } else {
    mean_fh.noalias() = (k.m * fh) / n_fh;
    VecX<S> s = (q.m.transpose() * mean_fh).cwiseProduct(bd);
    a = Eigen::Map<const PlaneX<S>>(s.data(), k.h, k.w).array().tanh().matrix();
  }
  if (cache) {
    cache->k = k.m;
    cache->q = q.m;
    cache->fh = std::move(fh);
    cache->body = std::move(bd);
    cache->n_fh = n_fh;
    cache->mean_fh = std::move(mean_fh);
    cache->attention = a;
  }
  return a;
}

/// Backward of the affinity map. da is dL/dA (H×W); returns (dK, dQ).
template <class S>
std::pair<Tensor<S>, Tensor<S>> skin_affinity_map_backward(const PlaneX<S>& da,
                                                           const SkinAffinityCache<S>& c, int h,
                                                           int w) {
  Tensor<S> dk(static_cast<int>(c.k.rows()), h, w);
  Tensor<S> dq(static_cast<int>(c.q.rows()), h, w);
  if (c.n_fh == S(0)) return {std::move(dk), std::move(dq)};

  Eigen::Map<const VecX<S>> da_flat(da.data(), da.size());
  VecX<S> tanh_s = Eigen::Map<const VecX<S>>(c.attention.data(), c.attention.size());
  // ds = dA · (1 - tanh²) · body gate
  VecX<S> ds = (da_flat.array() * (S(1) - tanh_s.array().square()) * c.body.array()).matrix();

  dq.m.noalias() = c.mean_fh * ds.transpose();
  VecX<S> dm = c.q * ds;
  dk.m.noalias() = (dm / c.n_fh) * c.fh.transpose();
  return {std::move(dk), std::move(dq)};
}

/// 1×1 projections + per-channel standardization for K and Q, the trainable
/// gate omega, and the residual sum.
template <class S>
struct SkinAttentionParams {
  MatX<S> conv_k, conv_q;      // C×C
  VecX<S> gamma_k, beta_k;
  VecX<S> gamma_q, beta_q;
  S omega = S(1);
};

template <class S>
struct SkinAttentionGrads {
  MatX<S> conv_k, conv_q;
  VecX<S> gamma_k, beta_k;
  VecX<S> gamma_q, beta_q;
  S omega = S(0);
};

template <class S>
struct SkinAttentionCache {
  Tensor<S> input;
  Tensor<S> k_pre, q_pre;  // conv outputs before standardization
  StandardizeCache<S> std_k, std_q;
  SkinAffinityCache<S> affinity;
};

template <class S>
struct SkinAttentionOut {
  Tensor<S> tensor;        // T + omega·A broadcast over channels
  SkinProbMap<S> attention;  // pre-omega tanh map
};

template <class S>
SkinAttentionOut<S> skin_attention_block(const Tensor<S>& t, const PartMask& parts,
                                         const SkinAttentionParams<S>& p,
                                         SkinAttentionCache<S>* cache = nullptr) {
  require(parts.h() == t.h && parts.w() == t.w,
          "skin_attention_block: parts must be resized to the tensor dims");
  const BinaryMask fh = derive_face_hand_mask(parts);
  const BinaryMask body = derive_body_mask(parts);

  Tensor<S> k_pre = conv1x1(t, p.conv_k);
  Tensor<S> q_pre = conv1x1(t, p.conv_q);
  Tensor<S> k = standardize(k_pre, p.gamma_k, p.beta_k, cache ? &cache->std_k : nullptr);
  Tensor<S> q = standardize(q_pre, p.gamma_q, p.beta_q, cache ? &cache->std_q : nullptr);

  SkinAffinityCache<S> aff_cache;
  SkinProbMap<S> a = skin_affinity_map(k, q, fh, body, cache ? &aff_cache : nullptr);

  SkinAttentionOut<S> out;
  out.tensor.h = t.h;
  out.tensor.w = t.w;
  Eigen::Map<const VecX<S>> a_flat(a.data(), a.size());
  out.tensor.m = t.m.array().rowwise() + (p.omega * a_flat.transpose().array());
  out.attention = std::move(a);
  if (cache) {
    cache->input = t;
    cache->k_pre = std::move(k_pre);
    cache->q_pre = std::move(q_pre);
    cache->affinity = std::move(aff_cache);
  }
  return out;
}

/// Backward for the block. d_attention may be null when no loss consumes the
/// returned attention map directly.
template <class S>
Tensor<S> skin_attention_block_backward(const Tensor<S>& dy, const PlaneX<S>* d_attention,
                                        const SkinAttentionParams<S>& p,
                                        const SkinAttentionCache<S>& c, SkinAttentionGrads<S>& g) {
  const PlaneX<S>& a = c.affinity.attention;
  Eigen::Map<const VecX<S>> a_flat(a.data(), a.size());

  VecX<S> col_sum = dy.m.colwise().sum().transpose();
  g.omega += col_sum.dot(a_flat);

  PlaneX<S> da(dy.h, dy.w);
  Eigen::Map<VecX<S>>(da.data(), da.size()) = p.omega * col_sum;
  if (d_attention) da += *d_attention;

  auto [dk, dq] = skin_affinity_map_backward(da, c.affinity, dy.h, dy.w);

  Tensor<S> dk_pre = standardize_backward(dk, p.gamma_k, c.std_k, g.gamma_k, g.beta_k);
  Tensor<S> dq_pre = standardize_backward(dq, p.gamma_q, c.std_q, g.gamma_q, g.beta_q);

  Tensor<S> dt = conv1x1_backward(dk_pre, p.conv_k, c.input, g.conv_k);
  dt.m += conv1x1_backward(dq_pre, p.conv_q, c.input, g.conv_q).m;
  dt.m += dy.m;  // residual path
  return dt;
}

}  // namespace skinseg
