#include "skinseg/network.hpp"

#include <cmath>

namespace skinseg {

namespace {

void fill_uniform(MatX<Real>& m, Rng& rng, double limit) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = rng.uniform(-limit, limit);
    }
  }
}

/// Fan-in-scaled uniform init (He-style limit sqrt(6/fan_in)).
void init_conv_weight(MatX<Real>& m, Eigen::Index fan_in, Rng& rng) {
  fill_uniform(m, rng, std::sqrt(6.0 / static_cast<double>(fan_in)));
}

void add_ref(std::vector<ParamRef>& out, const std::string& name, MatX<Real>& v, MatX<Real>& g) {
  out.push_back({name, v.data(), g.data(), v.rows(), v.cols()});
}

void add_ref(std::vector<ParamRef>& out, const std::string& name, VecX<Real>& v, VecX<Real>& g) {
  out.push_back({name, v.data(), g.data(), v.size(), 1});
}

void add_ref(std::vector<ParamRef>& out, const std::string& name, Real& v, Real& g) {
  out.push_back({name, &v, &g, 1, 1});
}

}  // namespace

void ModelConfig::validate() const {
  if (input_size < 8 || input_size % 8 != 0) {
    throw ConfigError("input_size must be >= 8 and divisible by 8");
  }
  if (base_filters < 1 || expansion_factor < 1) {
    throw ConfigError("base_filters and expansion_factor must be >= 1");
  }
  for (int f : interaction_filters) {
    if (f < 1) throw ConfigError("interaction_filters must be >= 1");
  }
  for (int f : decoder_filters) {
    if (f < 1) throw ConfigError("decoder_filters must be >= 1");
  }
  if (reduction_ratio < 1 || decoder_filters[0] % reduction_ratio != 0) {
    throw ConfigError("reduction_ratio must divide the first decoder width");
  }
}

namespace nn {

// ---- ConvBlock -------------------------------------------------------------

void ConvBlock::init(int cin, int cout, int kk, int s, Rng& rng) {
  k = kk;
  stride = s;
  w.resize(cout, static_cast<Eigen::Index>(cin) * k * k);
  init_conv_weight(w, w.cols(), rng);
  gw = Mat::Zero(w.rows(), w.cols());
  gamma = Vec::Ones(cout);
  beta = Vec::Zero(cout);
  ggamma = Vec::Zero(cout);
  gbeta = Vec::Zero(cout);
}

T ConvBlock::forward(const T& x, bool train) {
  T c = conv2d<Real>(x, w, nullptr, k, stride, train ? &conv_cache : nullptr);
  T n = standardize(c, gamma, beta, train ? &std_cache : nullptr);
  return relu(n, train ? &relu_cache : nullptr);
}

T ConvBlock::backward(const T& dy) {
  T dn = relu_backward(dy, relu_cache);
  T dc = standardize_backward(dn, gamma, std_cache, ggamma, gbeta);
  return conv2d_backward<Real>(dc, w, conv_cache, gw, nullptr);
}

void ConvBlock::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  add_ref(out, prefix + ".conv.w", w, gw);
  add_ref(out, prefix + ".norm.gamma", gamma, ggamma);
  add_ref(out, prefix + ".norm.beta", beta, gbeta);
}

// ---- DwSepBlock ------------------------------------------------------------

void DwSepBlock::init(int cin, int cout, int s, Rng& rng) {
  stride = s;
  dw.resize(cin, 9);
  init_conv_weight(dw, 9, rng);
  gdw = Mat::Zero(dw.rows(), dw.cols());
  gamma1 = Vec::Ones(cin);
  beta1 = Vec::Zero(cin);
  ggamma1 = Vec::Zero(cin);
  gbeta1 = Vec::Zero(cin);
  pw.resize(cout, cin);
  init_conv_weight(pw, cin, rng);
  gpw = Mat::Zero(pw.rows(), pw.cols());
  gamma2 = Vec::Ones(cout);
  beta2 = Vec::Zero(cout);
  ggamma2 = Vec::Zero(cout);
  gbeta2 = Vec::Zero(cout);
}

T DwSepBlock::forward(const T& x, bool train) {
  T d = depthwise_conv2d(x, dw, 3, stride, train ? &dw_cache : nullptr);
  T n1 = standardize(d, gamma1, beta1, train ? &std1_cache : nullptr);
  T a1 = relu(n1, train ? &relu1_cache : nullptr);
  if (train) pw_input = a1;
  T p = conv1x1(a1, pw);
  T n2 = standardize(p, gamma2, beta2, train ? &std2_cache : nullptr);
  return relu(n2, train ? &relu2_cache : nullptr);
}

T DwSepBlock::backward(const T& dy) {
  T dn2 = relu_backward(dy, relu2_cache);
  T dp = standardize_backward(dn2, gamma2, std2_cache, ggamma2, gbeta2);
  T da1 = conv1x1_backward(dp, pw, pw_input, gpw);
  T dn1 = relu_backward(da1, relu1_cache);
  T dd = standardize_backward(dn1, gamma1, std1_cache, ggamma1, gbeta1);
  return depthwise_conv2d_backward(dd, dw, dw_cache, gdw);
}

void DwSepBlock::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  add_ref(out, prefix + ".dw.w", dw, gdw);
  add_ref(out, prefix + ".norm1.gamma", gamma1, ggamma1);
  add_ref(out, prefix + ".norm1.beta", beta1, gbeta1);
  add_ref(out, prefix + ".pw.w", pw, gpw);
  add_ref(out, prefix + ".norm2.gamma", gamma2, ggamma2);
  add_ref(out, prefix + ".norm2.beta", beta2, gbeta2);
}

// ---- InvResidualBlock ------------------------------------------------------

void InvResidualBlock::init(int cin, int cout, int expansion, int s, Rng& rng) {
  stride = s;
  shortcut = (s == 1 && cin == cout);
  const int mid = cin * expansion;
  w_expand.resize(mid, cin);
  init_conv_weight(w_expand, cin, rng);
  gw_expand = Mat::Zero(w_expand.rows(), w_expand.cols());
  gamma1 = Vec::Ones(mid);
  beta1 = Vec::Zero(mid);
  ggamma1 = Vec::Zero(mid);
  gbeta1 = Vec::Zero(mid);
  dw.resize(mid, 9);
  init_conv_weight(dw, 9, rng);
  gdw = Mat::Zero(dw.rows(), dw.cols());
  gamma2 = Vec::Ones(mid);
  beta2 = Vec::Zero(mid);
  ggamma2 = Vec::Zero(mid);
  gbeta2 = Vec::Zero(mid);
  w_project.resize(cout, mid);
  init_conv_weight(w_project, mid, rng);
  gw_project = Mat::Zero(w_project.rows(), w_project.cols());
  gamma3 = Vec::Ones(cout);
  beta3 = Vec::Zero(cout);
  ggamma3 = Vec::Zero(cout);
  gbeta3 = Vec::Zero(cout);
}

T InvResidualBlock::forward(const T& x, bool train) {
  if (train) input = x;
  T e = conv1x1(x, w_expand);
  T n1 = standardize(e, gamma1, beta1, train ? &std1_cache : nullptr);
  T a1 = relu(n1, train ? &relu1_cache : nullptr);
  if (train) expand_out_act = a1;
  T d = depthwise_conv2d(a1, dw, 3, stride, train ? &dw_cache : nullptr);
  T n2 = standardize(d, gamma2, beta2, train ? &std2_cache : nullptr);
  T a2 = relu(n2, train ? &relu2_cache : nullptr);
  if (train) dw_out_act = a2;
  T p = conv1x1(a2, w_project);
  T n3 = standardize(p, gamma3, beta3, train ? &std3_cache : nullptr);
  if (shortcut) n3.m += x.m;
  return n3;
}

T InvResidualBlock::backward(const T& dy) {
  T dp = standardize_backward(dy, gamma3, std3_cache, ggamma3, gbeta3);
  T da2 = conv1x1_backward(dp, w_project, dw_out_act, gw_project);
  T dn2 = relu_backward(da2, relu2_cache);
  T dd = standardize_backward(dn2, gamma2, std2_cache, ggamma2, gbeta2);
  T da1 = depthwise_conv2d_backward(dd, dw, dw_cache, gdw);
  T dn1 = relu_backward(da1, relu1_cache);
  T de = standardize_backward(dn1, gamma1, std1_cache, ggamma1, gbeta1);
  T dx = conv1x1_backward(de, w_expand, input, gw_expand);
  if (shortcut) dx.m += dy.m;
  return dx;
}

void InvResidualBlock::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  add_ref(out, prefix + ".expand.w", w_expand, gw_expand);
  add_ref(out, prefix + ".norm1.gamma", gamma1, ggamma1);
  add_ref(out, prefix + ".norm1.beta", beta1, gbeta1);
  add_ref(out, prefix + ".dw.w", dw, gdw);
  add_ref(out, prefix + ".norm2.gamma", gamma2, ggamma2);
  add_ref(out, prefix + ".norm2.beta", beta2, gbeta2);
  add_ref(out, prefix + ".project.w", w_project, gw_project);
  add_ref(out, prefix + ".norm3.gamma", gamma3, ggamma3);
  add_ref(out, prefix + ".norm3.beta", beta3, gbeta3);
}

// ---- InteractionModule -----------------------------------------------------

void InteractionModule::init(int cin, const std::array<int, 3>& filters, int expansion,
                             Rng& rng) {
  const std::array<int, 3> strides{1, 2, 4};
  for (int i = 0; i < 3; ++i) {
    branches[static_cast<std::size_t>(i)].init(cin, filters[static_cast<std::size_t>(i)],
                                               expansion, strides[static_cast<std::size_t>(i)],
                                               rng);
  }
}

T InteractionModule::forward(const T& x, bool train) {
  in_h = x.h;
  in_w = x.w;
  std::array<T, 3> outs;
  Eigen::Index total_c = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    T b = branches[i].forward(x, train);
    branch_h[i] = b.h;
    branch_w[i] = b.w;
    if (b.h != x.h || b.w != x.w) b = bilinear_resize(b, x.h, x.w);
    total_c += b.m.rows();
    outs[i] = std::move(b);
  }
  T y(static_cast<int>(total_c), x.h, x.w);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    y.m.middleRows(row, outs[i].m.rows()) = outs[i].m;
    row += outs[i].m.rows();
  }
  return y;
}

T InteractionModule::backward(const T& dy) {
  T dx;
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const Eigen::Index bc = branches[i].w_project.rows();
    T chunk;
    chunk.h = dy.h;
    chunk.w = dy.w;
    chunk.m = dy.m.middleRows(row, bc);
    row += bc;
    if (branch_h[i] != dy.h || branch_w[i] != dy.w) {
      chunk = bilinear_resize_backward(chunk, branch_h[i], branch_w[i]);
    }
    T dxi = branches[i].backward(chunk);
    if (i == 0) {
      dx = std::move(dxi);
    } else {
      dx.m += dxi.m;
    }
  }
  return dx;
}

void InteractionModule::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  for (std::size_t i = 0; i < 3; ++i) {
    branches[i].collect(prefix + ".branch" + std::to_string(i), out);
  }
}

// ---- SkipProject -----------------------------------------------------------

void SkipProject::init(int cin, int cout, Rng& rng) {
  w.resize(cout, cin);
  init_conv_weight(w, cin, rng);
  gw = Mat::Zero(w.rows(), w.cols());
}

T SkipProject::forward(const T& x, bool train) {
  if (train) input = x;
  return conv1x1(x, w);
}

T SkipProject::backward(const T& dy) { return conv1x1_backward(dy, w, input, gw); }

void SkipProject::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  add_ref(out, prefix + ".w", w, gw);
}

// ---- BodyAttentionStage ----------------------------------------------------

void BodyAttentionStage::init(int channels, int reduction_ratio, Rng& rng) {
  const int hidden = channels / reduction_ratio;
  params.channel.reduction_ratio = reduction_ratio;
  params.channel.mlp_w1.resize(hidden, channels);
  init_conv_weight(params.channel.mlp_w1, channels, rng);
  params.channel.mlp_w2.resize(channels, hidden);
  init_conv_weight(params.channel.mlp_w2, hidden, rng);
  grads.channel.mlp_w1 = Mat::Zero(hidden, channels);
  grads.channel.mlp_w2 = Mat::Zero(channels, hidden);
  constexpr int kk = SpatialAttentionParams<Real>::kKernel;
  params.spatial.conv_kernel.resize(1, 3 * kk * kk);
  init_conv_weight(params.spatial.conv_kernel, 3 * kk * kk, rng);
  params.spatial.bias = 0;
  grads.spatial.conv_kernel = Mat::Zero(1, 3 * kk * kk);
  grads.spatial.bias = 0;
}

T BodyAttentionStage::forward(const T& x, const BinaryMask& body, bool train) {
  last_h = x.h;
  last_w = x.w;
  return body_attention_block(x, body, params, train ? &cache : nullptr);
}

T BodyAttentionStage::backward(const T& dy) {
  return body_attention_block_backward(dy, params, cache, grads);
}

void BodyAttentionStage::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  add_ref(out, prefix + ".channel.mlp_w1", params.channel.mlp_w1, grads.channel.mlp_w1);
  add_ref(out, prefix + ".channel.mlp_w2", params.channel.mlp_w2, grads.channel.mlp_w2);
  add_ref(out, prefix + ".spatial.kernel", params.spatial.conv_kernel, grads.spatial.conv_kernel);
  add_ref(out, prefix + ".spatial.bias", params.spatial.bias, grads.spatial.bias);
}

// ---- SkinAttentionStage ----------------------------------------------------

void SkinAttentionStage::init(int channels, Rng& rng) {
  // K and Q start as the same projection: the initial affinity is then a
  // self-similarity, positive on pixels resembling the face/hand embedding,
  // which anchors the sign of the attention map (training separates them).
  params.conv_k.resize(channels, channels);
  init_conv_weight(params.conv_k, channels, rng);
  params.conv_q = params.conv_k;
  // Small initial scales keep the pre-tanh similarity (std ~ sqrt(C) at unit
  // scale) out of tanh saturation, so the affinity map can actually train.
  params.gamma_k = Vec::Constant(channels, 0.45);
  params.beta_k = Vec::Zero(channels);
  params.gamma_q = Vec::Constant(channels, 0.45);
  params.beta_q = Vec::Zero(channels);
  params.omega = 1.0;  // paper reports only the converged value (1.3)
  grads.conv_k = Mat::Zero(channels, channels);
  grads.conv_q = Mat::Zero(channels, channels);
  grads.gamma_k = Vec::Zero(channels);
  grads.beta_k = Vec::Zero(channels);
  grads.gamma_q = Vec::Zero(channels);
  grads.beta_q = Vec::Zero(channels);
  grads.omega = 0.0;
}

SkinAttentionOut<Real> SkinAttentionStage::forward(const T& x, const PartMask& parts,
                                                   bool train) {
  last_h = x.h;
  last_w = x.w;
  return skin_attention_block(x, parts, params, train ? &cache : nullptr);
}

T SkinAttentionStage::backward(const T& dy) {
  return skin_attention_block_backward<Real>(dy, nullptr, params, cache, grads);
}

void SkinAttentionStage::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  add_ref(out, prefix + ".conv_k.w", params.conv_k, grads.conv_k);
  add_ref(out, prefix + ".norm_k.gamma", params.gamma_k, grads.gamma_k);
  add_ref(out, prefix + ".norm_k.beta", params.beta_k, grads.beta_k);
  add_ref(out, prefix + ".conv_q.w", params.conv_q, grads.conv_q);
  add_ref(out, prefix + ".norm_q.gamma", params.gamma_q, grads.gamma_q);
  add_ref(out, prefix + ".norm_q.beta", params.beta_q, grads.beta_q);
  add_ref(out, prefix + ".omega", params.omega, grads.omega);
}

// ---- HeadBlock ---------------------------------------------------------------

void HeadBlock::init(int cin, Rng& rng) {
  w.resize(1, static_cast<Eigen::Index>(cin) * 9);
  init_conv_weight(w, w.cols(), rng);
  gw = Mat::Zero(1, w.cols());
  bias = Vec::Zero(1);
  gbias = Vec::Zero(1);
}

T HeadBlock::forward(const T& x, bool train) {
  return conv2d(x, w, &bias, 3, 1, train ? &conv_cache : nullptr);
}

T HeadBlock::backward(const T& dy) { return conv2d_backward(dy, w, conv_cache, gw, &gbias); }

void HeadBlock::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  add_ref(out, prefix + ".w", w, gw);
  add_ref(out, prefix + ".bias", bias, gbias);
}

}  // namespace nn

// ---- Model -------------------------------------------------------------------

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const int bf = cfg_.base_filters;
  enc1_.init(3, bf, 3, 2, rng);
  enc2_.init(bf, 2 * bf, 2, rng);
  enc3_.init(2 * bf, 2 * bf, 2, rng);
  interaction_.init(2 * bf, cfg_.interaction_filters, cfg_.expansion_factor, rng);
  const int ci = cfg_.interaction_filters[0] + cfg_.interaction_filters[1] +
                 cfg_.interaction_filters[2];
  dec1_.init(ci, cfg_.decoder_filters[0], 3, 1, rng);
  skip1_.init(2 * bf, cfg_.decoder_filters[0], rng);
  body_attn_.init(cfg_.decoder_filters[0], cfg_.reduction_ratio, rng);
  dec2_.init(cfg_.decoder_filters[0], cfg_.decoder_filters[1], 3, 1, rng);
  skip2_.init(bf, cfg_.decoder_filters[1], rng);
  skin_attn_.init(cfg_.decoder_filters[1], rng);
  dec3_.init(cfg_.decoder_filters[1], cfg_.decoder_filters[2], 3, 1, rng);
  head_.init(cfg_.decoder_filters[2], rng);

  for (const auto& ref : param_refs()) parameter_count_ += ref.size();
}

std::vector<ParamRef> Model::param_refs() {
  std::vector<ParamRef> out;
  enc1_.collect("enc1", out);
  enc2_.collect("enc2", out);
  enc3_.collect("enc3", out);
  interaction_.collect("interaction", out);
  dec1_.collect("dec1", out);
  skip1_.collect("skip1", out);
  body_attn_.collect("body_attn", out);
  dec2_.collect("dec2", out);
  skip2_.collect("skip2", out);
  skin_attn_.collect("skin_attn", out);
  dec3_.collect("dec3", out);
  head_.collect("head", out);
  return out;
}

void Model::zero_grads() {
  for (auto& ref : param_refs()) {
    Eigen::Map<VecX<Real>>(ref.grad, ref.size()).setZero();
  }
}

ForwardResult Model::forward(const Tensor<Real>& img, const PartMask& parts, bool train) {
  require(img.h == cfg_.input_size && img.w == cfg_.input_size,
          "forward: image dims must equal cfg.input_size");
  require(parts.h() == img.h && parts.w() == img.w, "forward: parts dims must match image");
  require(img.channels() == 3, "forward: image must have 3 channels");
  in_h_ = img.h;
  in_w_ = img.w;
  const int h2 = in_h_ / 2, w2 = in_w_ / 2;
  const int h4 = in_h_ / 4, w4 = in_w_ / 4;

  const BinaryMask body_full = derive_body_mask(parts);

  nn::T x1 = enc1_.forward(img, train);       // 1/2
  nn::T x2 = enc2_.forward(x1, train);        // 1/4
  nn::T x3 = enc3_.forward(x2, train);        // 1/8
  nn::T t = interaction_.forward(x3, train);  // 1/8

  nn::T u1 = bilinear_resize(t, h4, w4);
  nn::T d1 = dec1_.forward(u1, train);
  d1.m += skip1_.forward(x2, train).m;
  const BinaryMask body_q = resize_mask(body_full, h4, w4);
  nn::T d1a = body_attn_.forward(d1, body_q, train);

  nn::T u2 = bilinear_resize(d1a, h2, w2);
  nn::T d2 = dec2_.forward(u2, train);
  d2.m += skip2_.forward(x1, train).m;
  const PartMask parts_half = resize_parts(parts, h2, w2);
  SkinAttentionOut<Real> sa = skin_attn_.forward(d2, parts_half, train);

  nn::T u3 = bilinear_resize(sa.tensor, in_h_, in_w_);
  nn::T d3 = dec3_.forward(u3, train);
  nn::T logits = head_.forward(d3, train);

  ForwardResult res;
  res.prob = sigmoid(Eigen::Map<const PlaneX<Real>>(logits.m.row(0).data(), in_h_, in_w_).eval());
  // nearest-neighbor: interpolating across the body boundary would bleed the
  // off-body zeros into the skin ring and corrupt the probability map there
  res.attention = (sa.attention.rows() == in_h_ && sa.attention.cols() == in_w_)
                      ? sa.attention
                      : nearest_resize_plane(sa.attention, in_h_, in_w_);
  prob_ = res.prob;
  return res;
}

void Model::backward(const PlaneX<Real>& dprob) {
  require(dprob.rows() == in_h_ && dprob.cols() == in_w_, "backward: dprob dims mismatch");
  const int h2 = in_h_ / 2, w2 = in_w_ / 2;
  const int h4 = in_h_ / 4, w4 = in_w_ / 4;
  const int h8 = in_h_ / 8, w8 = in_w_ / 8;

  nn::T dlogits(1, in_h_, in_w_);
  dlogits.m.row(0) =
      (Eigen::Map<const VecX<Real>>(dprob.data(), dprob.size()).array() *
       Eigen::Map<const VecX<Real>>(prob_.data(), prob_.size()).array() *
       (1.0 - Eigen::Map<const VecX<Real>>(prob_.data(), prob_.size()).array()))
          .transpose()
          .matrix();

  nn::T dd3 = head_.backward(dlogits);
  nn::T du3 = dec3_.backward(dd3);
  nn::T dsa = bilinear_resize_backward(du3, h2, w2);

  nn::T dd2 = skin_attn_.backward(dsa);
  nn::T de1_extra = skip2_.backward(dd2);
  nn::T du2 = dec2_.backward(dd2);
  nn::T dd1a = bilinear_resize_backward(du2, h4, w4);

  nn::T dd1 = body_attn_.backward(dd1a);
  nn::T de2_extra = skip1_.backward(dd1);
  nn::T du1 = dec1_.backward(dd1);
  nn::T dt = bilinear_resize_backward(du1, h8, w8);

  nn::T dx3 = interaction_.backward(dt);
  nn::T dx2 = enc3_.backward(dx3);
  dx2.m += de2_extra.m;
  nn::T dx1 = enc2_.backward(dx2);
  dx1.m += de1_extra.m;
  (void)enc1_.backward(dx1);
}

std::int64_t parameter_count(Model& model) { return model.parameter_count(); }

}  // namespace skinseg
