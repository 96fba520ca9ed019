#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "skinseg/attention.hpp"
#include "skinseg/ops.hpp"
#include "skinseg/rng.hpp"
#include "skinseg/types.hpp"

namespace skinseg {

struct ModelConfig {
  int input_size = 256;
  int base_filters = 32;  // encoder: base, then two depthwise-separable stages at 2×base
  std::array<int, 3> interaction_filters{64, 96, 128};
  int expansion_factor = 6;
  std::array<int, 3> decoder_filters{96, 64, 32};
  int reduction_ratio = 16;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Named view into one trainable array (values + gradient accumulator).
struct ParamRef {
  std::string name;
  Real* value = nullptr;
  Real* grad = nullptr;
  Eigen::Index rows = 0, cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

namespace nn {

using T = Tensor<Real>;
using Mat = MatX<Real>;
using Vec = VecX<Real>;

/// k×k conv (no bias) + per-channel standardization + ReLU.
struct ConvBlock {
  int k = 3, stride = 1;
  Mat w, gw;
  Vec gamma, ggamma, beta, gbeta;
  Conv2dCache<Real> conv_cache;
  StandardizeCache<Real> std_cache;
  ReluCache<Real> relu_cache;

  void init(int cin, int cout, int kk, int s, Rng& rng);
  T forward(const T& x, bool train);
  T backward(const T& dy);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

/// Depthwise 3×3 (stride s) + norm + ReLU, then pointwise 1×1 + norm + ReLU.
struct DwSepBlock {
  int stride = 2;
  Mat dw, gdw;
  Vec gamma1, ggamma1, beta1, gbeta1;
  Mat pw, gpw;
  Vec gamma2, ggamma2, beta2, gbeta2;
  DwConvCache<Real> dw_cache;
  StandardizeCache<Real> std1_cache, std2_cache;
  ReluCache<Real> relu1_cache, relu2_cache;
  T pw_input;

  void init(int cin, int cout, int s, Rng& rng);
  T forward(const T& x, bool train);
  T backward(const T& dy);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

/// Inverted residual: 1×1 expand + norm/ReLU, 3×3 depthwise (stride s) +
/// norm/ReLU, 1×1 project + norm; identity shortcut when stride 1 and the
/// channel count is preserved.
struct InvResidualBlock {
  int stride = 1;
  bool shortcut = false;
  Mat w_expand, gw_expand;
  Vec gamma1, ggamma1, beta1, gbeta1;
  Mat dw, gdw;
  Vec gamma2, ggamma2, beta2, gbeta2;
  Mat w_project, gw_project;
  Vec gamma3, ggamma3, beta3, gbeta3;

  T input, expand_out_act, dw_out_act;
  StandardizeCache<Real> std1_cache, std2_cache, std3_cache;
  ReluCache<Real> relu1_cache, relu2_cache;
  DwConvCache<Real> dw_cache;

  void init(int cin, int cout, int expansion, int s, Rng& rng);
  T forward(const T& x, bool train);
  T backward(const T& dy);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

/// Three parallel inverted-residual branches at strides {1,2,4}; outputs are
/// bilinearly upsampled back to the input resolution and concatenated.
struct InteractionModule {
  std::array<InvResidualBlock, 3> branches;
  std::array<int, 3> branch_h{}, branch_w{};
  int in_h = 0, in_w = 0;

  void init(int cin, const std::array<int, 3>& filters, int expansion, Rng& rng);
  T forward(const T& x, bool train);
  T backward(const T& dy);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

/// 1×1 projection for an additive encoder→decoder skip connection.
struct SkipProject {
  Mat w, gw;
  T input;

  void init(int cin, int cout, Rng& rng);
  T forward(const T& x, bool train);
  T backward(const T& dy);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

struct BodyAttentionStage {
  BodyAttentionParams<Real> params;
  BodyAttentionGrads<Real> grads;
  BodyAttentionCache<Real> cache;
  int last_h = 0, last_w = 0;

  void init(int channels, int reduction_ratio, Rng& rng);
  T forward(const T& x, const BinaryMask& body, bool train);
  T backward(const T& dy);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

struct SkinAttentionStage {
  SkinAttentionParams<Real> params;
  SkinAttentionGrads<Real> grads;
  SkinAttentionCache<Real> cache;
  int last_h = 0, last_w = 0;

  void init(int channels, Rng& rng);
  SkinAttentionOut<Real> forward(const T& x, const PartMask& parts, bool train);
  T backward(const T& dy);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

/// 3×3 conv with bias down to one channel; the sigmoid lives in Model.
struct HeadBlock {
  Mat w, gw;
  Vec bias, gbias;
  Conv2dCache<Real> conv_cache;

  void init(int cin, Rng& rng);
  T forward(const T& x, bool train);
  T backward(const T& dy);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
};

}  // namespace nn

struct ForwardResult {
  PlaneX<Real> prob;       // sigmoid output in [0,1], input resolution
  PlaneX<Real> attention;  // pre-omega skin-attention map, upsampled to input resolution
};

/// The full segmentation model. Forward passes are pure w.r.t. parameters;
/// training (forward with train=true, then backward) mutates the per-block
/// caches and gradient accumulators, single-threaded.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return cfg_; }

  ForwardResult forward(const Tensor<Real>& img, const PartMask& parts, bool train = false);

  /// Backpropagates dL/dprob through the whole graph, accumulating parameter
  /// gradients. Requires a preceding forward(train=true).
  void backward(const PlaneX<Real>& dprob);

  void zero_grads();
  std::vector<ParamRef> param_refs();
  std::int64_t parameter_count() const { return parameter_count_; }

  /// Working resolution of the attention stages during the last forward.
  std::pair<int, int> body_attention_resolution() const {
    return {body_attn_.last_h, body_attn_.last_w};
  }
  std::pair<int, int> skin_attention_resolution() const {
    return {skin_attn_.last_h, skin_attn_.last_w};
  }

 private:
  ModelConfig cfg_;
  nn::ConvBlock enc1_;
  nn::DwSepBlock enc2_, enc3_;
  nn::InteractionModule interaction_;
  nn::ConvBlock dec1_, dec2_, dec3_;
  nn::SkipProject skip1_, skip2_;
  nn::BodyAttentionStage body_attn_;
  nn::SkinAttentionStage skin_attn_;
  nn::HeadBlock head_;
  std::int64_t parameter_count_ = 0;

  // forward stash for backward
  int in_h_ = 0, in_w_ = 0;
  PlaneX<Real> prob_;
};

std::int64_t parameter_count(Model& model);

}  // namespace skinseg
