#include <doctest.h>

#include <cstring>

#include "oracles.hpp"
#include "skinseg/attention.hpp"

using namespace skinseg;

namespace {

/// Straight-line re-implementation of the channel gate: sigmoid of the summed
/// shared-MLP responses to the avg- and max-pooled descriptors.
Tensor<double> channel_attention_oracle(const Tensor<double>& f,
                                        const ChannelAttentionParams<double>& p) {
  const int c = f.channels();
  const int hidden = static_cast<int>(p.mlp_w1.rows());
  std::vector<double> avg(c), mx(c);
  for (int i = 0; i < c; ++i) {
    double s = 0.0, m = f.m(i, 0);
    for (Eigen::Index j = 0; j < f.pixels(); ++j) {
      s += f.m(i, j);
      m = std::max(m, f.m(i, j));
    }
    avg[i] = s / static_cast<double>(f.pixels());
    mx[i] = m;
  }
  auto mlp = [&](const std::vector<double>& v) {
    std::vector<double> h(hidden, 0.0), out(c, 0.0);
    for (int a = 0; a < hidden; ++a) {
      for (int b = 0; b < c; ++b) h[a] += p.mlp_w1(a, b) * v[b];
      h[a] = std::max(0.0, h[a]);
    }
    for (int a = 0; a < c; ++a) {
      for (int b = 0; b < hidden; ++b) out[a] += p.mlp_w2(a, b) * h[b];
    }
    return out;
  };
  const std::vector<double> r1 = mlp(avg), r2 = mlp(mx);
  Tensor<double> y(c, f.h, f.w);
  for (int i = 0; i < c; ++i) {
    const double gate = 1.0 / (1.0 + std::exp(-(r1[i] + r2[i])));
    for (Eigen::Index j = 0; j < f.pixels(); ++j) y.m(i, j) = gate * f.m(i, j);
  }
  return y;
}

ChannelAttentionParams<double> random_channel_params(int c, int r, Rng& rng) {
  ChannelAttentionParams<double> p;
  p.reduction_ratio = r;
  p.mlp_w1 = oracle::random_weights<double>(c / r, c, rng);
  p.mlp_w2 = oracle::random_weights<double>(c, c / r, rng);
  return p;
}

Tensor<double> standardize_oracle(const Tensor<double>& x, double eps = 1e-5) {
  Tensor<double> y(x.channels(), x.h, x.w);
  for (int c = 0; c < x.channels(); ++c) {
    double mu = 0.0;
    for (Eigen::Index j = 0; j < x.pixels(); ++j) mu += x.m(c, j);
    mu /= static_cast<double>(x.pixels());
    double var = 0.0;
    for (Eigen::Index j = 0; j < x.pixels(); ++j) var += (x.m(c, j) - mu) * (x.m(c, j) - mu);
    var /= static_cast<double>(x.pixels());
    for (Eigen::Index j = 0; j < x.pixels(); ++j) {
      y.m(c, j) = (x.m(c, j) - mu) / std::sqrt(var + eps);
    }
  }
  return y;
}

}  // namespace

TEST_CASE("channel_attention: zero MLP halves every channel") {
  Rng rng(1);
  const Tensor<double> f = oracle::random_tensor<double>(8, 3, 5, rng);
  ChannelAttentionParams<double> p;
  p.reduction_ratio = 4;
  p.mlp_w1 = MatX<double>::Zero(2, 8);
  p.mlp_w2 = MatX<double>::Zero(8, 2);
  const Tensor<double> y = channel_attention(f, p);
  CHECK((y.m - 0.5 * f.m).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("channel_attention: spatially constant input degenerates to sigmoid(2·MLP(v))") {
  Rng rng(2);
  const int c = 4;
  ChannelAttentionParams<double> p = random_channel_params(c, 2, rng);
  Tensor<double> f(c, 3, 3);
  VecX<double> v(c);
  for (int i = 0; i < c; ++i) {
    v(i) = rng.uniform(-1.0, 1.0);
    f.m.row(i).setConstant(v(i));
  }
  const Tensor<double> y = channel_attention(f, p);
  const VecX<double> hidden = (p.mlp_w1 * v).cwiseMax(0.0);
  const VecX<double> gate =
      (1.0 / (1.0 + (-2.0 * (p.mlp_w2 * hidden).array()).exp())).matrix();
  for (int i = 0; i < c; ++i) {
    CHECK(y.m(i, 0) == doctest::Approx(gate(i) * v(i)).epsilon(1e-12));
  }
}

TEST_CASE("channel_attention matches the straight-line oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor<double> f = oracle::random_tensor<double>(4, 2, 2, rng);
    const ChannelAttentionParams<double> p = random_channel_params(4, 2, rng);
    const Tensor<double> got = channel_attention(f, p);
    const Tensor<double> want = channel_attention_oracle(f, p);
    CHECK((got.m - want.m).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("spatial_body_attention: zero kernel halves the tensor") {
  Rng rng(4);
  const Tensor<double> f = oracle::random_tensor<double>(3, 4, 4, rng);
  SpatialAttentionParams<double> p;
  p.conv_kernel = MatX<double>::Zero(1, 3 * 49);
  p.bias = 0.0;
  const BinaryMask body = oracle::random_mask(4, 4, rng);
  const Tensor<double> y = spatial_body_attention(f, body, p);
  CHECK((y.m - 0.5 * f.m).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("spatial_body_attention: dead mask channel makes the body mask irrelevant") {
  Rng rng(5);
  const Tensor<double> f = oracle::random_tensor<double>(3, 6, 6, rng);
  SpatialAttentionParams<double> p;
  p.conv_kernel = oracle::random_weights<double>(1, 3 * 49, rng);
  p.conv_kernel.block(0, 2 * 49, 1, 49).setZero();  // mask taps dead
  p.bias = 0.2;
  const BinaryMask body_a = oracle::random_mask(6, 6, rng);
  const BinaryMask body_b = oracle::random_mask(6, 6, rng);
  const Tensor<double> ya = spatial_body_attention(f, body_a, p);
  const Tensor<double> yb = spatial_body_attention(f, body_b, p);
  CHECK((ya.m - yb.m).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("spatial_body_attention matches a naive convolution oracle") {
  Rng rng(6);
  for (int trial = 0; trial < 8; ++trial) {
    const Tensor<double> f = oracle::random_tensor<double>(2, 4, 4, rng);
    SpatialAttentionParams<double> p;
    p.conv_kernel = oracle::random_weights<double>(1, 3 * 49, rng);
    p.bias = rng.uniform(-0.5, 0.5);
    const BinaryMask body = oracle::random_mask(4, 4, rng);

    Tensor<double> desc(3, 4, 4);
    for (Eigen::Index j = 0; j < f.pixels(); ++j) {
      desc.m(0, j) = f.m.col(j).mean();
      desc.m(1, j) = f.m.col(j).maxCoeff();
      desc.m(2, j) = static_cast<double>(flat(body.values)(j));
    }
    VecX<double> bias(1);
    bias(0) = p.bias;
    const Tensor<double> z = oracle::naive_conv2d(desc, p.conv_kernel, &bias, 7, 1);
    Tensor<double> want(f.channels(), 4, 4);
    for (int c = 0; c < f.channels(); ++c) {
      for (Eigen::Index j = 0; j < f.pixels(); ++j) {
        want.m(c, j) = f.m(c, j) / (1.0 + std::exp(-z.m(0, j)));
      }
    }
    const Tensor<double> got = spatial_body_attention(f, body, p);
    CHECK((got.m - want.m).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("body_attention_block: zero parameters scale the input by 1.25") {
  Rng rng(7);
  const Tensor<double> f = oracle::random_tensor<double>(4, 4, 4, rng);
  BodyAttentionParams<double> p;
  p.channel.reduction_ratio = 2;
  p.channel.mlp_w1 = MatX<double>::Zero(2, 4);
  p.channel.mlp_w2 = MatX<double>::Zero(4, 2);
  p.spatial.conv_kernel = MatX<double>::Zero(1, 3 * 49);
  p.spatial.bias = 0.0;
  const BinaryMask body = oracle::random_mask(4, 4, rng);
  const Tensor<double> y = body_attention_block(f, body, p);
  CHECK((y.m - 1.25 * f.m).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("body_attention_block: zero input maps to zero") {
  Rng rng(8);
  Tensor<double> f(4, 4, 4);
  BodyAttentionParams<double> p;
  p.channel.reduction_ratio = 2;
  p.channel.mlp_w1 = oracle::random_weights<double>(2, 4, rng);
  p.channel.mlp_w2 = oracle::random_weights<double>(4, 2, rng);
  p.spatial.conv_kernel = oracle::random_weights<double>(1, 3 * 49, rng);
  p.spatial.bias = rng.uniform(-1.0, 1.0);
  const BinaryMask body = oracle::random_mask(4, 4, rng);
  const Tensor<double> y = body_attention_block(f, body, p);
  CHECK(y.m.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("body_attention_block equals the sequential composition plus residual") {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor<double> f = oracle::random_tensor<double>(4, 4, 4, rng);
    BodyAttentionParams<double> p;
    p.channel = random_channel_params(4, 2, rng);
    p.spatial.conv_kernel = oracle::random_weights<double>(1, 3 * 49, rng);
    p.spatial.bias = rng.uniform(-0.5, 0.5);
    const BinaryMask body = oracle::random_mask(4, 4, rng);

    const Tensor<double> fp = channel_attention(f, p.channel);
    const Tensor<double> fpp = spatial_body_attention(fp, body, p.spatial);
    const Tensor<double> got = body_attention_block(f, body, p);
    CHECK((got.m - (fpp.m + f.m)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("skin_affinity_map: empty face/hand mask yields the zero map") {
  Rng rng(10);
  const Tensor<double> k = oracle::random_tensor<double>(3, 4, 4, rng);
  const Tensor<double> q = oracle::random_tensor<double>(3, 4, 4, rng);
  BinaryMask fh;
  fh.values = MaskPlane::Zero(4, 4);
  BinaryMask body;
  body.values = MaskPlane::Constant(4, 4, 1);
  const SkinProbMap<double> a = skin_affinity_map(k, q, fh, body);
  CHECK(a.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("skin_affinity_map reproduces the worked C=2, N=4 example") {
  Tensor<double> k(2, 2, 2);
  k.m << 1, 0, 1, 0,  // channel 0 over columns (1,0),(0,1),(1,1),(0,0)
      0, 1, 1, 0;     // channel 1
  Tensor<double> q = k;
  BinaryMask fh, body;
  fh.values.resize(2, 2);
  fh.values << 1, 0, 1, 0;  // columns 1 and 3 (1-based)
  body.values = MaskPlane::Constant(2, 2, 1);
  const SkinProbMap<double> a = skin_affinity_map(k, q, fh, body);
  // m = (1, 0.5); S = (1, 0.5, 1.5, 0)
  CHECK(a(0, 0) == doctest::Approx(0.76159).epsilon(1e-4));
  CHECK(a(0, 1) == doctest::Approx(0.46212).epsilon(1e-4));
  CHECK(a(1, 0) == doctest::Approx(0.90515).epsilon(1e-4));
  CHECK(a(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("reduced-form affinity equals the explicit energy-matrix average") {
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const int c = rng.uniform_int(1, 8);
    const int h = rng.uniform_int(1, 8);
    const int w = h;
    const Tensor<double> k = oracle::random_tensor<double>(c, h, w, rng);
    const Tensor<double> q = oracle::random_tensor<double>(c, h, w, rng);
    const BinaryMask fh = oracle::random_mask(h, w, rng, 0.3);
    const BinaryMask body = oracle::random_mask(h, w, rng, 0.7);
    const SkinProbMap<double> got = skin_affinity_map(k, q, fh, body);
    const PlaneX<double> want = oracle::affinity_by_energy_matrix(k, q, fh, body);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("skin_affinity_map: range strictly inside (-1,1), zero off-body") {
  Rng rng(12);
  const Tensor<double> k = oracle::random_tensor<double>(4, 6, 6, rng);
  const Tensor<double> q = oracle::random_tensor<double>(4, 6, 6, rng);
  const BinaryMask fh = oracle::random_mask(6, 6, rng, 0.4);
  const BinaryMask body = oracle::random_mask(6, 6, rng, 0.5);
  const SkinProbMap<double> a = skin_affinity_map(k, q, fh, body);
  CHECK(a.maxCoeff() < 1.0);
  CHECK(a.minCoeff() > -1.0);
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    if (!flat(body.values)(j)) CHECK(a(j / 6, j % 6) == 0.0);
  }
}

TEST_CASE("skin_affinity_map: scaling K scales pre-tanh similarity linearly") {
  Rng rng(13);
  const Tensor<double> k = oracle::random_tensor<double>(3, 4, 4, rng);
  const Tensor<double> q = oracle::random_tensor<double>(3, 4, 4, rng);
  const BinaryMask fh = oracle::random_mask(4, 4, rng, 0.5);
  const BinaryMask body = oracle::random_mask(4, 4, rng, 0.8);
  Tensor<double> k2 = k;
  k2.m *= 3.0;
  const SkinProbMap<double> a1 = skin_affinity_map(k, q, fh, body);
  const SkinProbMap<double> a2 = skin_affinity_map(k2, q, fh, body);
  for (Eigen::Index i = 0; i < a1.size(); ++i) {
    const double s1 = std::atanh(a1(i / 4, i % 4));
    const double s2 = std::atanh(a2(i / 4, i % 4));
    CHECK(s2 == doctest::Approx(3.0 * s1).epsilon(1e-6));
    CHECK(std::abs(a2(i / 4, i % 4)) >= std::abs(a1(i / 4, i % 4)) - 1e-15);
  }
}

TEST_CASE("skin_attention_block: omega = 0 is the bitwise identity on T") {
  Rng rng(14);
  const Tensor<double> t = oracle::random_tensor<double>(4, 4, 4, rng);
  const skinseg::PartMask parts = oracle::random_parts(4, 4, rng);
  SkinAttentionParams<double> p;
  p.conv_k = oracle::random_weights<double>(4, 4, rng);
  p.conv_q = oracle::random_weights<double>(4, 4, rng);
  p.gamma_k = VecX<double>::Ones(4);
  p.beta_k = VecX<double>::Zero(4);
  p.gamma_q = VecX<double>::Ones(4);
  p.beta_q = VecX<double>::Zero(4);
  p.omega = 0.0;
  const SkinAttentionOut<double> out = skin_attention_block(t, parts, p);
  CHECK(std::memcmp(out.tensor.m.data(), t.m.data(),
                    sizeof(double) * static_cast<std::size_t>(t.m.size())) == 0);
}

TEST_CASE("skin_attention_block: no face/hand pixels passes T through with A = 0") {
  Rng rng(15);
  const Tensor<double> t = oracle::random_tensor<double>(3, 4, 4, rng);
  skinseg::PartMask parts;
  parts.codes = MaskPlane::Constant(4, 4, PartMask::kBody);
  SkinAttentionParams<double> p;
  p.conv_k = oracle::random_weights<double>(3, 3, rng);
  p.conv_q = oracle::random_weights<double>(3, 3, rng);
  p.gamma_k = VecX<double>::Ones(3);
  p.beta_k = VecX<double>::Zero(3);
  p.gamma_q = VecX<double>::Ones(3);
  p.beta_q = VecX<double>::Zero(3);
  p.omega = 1.7;
  const SkinAttentionOut<double> out = skin_attention_block(t, parts, p);
  CHECK(std::memcmp(out.tensor.m.data(), t.m.data(),
                    sizeof(double) * static_cast<std::size_t>(t.m.size())) == 0);
  CHECK(out.attention.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("skin_attention_block: identity projections compose with the affinity oracle") {
  Rng rng(16);
  const int c = 3;
  Tensor<double> t = oracle::random_tensor<double>(c, 4, 4, rng);
  skinseg::PartMask parts = oracle::random_parts(4, 4, rng);
  parts.codes(0, 0) = PartMask::kFace;  // at least one face pixel
  SkinAttentionParams<double> p;
  p.conv_k = MatX<double>::Identity(c, c);
  p.conv_q = MatX<double>::Identity(c, c);
  p.gamma_k = VecX<double>::Ones(c);
  p.beta_k = VecX<double>::Zero(c);
  p.gamma_q = VecX<double>::Ones(c);
  p.beta_q = VecX<double>::Zero(c);
  p.omega = 1.3;  // the converged gate value
  const SkinAttentionOut<double> out = skin_attention_block(t, parts, p);

  const Tensor<double> norm = standardize_oracle(t);
  const PlaneX<double> a_want = oracle::affinity_by_energy_matrix(
      norm, norm, derive_face_hand_mask(parts), derive_body_mask(parts));
  CHECK((out.attention - a_want).cwiseAbs().maxCoeff() < 1e-6);
  for (int ch = 0; ch < c; ++ch) {
    for (Eigen::Index j = 0; j < t.pixels(); ++j) {
      const double want = t.m(ch, j) + 1.3 * a_want(j / 4, j % 4);
      CHECK(out.tensor.m(ch, j) == doctest::Approx(want).epsilon(1e-9));
    }
  }
}

TEST_CASE("channel_attention gradients agree with finite differences") {
  Rng rng(17);
  Tensor<double> f = oracle::random_tensor<double>(4, 3, 3, rng);
  ChannelAttentionParams<double> p = random_channel_params(4, 2, rng);
  const MatX<double> wsum = oracle::random_weights<double>(4, 9, rng);

  auto eval = [&]() { return (channel_attention(f, p).m.array() * wsum.array()).sum(); };

  ChannelAttentionCache<double> cache;
  const Tensor<double> y = channel_attention(f, p, &cache);
  ChannelAttentionGrads<double> g;
  g.mlp_w1 = MatX<double>::Zero(2, 4);
  g.mlp_w2 = MatX<double>::Zero(4, 2);
  Tensor<double> dy;
  dy.h = y.h;
  dy.w = y.w;
  dy.m = wsum;
  const Tensor<double> df = channel_attention_backward(dy, p, cache, g);

  CHECK(oracle::check_gradient(eval, f.m.data(), df.m.data(), f.m.size()).max_rel_err < 1e-4);
  CHECK(oracle::check_gradient(eval, p.mlp_w1.data(), g.mlp_w1.data(), p.mlp_w1.size())
            .max_rel_err < 1e-4);
  CHECK(oracle::check_gradient(eval, p.mlp_w2.data(), g.mlp_w2.data(), p.mlp_w2.size())
            .max_rel_err < 1e-4);
}
