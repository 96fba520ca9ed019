#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "skinseg/types.hpp"

namespace skinseg {

/// All convolutions use zero 'same' padding: out = ceil(in/stride), with the
/// padding split floor-begin / ceil-end. Backward functions ACCUMULATE into
/// the parameter-gradient arguments so per-batch sums fall out naturally;
/// callers zero the gradients at batch boundaries.

struct ConvGeom {
  int oh = 0, ow = 0;
  int pad_top = 0, pad_left = 0;
};

inline ConvGeom conv_same_geometry(int h, int w, int k, int stride) {
  ConvGeom g;
  g.oh = (h + stride - 1) / stride;
  g.ow = (w + stride - 1) / stride;
  const int pad_h = std::max(0, (g.oh - 1) * stride + k - h);
  const int pad_w = std::max(0, (g.ow - 1) * stride + k - w);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

template <class S>
struct Conv2dCache {
  MatX<S> cols;  // (Cin·k·k) × (oh·ow)
  int in_c = 0, in_h = 0, in_w = 0;
  int k = 1, stride = 1;
  ConvGeom geom;
};

/// Patch matrix for GEMM convolution; row (ci*k + ky)*k + kx holds the input
/// value under kernel tap (ky,kx) of channel ci for every output pixel.
template <class S>
void im2col(const Tensor<S>& x, int k, int stride, MatX<S>& cols, ConvGeom& g) {
  g = conv_same_geometry(x.h, x.w, k, stride);
  const int cin = x.channels();
  cols.resize(static_cast<Eigen::Index>(cin) * k * k,
              static_cast<Eigen::Index>(g.oh) * g.ow);
  for (int ci = 0; ci < cin; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index r = (static_cast<Eigen::Index>(ci) * k + ky) * k + kx;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * stride - g.pad_top + ky;
          S* dst = cols.row(r).data() + static_cast<Eigen::Index>(oy) * g.ow;
          if (iy < 0 || iy >= x.h) {
            std::fill(dst, dst + g.ow, S(0));
            continue;
          }
          const S* src = x.m.row(ci).data() + static_cast<Eigen::Index>(iy) * x.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * stride - g.pad_left + kx;
            dst[ox] = (ix >= 0 && ix < x.w) ? src[ix] : S(0);
          }
        }
      }
    }
  }
}

/// weight: Cout × (Cin·k·k); bias (optional): Cout.
template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const MatX<S>& weight, const VecX<S>* bias, int k,
                 int stride, Conv2dCache<S>* cache = nullptr) {
  require(weight.cols() == static_cast<Eigen::Index>(x.channels()) * k * k,
          "conv2d: weight columns disagree with input channels");
  MatX<S> cols;
  ConvGeom g;
  im2col(x, k, stride, cols, g);
  Tensor<S> y;
  y.h = g.oh;
  y.w = g.ow;
  y.m.noalias() = weight * cols;
  if (bias) y.m.colwise() += *bias;
  if (cache) {
    cache->cols = std::move(cols);
    cache->in_c = x.channels();
    cache->in_h = x.h;
    cache->in_w = x.w;
    cache->k = k;
    cache->stride = stride;
    cache->geom = g;
  }
  return y;
}

template <class S>
Tensor<S> conv2d_backward(const Tensor<S>& dy, const MatX<S>& weight, const Conv2dCache<S>& c,
                          MatX<S>& dweight, VecX<S>* dbias) {
  dweight.noalias() += dy.m * c.cols.transpose();
  if (dbias) *dbias += dy.m.rowwise().sum();
  MatX<S> dcols;
  dcols.noalias() = weight.transpose() * dy.m;
  Tensor<S> dx(c.in_c, c.in_h, c.in_w);
  const int k = c.k, stride = c.stride;
  const ConvGeom& g = c.geom;
  for (int ci = 0; ci < c.in_c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Eigen::Index r = (static_cast<Eigen::Index>(ci) * k + ky) * k + kx;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * stride - g.pad_top + ky;
          if (iy < 0 || iy >= c.in_h) continue;
          const S* src = dcols.row(r).data() + static_cast<Eigen::Index>(oy) * g.ow;
          S* dst = dx.m.row(ci).data() + static_cast<Eigen::Index>(iy) * c.in_w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * stride - g.pad_left + kx;
            if (ix >= 0 && ix < c.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
  return dx;
}

/// 1×1 convolution is a plain channel-mixing GEMM.
template <class S>
Tensor<S> conv1x1(const Tensor<S>& x, const MatX<S>& weight) {
  require(weight.cols() == x.m.rows(), "conv1x1: weight/input channel mismatch");
  Tensor<S> y;
  y.h = x.h;
  y.w = x.w;
  y.m.noalias() = weight * x.m;
  return y;
}

template <class S>
Tensor<S> conv1x1_backward(const Tensor<S>& dy, const MatX<S>& weight, const Tensor<S>& x_in,
                           MatX<S>& dweight) {
  dweight.noalias() += dy.m * x_in.m.transpose();
  Tensor<S> dx;
  dx.h = x_in.h;
  dx.w = x_in.w;
  dx.m.noalias() = weight.transpose() * dy.m;
  return dx;
}

template <class S>
struct DwConvCache {
  Tensor<S> x;
  int k = 3, stride = 1;
  ConvGeom geom;
};

/// Depthwise convolution; weight: C × (k·k).
template <class S>
Tensor<S> depthwise_conv2d(const Tensor<S>& x, const MatX<S>& weight, int k, int stride,
                           DwConvCache<S>* cache = nullptr) {
  require(weight.rows() == x.m.rows() && weight.cols() == static_cast<Eigen::Index>(k) * k,
          "depthwise_conv2d: weight shape disagrees with input");
  const ConvGeom g = conv_same_geometry(x.h, x.w, k, stride);
  Tensor<S> y(x.channels(), g.oh, g.ow);
  for (int ci = 0; ci < x.channels(); ++ci) {
    for (int oy = 0; oy < g.oh; ++oy) {
      for (int ox = 0; ox < g.ow; ++ox) {
        S acc = S(0);
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - g.pad_top + ky;
          if (iy < 0 || iy >= x.h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - g.pad_left + kx;
            if (ix < 0 || ix >= x.w) continue;
            acc += weight(ci, ky * k + kx) * x.at(ci, iy, ix);
          }
        }
        y.at(ci, oy, ox) = acc;
      }
    }
  }
  if (cache) {
    cache->x = x;
    cache->k = k;
    cache->stride = stride;
    cache->geom = g;
  }
  return y;
}

template <class S>
Tensor<S> depthwise_conv2d_backward(const Tensor<S>& dy, const MatX<S>& weight,
                                    const DwConvCache<S>& c, MatX<S>& dweight) {
  const int k = c.k, stride = c.stride;
  const ConvGeom& g = c.geom;
  Tensor<S> dx(c.x.channels(), c.x.h, c.x.w);
  for (int ci = 0; ci < c.x.channels(); ++ci) {
    for (int oy = 0; oy < g.oh; ++oy) {
      for (int ox = 0; ox < g.ow; ++ox) {
        const S go = dy.at(ci, oy, ox);
        if (go == S(0)) continue;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - g.pad_top + ky;
          if (iy < 0 || iy >= c.x.h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - g.pad_left + kx;
            if (ix < 0 || ix >= c.x.w) continue;
            dweight(ci, ky * k + kx) += go * c.x.at(ci, iy, ix);
            dx.at(ci, iy, ix) += go * weight(ci, ky * k + kx);
          }
        }
      }
    }
  }
  return dx;
}

template <class S>
struct StandardizeCache {
  MatX<S> xhat;
  VecX<S> inv_std;
};

/// Per-channel standardization over the spatial extent with learnable
/// scale/shift: y_c = gamma_c * (x_c - mean_c)/sqrt(var_c + eps) + beta_c.
template <class S>
Tensor<S> standardize(const Tensor<S>& x, const VecX<S>& gamma, const VecX<S>& beta,
                      StandardizeCache<S>* cache = nullptr, S eps = S(1e-5)) {
  require(gamma.size() == x.m.rows() && beta.size() == x.m.rows(),
          "standardize: affine params disagree with channel count");
  VecX<S> mu = x.m.rowwise().mean();
  MatX<S> xc = x.m.colwise() - mu;
  VecX<S> var = xc.array().square().rowwise().mean();
  VecX<S> inv_std = (var.array() + eps).rsqrt();
  MatX<S> xhat = xc.array().colwise() * inv_std.array();
  Tensor<S> y;
  y.h = x.h;
  y.w = x.w;
  y.m = ((xhat.array().colwise() * gamma.array()).colwise() + beta.array()).matrix();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <class S>
Tensor<S> standardize_backward(const Tensor<S>& dy, const VecX<S>& gamma,
                               const StandardizeCache<S>& c, VecX<S>& dgamma, VecX<S>& dbeta) {
  dgamma += (dy.m.array() * c.xhat.array()).rowwise().sum().matrix();
  dbeta += dy.m.rowwise().sum();
  MatX<S> dxhat = dy.m.array().colwise() * gamma.array();
  VecX<S> mean_dxhat = dxhat.rowwise().mean();
  VecX<S> mean_dxhat_xhat = (dxhat.array() * c.xhat.array()).rowwise().mean();
  Tensor<S> dx;
  dx.h = dy.h;
  dx.w = dy.w;
  dx.m = (((dxhat.colwise() - mean_dxhat).array() -
           (c.xhat.array().colwise() * mean_dxhat_xhat.array()))
              .colwise() *
          c.inv_std.array())
             .matrix();
  return dx;
}

template <class S>
struct ReluCache {
  MatX<S> active;  // 1 where x > 0
};

template <class S>
Tensor<S> relu(const Tensor<S>& x, ReluCache<S>* cache = nullptr) {
  Tensor<S> y;
  y.h = x.h;
  y.w = x.w;
  y.m = x.m.cwiseMax(S(0));
  if (cache) cache->active = (x.m.array() > S(0)).template cast<S>().matrix();
  return y;
}

template <class S>
Tensor<S> relu_backward(const Tensor<S>& dy, const ReluCache<S>& c) {
  Tensor<S> dx;
  dx.h = dy.h;
  dx.w = dy.w;
  dx.m = dy.m.cwiseProduct(c.active);
  return dx;
}

template <class S>
MatX<S> sigmoid(const MatX<S>& z) {
  return (S(1) / (S(1) + (-z.array()).exp())).matrix();
}

/// Per-axis sample positions for bilinear interpolation with half-pixel
/// centers: src = (dst + 0.5) * in/out - 0.5, clamped.
struct BilinearAxis {
  std::vector<int> i0, i1;
  std::vector<double> w1;  // weight of i1; i0 gets (1 - w1)
};

inline BilinearAxis bilinear_axis(int in, int out) {
  BilinearAxis a;
  a.i0.resize(out);
  a.i1.resize(out);
  a.w1.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double s = (d + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(s);
    a.i0[d] = lo;
    a.i1[d] = std::min(lo + 1, in - 1);
    a.w1[d] = s - lo;
  }
  return a;
}

/// Nearest-neighbor plane resize with the same floor(i·in/out) index map the
/// mask path uses; keeps every output value in the input's value set.
template <class S>
PlaneX<S> nearest_resize_plane(const PlaneX<S>& p, int oh, int ow) {
  const int ih = static_cast<int>(p.rows());
  const int iw = static_cast<int>(p.cols());
  PlaneX<S> out(oh, ow);
  for (int y = 0; y < oh; ++y) {
    const int sy = static_cast<int>((static_cast<long long>(y) * ih) / oh);
    for (int x = 0; x < ow; ++x) {
      out(y, x) = p(sy, static_cast<int>((static_cast<long long>(x) * iw) / ow));
    }
  }
  return out;
}

template <class S>
PlaneX<S> bilinear_resize_plane(const PlaneX<S>& p, int oh, int ow) {
  const BilinearAxis ay = bilinear_axis(static_cast<int>(p.rows()), oh);
  const BilinearAxis ax = bilinear_axis(static_cast<int>(p.cols()), ow);
  PlaneX<S> out(oh, ow);
  for (int y = 0; y < oh; ++y) {
    const S fy = static_cast<S>(ay.w1[y]);
    for (int x = 0; x < ow; ++x) {
      const S fx = static_cast<S>(ax.w1[x]);
      const S v00 = p(ay.i0[y], ax.i0[x]);
      const S v01 = p(ay.i0[y], ax.i1[x]);
      const S v10 = p(ay.i1[y], ax.i0[x]);
      const S v11 = p(ay.i1[y], ax.i1[x]);
      out(y, x) = (S(1) - fy) * ((S(1) - fx) * v00 + fx * v01) +
                  fy * ((S(1) - fx) * v10 + fx * v11);
    }
  }
  return out;
}

template <class S>
Tensor<S> bilinear_resize(const Tensor<S>& x, int oh, int ow) {
  const BilinearAxis ay = bilinear_axis(x.h, oh);
  const BilinearAxis ax = bilinear_axis(x.w, ow);
  Tensor<S> y(x.channels(), oh, ow);
  for (int c = 0; c < x.channels(); ++c) {
    const S* src = x.m.row(c).data();
    S* dst = y.m.row(c).data();
    for (int yy = 0; yy < oh; ++yy) {
      const S fy = static_cast<S>(ay.w1[yy]);
      const S* r0 = src + static_cast<Eigen::Index>(ay.i0[yy]) * x.w;
      const S* r1 = src + static_cast<Eigen::Index>(ay.i1[yy]) * x.w;
      for (int xx = 0; xx < ow; ++xx) {
        const S fx = static_cast<S>(ax.w1[xx]);
        dst[static_cast<Eigen::Index>(yy) * ow + xx] =
            (S(1) - fy) * ((S(1) - fx) * r0[ax.i0[xx]] + fx * r0[ax.i1[xx]]) +
            fy * ((S(1) - fx) * r1[ax.i0[xx]] + fx * r1[ax.i1[xx]]);
      }
    }
  }
  return y;
}

/// Adjoint of bilinear_resize: scatters dy (oh×ow) back to (in_h×in_w).
template <class S>
Tensor<S> bilinear_resize_backward(const Tensor<S>& dy, int in_h, int in_w) {
  const BilinearAxis ay = bilinear_axis(in_h, dy.h);
  const BilinearAxis ax = bilinear_axis(in_w, dy.w);
  Tensor<S> dx(dy.channels(), in_h, in_w);
  for (int c = 0; c < dy.channels(); ++c) {
    const S* src = dy.m.row(c).data();
    S* dst = dx.m.row(c).data();
    for (int yy = 0; yy < dy.h; ++yy) {
      const S fy = static_cast<S>(ay.w1[yy]);
      for (int xx = 0; xx < dy.w; ++xx) {
        const S fx = static_cast<S>(ax.w1[xx]);
        const S g = src[static_cast<Eigen::Index>(yy) * dy.w + xx];
        dst[static_cast<Eigen::Index>(ay.i0[yy]) * in_w + ax.i0[xx]] += (S(1) - fy) * (S(1) - fx) * g;
        dst[static_cast<Eigen::Index>(ay.i0[yy]) * in_w + ax.i1[xx]] += (S(1) - fy) * fx * g;
        dst[static_cast<Eigen::Index>(ay.i1[yy]) * in_w + ax.i0[xx]] += fy * (S(1) - fx) * g;
        dst[static_cast<Eigen::Index>(ay.i1[yy]) * in_w + ax.i1[xx]] += fy * fx * g;
      }
    }
  }
  return dx;
}

}  // namespace skinseg
