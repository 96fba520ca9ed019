#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "skinseg/errors.hpp"

namespace skinseg {

/// All dense data is row-major so that one channel plane (and one image row)
/// is a contiguous block; pixel (y, x) lives at flat index y*w + x.
template <class Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using ArrX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// A single H×W scalar field (probability map, attention map, image plane).
template <class Scalar>
using PlaneX = MatX<Scalar>;

using MaskPlane = MatX<std::uint8_t>;

/// C×H×W activation tensor. Row c of `m` is channel c flattened row-major,
/// so the matrix is C × (h·w) and per-channel reductions are rowwise ops.
template <class Scalar>
struct Tensor {
  MatX<Scalar> m;
  int h = 0;
  int w = 0;

  Tensor() = default;
  Tensor(int channels, int height, int width)
      : m(MatX<Scalar>::Zero(channels, static_cast<Eigen::Index>(height) * width)),
        h(height),
        w(width) {}

  int channels() const { return static_cast<int>(m.rows()); }
  Eigen::Index pixels() const { return static_cast<Eigen::Index>(h) * w; }

  Scalar& at(int c, int y, int x) { return m(c, static_cast<Eigen::Index>(y) * w + x); }
  Scalar at(int c, int y, int x) const { return m(c, static_cast<Eigen::Index>(y) * w + x); }

  Eigen::Map<PlaneX<Scalar>> plane(int c) {
    return Eigen::Map<PlaneX<Scalar>>(m.row(c).data(), h, w);
  }
  Eigen::Map<const PlaneX<Scalar>> plane(int c) const {
    return Eigen::Map<const PlaneX<Scalar>>(m.row(c).data(), h, w);
  }

  bool same_shape(const Tensor& o) const {
    return h == o.h && w == o.w && m.rows() == o.m.rows();
  }
};

/// Per-pixel body-part codes from the auxiliary (frozen) body-segmentation
/// channel. Face and hand pixels are body pixels by definition.
struct PartMask {
  static constexpr std::uint8_t kBackground = 0;
  static constexpr std::uint8_t kBody = 1;
  static constexpr std::uint8_t kFace = 2;
  static constexpr std::uint8_t kHand = 3;

  MaskPlane codes;  // H×W, values in {0,1,2,3}

  int h() const { return static_cast<int>(codes.rows()); }
  int w() const { return static_cast<int>(codes.cols()); }
};

/// Strictly {0,1}-valued H×W mask.
struct BinaryMask {
  MaskPlane values;

  int h() const { return static_cast<int>(values.rows()); }
  int w() const { return static_cast<int>(values.cols()); }
};

/// Per-pixel skin score. In [0,1] from the sigmoid head, in (-1,1) from the
/// skin-attention tanh.
template <class Scalar>
using SkinProbMap = PlaneX<Scalar>;

/// Scalar type used by the model/training stack. The math core stays
/// templated; the application fixes double for gradient-check-grade accuracy.
using Real = double;

/// Flat row-major view over a mask plane, aligned with Tensor columns.
inline Eigen::Map<const ArrX<std::uint8_t>> flat(const MaskPlane& p) {
  return Eigen::Map<const ArrX<std::uint8_t>>(p.data(), p.size());
}

template <class Scalar>
VecX<Scalar> flat_cast(const MaskPlane& p) {
  return flat(p).template cast<Scalar>().matrix();
}

inline void require(bool cond, const char* what) {
  if (!cond) throw ShapeError(what);
}

/// Validates the ImageTensor contract: 3 channels, values in [0,1],
/// dims >= 8 and divisible by 8 (the encoder downsamples to 1/8).
template <class Scalar>
void validate_image(const Tensor<Scalar>& img) {
  if (img.channels() != 3) throw DataError("image must have 3 channels");
  if (img.h < 8 || img.w < 8 || img.h % 8 != 0 || img.w % 8 != 0) {
    throw DataError("image dims must be >= 8 and divisible by 8");
  }
  if (img.m.size() > 0) {
    const Scalar lo = img.m.minCoeff();
    const Scalar hi = img.m.maxCoeff();
    if (lo < Scalar(0) || hi > Scalar(1)) throw DataError("image values must lie in [0,1]");
  }
}

template <class Scalar>
bool all_finite(const MatX<Scalar>& m) {
  return m.allFinite();
}

}  // namespace skinseg
