#pragma once

#include "skinseg/types.hpp"

namespace skinseg {

/// Body mask: 1 wherever the part code is body, face or hand.
inline BinaryMask derive_body_mask(const PartMask& parts) {
  BinaryMask out;
  out.values = (parts.codes.array() >= PartMask::kBody).cast<std::uint8_t>();
  return out;
}

/// Face/hand mask: 1 wherever the part code is face or hand.
inline BinaryMask derive_face_hand_mask(const PartMask& parts) {
  BinaryMask out;
  out.values = (parts.codes.array() >= PartMask::kFace).cast<std::uint8_t>();
  return out;
}

/// Nearest-neighbor resampling of a code/mask plane. Source index for output
/// index i is floor(i * src_dim / dst_dim), which keeps values strictly in
/// the input's value set.
inline MaskPlane resize_codes(const MaskPlane& src, int target_h, int target_w) {
  require(target_h >= 1 && target_w >= 1, "resize target dims must be >= 1");
  const int sh = static_cast<int>(src.rows());
  const int sw = static_cast<int>(src.cols());
  MaskPlane out(target_h, target_w);
  for (int y = 0; y < target_h; ++y) {
    const int sy = static_cast<int>((static_cast<long long>(y) * sh) / target_h);
    for (int x = 0; x < target_w; ++x) {
      const int sx = static_cast<int>((static_cast<long long>(x) * sw) / target_w);
      out(y, x) = src(sy, sx);
    }
  }
  return out;
}

inline BinaryMask resize_mask(const BinaryMask& mask, int target_h, int target_w) {
  BinaryMask out;
  out.values = resize_codes(mask.values, target_h, target_w);
  return out;
}

inline PartMask resize_parts(const PartMask& parts, int target_h, int target_w) {
  PartMask out;
  out.codes = resize_codes(parts.codes, target_h, target_w);
  return out;
}

inline void validate_part_codes(const MaskPlane& codes) {
  if ((codes.array() > PartMask::kHand).any()) {
    throw DataError("part mask contains codes outside {0,1,2,3}");
  }
}

inline void validate_binary(const MaskPlane& values) {
  if ((values.array() > 1).any()) {
    throw DataError("binary mask contains values outside {0,1}");
  }
}

}  // namespace skinseg
