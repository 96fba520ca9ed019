#pragma once

#include <filesystem>
#include <utility>

#include "skinseg/types.hpp"

namespace skinseg {

/// On-disk encodings:
///   PartMask   — 8-bit single-channel PNG, pixel values exactly {0,1,2,3}
///   BinaryMask — 8-bit single-channel PNG, {0,255}, 255 = positive
///   images     — 8-bit RGB PNG, mapped to [0,1] on load
/// Loaders reject any other pixel value.

/// (height, width) from the PNG header only; no pixel decode.
std::pair<int, int> png_dimensions(const std::filesystem::path& path);

MaskPlane read_gray_png(const std::filesystem::path& path);
void write_gray_png(const std::filesystem::path& path, const MaskPlane& plane);

PartMask read_part_mask(const std::filesystem::path& path);
void write_part_mask(const std::filesystem::path& path, const PartMask& parts);

BinaryMask read_binary_mask(const std::filesystem::path& path);
void write_binary_mask(const std::filesystem::path& path, const BinaryMask& mask);

Tensor<Real> read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const Tensor<Real>& image);

}  // namespace skinseg
