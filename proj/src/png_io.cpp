#include "skinseg/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

namespace skinseg {

namespace {

std::vector<std::uint8_t> read_png_buffer(const std::filesystem::path& path, int format,
                                          int channels, int& h, int& w) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw DataError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = static_cast<png_uint_32>(format);
  std::vector<std::uint8_t> buffer(static_cast<std::size_t>(PNG_IMAGE_SIZE(image)));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw DataError("cannot decode PNG " + path.string() + ": " + msg);
  }
  h = static_cast<int>(image.height);
  w = static_cast<int>(image.width);
  if (buffer.size() != static_cast<std::size_t>(h) * w * channels) {
    throw DataError("unexpected PNG buffer size for " + path.string());
  }
  return buffer;
}

void write_png_buffer(const std::filesystem::path& path, int format, int h, int w,
                      const std::uint8_t* data) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = static_cast<png_uint_32>(format);
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, data, 0, nullptr)) {
    throw DataError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace

std::pair<int, int> png_dimensions(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw DataError("cannot read PNG " + path.string() + ": " + image.message);
  }
  const std::pair<int, int> dims{static_cast<int>(image.height), static_cast<int>(image.width)};
  png_image_free(&image);
  return dims;
}

MaskPlane read_gray_png(const std::filesystem::path& path) {
  int h = 0, w = 0;
  const auto buf = read_png_buffer(path, PNG_FORMAT_GRAY, 1, h, w);
  MaskPlane plane(h, w);
  std::memcpy(plane.data(), buf.data(), buf.size());
  return plane;
}

void write_gray_png(const std::filesystem::path& path, const MaskPlane& plane) {
  write_png_buffer(path, PNG_FORMAT_GRAY, static_cast<int>(plane.rows()),
                   static_cast<int>(plane.cols()), plane.data());
}

PartMask read_part_mask(const std::filesystem::path& path) {
  PartMask parts;
  parts.codes = read_gray_png(path);
  if ((parts.codes.array() > PartMask::kHand).any()) {
    throw DataError("part mask " + path.string() + " has pixel values outside {0,1,2,3}");
  }
  return parts;
}

void write_part_mask(const std::filesystem::path& path, const PartMask& parts) {
  write_gray_png(path, parts.codes);
}

BinaryMask read_binary_mask(const std::filesystem::path& path) {
  const MaskPlane raw = read_gray_png(path);
  if (((raw.array() != 0) && (raw.array() != 255)).any()) {
    throw DataError("binary mask " + path.string() + " has pixel values outside {0,255}");
  }
  BinaryMask mask;
  mask.values = (raw.array() == 255).cast<std::uint8_t>();
  return mask;
}

void write_binary_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  MaskPlane raw = (mask.values.array() != 0).cast<std::uint8_t>() * std::uint8_t(255);
  write_gray_png(path, raw);
}

Tensor<Real> read_image(const std::filesystem::path& path) {
  int h = 0, w = 0;
  const auto buf = read_png_buffer(path, PNG_FORMAT_RGB, 3, h, w);
  Tensor<Real> img(3, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t o = (static_cast<std::size_t>(y) * w + x) * 3;
      img.at(0, y, x) = buf[o] / Real(255);
      img.at(1, y, x) = buf[o + 1] / Real(255);
      img.at(2, y, x) = buf[o + 2] / Real(255);
    }
  }
  return img;
}

void write_image(const std::filesystem::path& path, const Tensor<Real>& image) {
  require(image.channels() == 3, "write_image: expected 3 channels");
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(image.h) * image.w * 3);
  for (int y = 0; y < image.h; ++y) {
    for (int x = 0; x < image.w; ++x) {
      const std::size_t o = (static_cast<std::size_t>(y) * image.w + x) * 3;
      for (int c = 0; c < 3; ++c) {
        const Real v = std::clamp(image.at(c, y, x), Real(0), Real(1));
        buf[o + static_cast<std::size_t>(c)] =
            static_cast<std::uint8_t>(std::lround(v * Real(255)));
      }
    }
  }
  write_png_buffer(path, PNG_FORMAT_RGB, image.h, image.w, buf.data());
}

}  // namespace skinseg
