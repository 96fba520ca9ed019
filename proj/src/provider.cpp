#include "skinseg/provider.hpp"

#include "skinseg/masks.hpp"
#include "skinseg/png_io.hpp"
#include "skinseg/synth.hpp"

namespace skinseg {

namespace {

class FileMaskProvider final : public MaskProvider {
 public:
  explicit FileMaskProvider(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (!std::filesystem::is_directory(dir_)) {
      throw DataError("parts directory does not exist: " + dir_.string());
    }
  }

  PartMask get_parts(const std::string& image_id, int h, int w) const override {
    const auto path = dir_ / (image_id + ".png");
    if (!std::filesystem::exists(path)) {
      throw DataError("missing part mask for '" + image_id + "' (expected " + path.string() + ")");
    }
    PartMask parts = read_part_mask(path);
    if (parts.h() != h || parts.w() != w) parts = resize_parts(parts, h, w);
    return parts;
  }

 private:
  std::filesystem::path dir_;
};

class SyntheticMaskProvider final : public MaskProvider {
 public:
  SyntheticMaskProvider(std::uint64_t seed, int canvas) : seed_(seed), canvas_(canvas) {}

  PartMask get_parts(const std::string& image_id, int h, int w) const override {
    return synthetic_parts_for(seed_, image_id, h, w, canvas_);
  }

 private:
  std::uint64_t seed_;
  int canvas_;
};

}  // namespace

std::unique_ptr<MaskProvider> make_mask_provider(const MaskProviderConfig& cfg) {
  switch (cfg.backend) {
    case MaskProviderConfig::Backend::file:
      return std::make_unique<FileMaskProvider>(cfg.masks_dir);
    case MaskProviderConfig::Backend::synthetic:
      return std::make_unique<SyntheticMaskProvider>(cfg.seed, cfg.canvas);
  }
  throw ConfigError("unknown mask provider backend");
}

}  // namespace skinseg
