#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "skinseg/types.hpp"

namespace skinseg {

/// Source of per-image PartMasks. Stands in for the frozen pre-trained body
/// segmentation channel: since that network's parameters never change, its
/// output is a pure function of the image and can be precomputed to disk or
/// synthesized alongside generated scenes.
struct MaskProviderConfig {
  enum class Backend { file, synthetic };
  Backend backend = Backend::file;
  std::filesystem::path masks_dir;  // file backend: one <stem>.png per image
  std::uint64_t seed = 0;           // synthetic backend
  int canvas = 64;                  // synthetic backend native resolution
};

class MaskProvider {
 public:
  virtual ~MaskProvider() = default;

  /// PartMask for image_id at h×w (nearest-neighbor resized if stored at a
  /// different size). Throws DataError on missing masks or invalid codes.
  virtual PartMask get_parts(const std::string& image_id, int h, int w) const = 0;
};

std::unique_ptr<MaskProvider> make_mask_provider(const MaskProviderConfig& cfg);

}  // namespace skinseg
