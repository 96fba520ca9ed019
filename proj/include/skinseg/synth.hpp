#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "skinseg/rng.hpp"
#include "skinseg/types.hpp"

namespace skinseg {

struct Ellipse {
  double cx = 0, cy = 0, rx = 1, ry = 1;
};

struct Disc {
  double cx = 0, cy = 0, r = 1;
};

struct RectF {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open [x0,x1)×[y0,y1)
};

using Rgb = std::array<double, 3>;

/// Procedural one-person scene: a skin-toned body ellipse with clothing
/// occluders, a face disc and two hand discs, on a cluttered background.
/// Accessory blobs are pixels labelled skin in the noisy mask that are not
/// skin (bracelet/necklace-style annotation errors), dilated by noise_dilation.
struct SceneSpec {
  std::uint64_t seed = 0;
  int canvas = 64;
  Rgb skin_tone{0.8, 0.6, 0.5};
  Ellipse body;
  Disc face;
  std::vector<Disc> hands;
  std::vector<RectF> clothing;
  std::vector<Rgb> clothing_colors;
  std::vector<Disc> accessories;
  std::vector<Rgb> accessory_colors;
  int noise_dilation = 0;
};

struct Scene {
  Tensor<Real> image;
  BinaryMask true_skin;
  BinaryMask noisy_skin;
  PartMask parts;
};

/// Deterministic rasterization of a spec. Throws InvalidGeometry (ConfigError)
/// when the face/hand/clothing regions escape the body.
Scene generate_scene(const SceneSpec& spec);

/// Draws random scene geometry and adds accessory noise until
/// IoU(noisy, true) lands within ±band of noise_iou_target (target 1.0 means
/// no noise). Deterministic in (seed, canvas, target).
SceneSpec random_scene_spec(std::uint64_t seed, int canvas, double noise_iou_target,
                            double band = 0.02);

/// Renders the part mask of the scene a given seed/id pair would generate;
/// used by the synthetic mask provider so masks and images agree.
PartMask synthetic_parts_for(std::uint64_t dataset_seed, const std::string& image_id, int h,
                             int w, int canvas);

// ---------------------------------------------------------------------------
// Dataset directory layout: root/{train,val,test}/{images,labels,parts}/<stem>.png
// ---------------------------------------------------------------------------

enum class Split { train, val, test };

const char* split_name(Split s);

struct DatasetRecord {
  std::string stem;
  std::filesystem::path image, label, parts;
};

struct DatasetIndex {
  Split split = Split::train;
  std::filesystem::path root;
  std::vector<DatasetRecord> records;
  std::vector<std::string> diagnostics;  // per-file reasons for rejected records
};

/// Indexes matched stems; rejects mismatched or unreadable records with
/// per-file diagnostics. Missing split directories raise DataError.
DatasetIndex load_dataset(const std::filesystem::path& root, Split split);

struct SynthDatasetOptions {
  int num = 250;  // total scenes; split 80/20 into train/val
  int size = 64;
  double noise_iou_target = 0.75;
  std::uint64_t seed = 7;
};

struct SynthDatasetReport {
  int train_count = 0, val_count = 0;
  double mean_noisy_iou = 0.0;  // over the train split
};

/// Writes a full synthetic dataset. Train labels are the noisy masks; the
/// clean ones land in train/labels_true for measurement. Val labels are clean.
SynthDatasetReport write_synth_dataset(const std::filesystem::path& out,
                                       const SynthDatasetOptions& opts);

/// Horizontal flip (p=0.5) applied to image and all masks alike, plus ±10%
/// brightness jitter on the image only. Deterministic in seed.
struct AugmentSample {
  Tensor<Real> image;
  BinaryMask label;
  PartMask parts;
};

AugmentSample augment(const AugmentSample& in, std::uint64_t seed);

}  // namespace skinseg
