#include "skinseg/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>

#include "skinseg/losses.hpp"
#include "skinseg/masks.hpp"
#include "skinseg/png_io.hpp"

namespace skinseg {

namespace {

constexpr std::array<Rgb, 12> kSkinToneAnchors{{
    {0.96, 0.80, 0.69},
    {0.92, 0.74, 0.61},
    {0.88, 0.68, 0.54},
    {0.84, 0.62, 0.47},
    {0.78, 0.56, 0.41},
    {0.71, 0.50, 0.36},
    {0.64, 0.44, 0.32},
    {0.57, 0.38, 0.28},
    {0.49, 0.33, 0.24},
    {0.42, 0.28, 0.20},
    {0.35, 0.23, 0.17},
    {0.28, 0.18, 0.13},
}};

constexpr std::array<Rgb, 4> kAccessoryAnchors{{
    {0.10, 0.35, 0.85},  // lapis
    {0.05, 0.65, 0.55},  // jade
    {0.55, 0.15, 0.75},  // amethyst
    {0.15, 0.80, 0.85},  // turquoise
}};

double rgb_dist(const Rgb& a, const Rgb& b) {
  const double d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
  return std::sqrt(d0 * d0 + d1 * d1 + d2 * d2);
}

MaskPlane zeros(int n) { return MaskPlane::Zero(n, n); }

void fill_ellipse(MaskPlane& m, const Ellipse& e) {
  const int n = static_cast<int>(m.rows());
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double dx = (x - e.cx) / e.rx;
      const double dy = (y - e.cy) / e.ry;
      if (dx * dx + dy * dy <= 1.0) m(y, x) = 1;
    }
  }
}

void fill_disc(MaskPlane& m, const Disc& d) {
  fill_ellipse(m, Ellipse{d.cx, d.cy, d.r, d.r});
}

void fill_rect(MaskPlane& m, const RectF& r) {
  const int n = static_cast<int>(m.rows());
  for (int y = std::max(0, r.y0); y < std::min(n, r.y1); ++y) {
    for (int x = std::max(0, r.x0); x < std::min(n, r.x1); ++x) {
      m(y, x) = 1;
    }
  }
}

MaskPlane dilate(const MaskPlane& m, int radius) {
  if (radius <= 0) return m;
  const int n = static_cast<int>(m.rows());
  MaskPlane out = m;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (!m(y, x)) continue;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          if (dy * dy + dx * dx > radius * radius) continue;
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < n && xx >= 0 && xx < n) out(yy, xx) = 1;
        }
      }
    }
  }
  return out;
}

struct SceneMasks {
  MaskPlane body, face, hand, clothing, true_skin, noisy_skin;
};

SceneMasks raster_masks(const SceneSpec& spec) {
  const int n = spec.canvas;
  SceneMasks s;
  s.body = zeros(n);
  fill_ellipse(s.body, spec.body);
  if (!s.body.array().any()) throw ConfigError("invalid geometry: body ellipse rasterizes empty");

  MaskPlane face_raw = zeros(n);
  fill_disc(face_raw, spec.face);
  s.face = (face_raw.array() * s.body.array()).matrix();  // face ⊂ body by clipping
  if (!s.face.array().any()) throw ConfigError("invalid geometry: face disc lies outside body");

  s.hand = zeros(n);
  for (const auto& hd : spec.hands) {
    MaskPlane h = zeros(n);
    fill_disc(h, hd);
    s.hand = s.hand.array().max(h.array() * s.body.array()).matrix();
  }

  MaskPlane fh = s.face.array().max(s.hand.array()).matrix();
  s.clothing = zeros(n);
  for (const auto& r : spec.clothing) fill_rect(s.clothing, r);
  s.clothing = (s.clothing.array() * s.body.array() * (1 - fh.array())).matrix();

  s.true_skin = (s.body.array() * (1 - s.clothing.array())).matrix();

  MaskPlane blobs = zeros(n);
  for (const auto& b : spec.accessories) fill_disc(blobs, b);
  blobs = (blobs.array() * (1 - s.true_skin.array())).matrix();
  blobs = dilate(blobs, spec.noise_dilation);
  blobs = (blobs.array() * (1 - s.true_skin.array())).matrix();
  s.noisy_skin = s.true_skin.array().max(blobs.array()).matrix();
  return s;
}

double noisy_iou(const SceneMasks& s) {
  BinaryMask a, b;
  a.values = s.noisy_skin;
  b.values = s.true_skin;
  return metric_iou(a, b);
}

Rgb jitter(Rgb c, Rng& rng, double amount) {
  for (auto& v : c) v = std::clamp(v + rng.uniform(-amount, amount), 0.0, 1.0);
  return c;
}

Rgb random_non_skin_color(Rng& rng, const Rgb& skin) {
  for (int tries = 0; tries < 64; ++tries) {
    Rgb c{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
    if (rgb_dist(c, skin) >= 0.35) return c;
  }
  return Rgb{0.1, 0.2, 0.8};
}

}  // namespace

Scene generate_scene(const SceneSpec& spec) {
  const int n = spec.canvas;
  if (n < 8) throw ConfigError("invalid geometry: canvas must be >= 8");
  const SceneMasks masks = raster_masks(spec);

  Scene scene;
  scene.true_skin.values = masks.true_skin;
  scene.noisy_skin.values = masks.noisy_skin;
  scene.parts.codes =
      (masks.body.array() * PartMask::kBody)
          .max(masks.face.array() * PartMask::kFace)
          .max(masks.hand.array() * PartMask::kHand)
          .matrix()
          .cast<std::uint8_t>();

  // Image rendering; all draws keyed off the spec seed so a spec renders
  // identically everywhere.
  Rng rng(mix_seed(spec.seed, 0xB06D));
  scene.image = Tensor<Real>(3, n, n);
  const Rgb base{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
  for (int c = 0; c < 3; ++c) scene.image.plane(c).setConstant(base[static_cast<std::size_t>(c)]);
  const int n_clutter = rng.uniform_int(3, 6);
  for (int i = 0; i < n_clutter; ++i) {
    const int x0 = rng.uniform_int(0, n - 2);
    const int y0 = rng.uniform_int(0, n - 2);
    const RectF r{x0, y0, x0 + rng.uniform_int(2, n / 2), y0 + rng.uniform_int(2, n / 2)};
    const Rgb col = random_non_skin_color(rng, spec.skin_tone);
    for (int y = std::max(0, r.y0); y < std::min(n, r.y1); ++y) {
      for (int x = std::max(0, r.x0); x < std::min(n, r.x1); ++x) {
        for (int c = 0; c < 3; ++c) scene.image.at(c, y, x) = col[static_cast<std::size_t>(c)];
      }
    }
  }

  MaskPlane blob_visible =
      (masks.noisy_skin.array() * (1 - masks.true_skin.array())).matrix();
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (masks.body(y, x)) {
        // mild radial shading across the body
        const double dx = (x - spec.body.cx) / spec.body.rx;
        const double shade = 1.0 - 0.06 * dx * dx;
        for (int c = 0; c < 3; ++c) {
          scene.image.at(c, y, x) =
              std::clamp(spec.skin_tone[static_cast<std::size_t>(c)] * shade, 0.0, 1.0);
        }
      }
      if (masks.clothing(y, x)) {
        // nearest owning rect decides the color
        for (std::size_t i = 0; i < spec.clothing.size(); ++i) {
          const auto& r = spec.clothing[i];
          if (x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1) {
            const Rgb& col = spec.clothing_colors.empty()
                                 ? Rgb{0.2, 0.3, 0.7}
                                 : spec.clothing_colors[i % spec.clothing_colors.size()];
            for (int c = 0; c < 3; ++c) scene.image.at(c, y, x) = col[static_cast<std::size_t>(c)];
            break;
          }
        }
      }
      if (blob_visible(y, x)) {
        Rgb col = kAccessoryAnchors[0];
        double best = 1e9;
        for (std::size_t i = 0; i < spec.accessories.size(); ++i) {
          const auto& b = spec.accessories[i];
          const double d = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
          if (d < best) {
            best = d;
            col = spec.accessory_colors.empty()
                      ? kAccessoryAnchors[0]
                      : spec.accessory_colors[i % spec.accessory_colors.size()];
          }
        }
        for (int c = 0; c < 3; ++c) scene.image.at(c, y, x) = col[static_cast<std::size_t>(c)];
      }
    }
  }
  // sensor-style texture
  for (int c = 0; c < 3; ++c) {
    for (Eigen::Index j = 0; j < scene.image.pixels(); ++j) {
      scene.image.m(c, j) = std::clamp(scene.image.m(c, j) + rng.uniform(-0.02, 0.02), 0.0, 1.0);
    }
  }
  return scene;
}

namespace {

SceneSpec random_scene_geometry(std::uint64_t seed, int canvas) {
  Rng rng(mix_seed(seed, 0x6E0));
  const double n = canvas;
  SceneSpec spec;
  spec.seed = seed;
  spec.canvas = canvas;
  spec.skin_tone =
      jitter(kSkinToneAnchors[static_cast<std::size_t>(rng.uniform_int(0, 11))], rng, 0.03);

  spec.body.cx = n * 0.5 + rng.uniform(-n * 0.06, n * 0.06);
  spec.body.cy = n * 0.56 + rng.uniform(-n * 0.04, n * 0.04);
  spec.body.rx = rng.uniform(0.24, 0.32) * n;
  spec.body.ry = rng.uniform(0.32, 0.40) * n;
  spec.body.ry = std::min(spec.body.ry, n - 2 - spec.body.cy);
  spec.body.rx = std::min({spec.body.rx, spec.body.cx - 1, n - 2 - spec.body.cx});

  spec.face.r = rng.uniform(0.09, 0.12) * n;
  spec.face.cx = spec.body.cx + rng.uniform(-0.02, 0.02) * n;
  spec.face.cy = spec.body.cy - spec.body.ry + spec.face.r * 1.35;

  const double hand_y = spec.body.cy + spec.body.ry * rng.uniform(0.25, 0.45);
  for (int side : {-1, 1}) {
    Disc hand;
    hand.r = rng.uniform(0.055, 0.075) * n;
    hand.cx = spec.body.cx + side * spec.body.rx * rng.uniform(0.55, 0.75);
    hand.cy = hand_y + rng.uniform(-0.02, 0.02) * n;
    spec.hands.push_back(hand);
  }

  // torso band, spanning the full body width
  const int face_bottom = static_cast<int>(spec.face.cy + spec.face.r) + 2;
  const int body_bottom = static_cast<int>(spec.body.cy + spec.body.ry);
  RectF torso;
  torso.x0 = 0;
  torso.x1 = canvas;
  torso.y0 = face_bottom;
  torso.y1 = face_bottom +
             std::max(3, static_cast<int>(rng.uniform(0.40, 0.60) * (body_bottom - face_bottom)));
  spec.clothing.push_back(torso);
  spec.clothing_colors.push_back(random_non_skin_color(rng, spec.skin_tone));
  if (rng.bernoulli(0.4)) {
    RectF lower;
    lower.x0 = 0;
    lower.x1 = canvas;
    lower.y0 = torso.y1 + rng.uniform_int(1, 3);
    lower.y1 = lower.y0 + std::max(2, static_cast<int>(rng.uniform(0.3, 0.6) * (body_bottom - lower.y0)));
    if (lower.y1 > lower.y0 && lower.y0 < body_bottom) {
      spec.clothing.push_back(lower);
      spec.clothing_colors.push_back(random_non_skin_color(rng, spec.skin_tone));
    }
  }
  return spec;
}

/// Candidate accessory centers: clothing pixels 2-4 px inside the body
/// boundary, so a blob still touches the boundary while most of its area
/// stays inside the body (bracelet/necklace placement). Falls back to any
/// clothing pixel for heavily padded bodies.
std::vector<std::pair<int, int>> accessory_candidates(const SceneMasks& m) {
  const int n = static_cast<int>(m.body.rows());
  MaskPlane boundary = zeros(n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (!m.body(y, x)) continue;
      const bool edge = (y == 0 || !m.body(y - 1, x)) || (y == n - 1 || !m.body(y + 1, x)) ||
                        (x == 0 || !m.body(y, x - 1)) || (x == n - 1 || !m.body(y, x + 1));
      if (edge) boundary(y, x) = 1;
    }
  }
  const MaskPlane within4 = dilate(boundary, 4);
  const MaskPlane within2 = dilate(boundary, 2);
  std::vector<std::pair<int, int>> out, fallback;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (!m.clothing(y, x)) continue;
      fallback.emplace_back(y, x);
      if (within4(y, x) && !within2(y, x)) out.emplace_back(y, x);
    }
  }
  return out.empty() ? fallback : out;
}

}  // namespace

SceneSpec random_scene_spec(std::uint64_t seed, int canvas, double noise_iou_target,
                            double band) {
  if (noise_iou_target <= 0.0 || noise_iou_target > 1.0) {
    throw ConfigError("noise_iou_target must be in (0, 1]");
  }
  SceneSpec spec = random_scene_geometry(seed, canvas);
  if (noise_iou_target >= 0.999) return spec;

  Rng rng(mix_seed(seed, 0xACCE5501E5ULL));
  spec.noise_dilation = 1;
  SceneMasks masks = raster_masks(spec);
  double iou = noisy_iou(masks);
  int radius = 3;
  int stall = 0;
  while (iou > noise_iou_target && stall < 400) {
    const auto candidates = accessory_candidates(masks);
    if (candidates.empty()) break;
    const auto [cy, cx] = candidates[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
    Disc blob{static_cast<double>(cx), static_cast<double>(cy), static_cast<double>(radius)};
    SceneSpec trial = spec;
    trial.accessories.push_back(blob);
    const SceneMasks trial_masks = raster_masks(trial);
    const double trial_iou = noisy_iou(trial_masks);
    if (trial_iou < noise_iou_target - band && radius > 1) {
      --radius;  // blob too big for the remaining gap
      ++stall;
      continue;
    }
    if (trial_iou >= iou) {
      ++stall;  // blob landed on already-noisy pixels
      continue;
    }
    spec.accessories.push_back(blob);
    spec.accessory_colors.push_back(
        jitter(kAccessoryAnchors[static_cast<std::size_t>(
                   rng.uniform_int(0, static_cast<int>(kAccessoryAnchors.size()) - 1))],
               rng, 0.02));
    masks = trial_masks;
    iou = trial_iou;
  }
  return spec;
}

PartMask synthetic_parts_for(std::uint64_t dataset_seed, const std::string& image_id, int h,
                             int w, int canvas) {
  // trailing digits of the id select the scene
  std::size_t pos = image_id.size();
  while (pos > 0 && std::isdigit(static_cast<unsigned char>(image_id[pos - 1]))) --pos;
  if (pos == image_id.size()) {
    throw DataError("synthetic provider: image id '" + image_id + "' carries no scene index");
  }
  const std::uint64_t index = std::stoull(image_id.substr(pos));
  const SceneSpec spec = random_scene_geometry(mix_seed(dataset_seed, index), canvas);
  const SceneMasks m = raster_masks(spec);
  PartMask parts;
  parts.codes = (m.body.array() * PartMask::kBody)
                    .max(m.face.array() * PartMask::kFace)
                    .max(m.hand.array() * PartMask::kHand)
                    .matrix()
                    .cast<std::uint8_t>();
  if (parts.h() != h || parts.w() != w) parts = resize_parts(parts, h, w);
  return parts;
}

// ---------------------------------------------------------------------------
// Dataset IO
// ---------------------------------------------------------------------------

const char* split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "train";
}

DatasetIndex load_dataset(const std::filesystem::path& root, Split split) {
  namespace fs = std::filesystem;
  DatasetIndex index;
  index.split = split;
  index.root = root;
  const fs::path base = root / split_name(split);
  const fs::path images = base / "images";
  const fs::path labels = base / "labels";
  const fs::path parts = base / "parts";
  for (const auto& dir : {images, labels, parts}) {
    if (!fs::is_directory(dir)) {
      throw DataError("missing dataset directory: " + dir.string());
    }
  }

  std::set<std::string> stems;
  for (const auto& entry : fs::directory_iterator(images)) {
    if (entry.path().extension() == ".png") stems.insert(entry.path().stem().string());
  }
  for (const auto& stem : stems) {
    DatasetRecord rec;
    rec.stem = stem;
    rec.image = images / (stem + ".png");
    rec.label = labels / (stem + ".png");
    rec.parts = parts / (stem + ".png");
    bool ok = true;
    for (const auto& p : {rec.label, rec.parts}) {
      if (!fs::exists(p)) {
        index.diagnostics.push_back(stem + ": missing " + p.string());
        ok = false;
      }
    }
    if (!ok) continue;
    try {
      const auto [ih, iw] = png_dimensions(rec.image);
      const auto [lh, lw] = png_dimensions(rec.label);
      const auto [ph, pw] = png_dimensions(rec.parts);
      if (lh != ih || lw != iw || ph != ih || pw != iw) {
        index.diagnostics.push_back(stem + ": image/label/parts dimensions disagree");
        continue;
      }
    } catch (const DataError& e) {
      index.diagnostics.push_back(stem + ": " + e.what());
      continue;
    }
    index.records.push_back(std::move(rec));
  }
  return index;
}

SynthDatasetReport write_synth_dataset(const std::filesystem::path& out,
                                       const SynthDatasetOptions& opts) {
  namespace fs = std::filesystem;
  if (opts.num < 2) throw ConfigError("synth: need at least 2 scenes");
  if (opts.size < 8 || opts.size % 8 != 0) {
    throw ConfigError("synth: size must be >= 8 and divisible by 8");
  }
  SynthDatasetReport report;
  report.train_count = (opts.num * 4) / 5;
  report.val_count = opts.num - report.train_count;

  for (const char* split : {"train", "val"}) {
    for (const char* sub : {"images", "labels", "parts"}) {
      fs::create_directories(out / split / sub);
    }
  }
  fs::create_directories(out / "train" / "labels_true");

  double iou_sum = 0.0;
  for (int i = 0; i < opts.num; ++i) {
    const bool is_train = i < report.train_count;
    const SceneSpec spec = random_scene_spec(mix_seed(opts.seed, static_cast<std::uint64_t>(i)),
                                             opts.size, opts.noise_iou_target);
    const Scene scene = generate_scene(spec);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "scene_%05d", i);
    const fs::path base = out / (is_train ? "train" : "val");
    write_image(base / "images" / (std::string(stem) + ".png"), scene.image);
    write_part_mask(base / "parts" / (std::string(stem) + ".png"), scene.parts);
    if (is_train) {
      write_binary_mask(base / "labels" / (std::string(stem) + ".png"), scene.noisy_skin);
      write_binary_mask(base / "labels_true" / (std::string(stem) + ".png"), scene.true_skin);
      iou_sum += metric_iou(scene.noisy_skin, scene.true_skin);
    } else {
      write_binary_mask(base / "labels" / (std::string(stem) + ".png"), scene.true_skin);
    }
  }
  report.mean_noisy_iou = report.train_count > 0 ? iou_sum / report.train_count : 1.0;
  return report;
}

AugmentSample augment(const AugmentSample& in, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xA06));
  AugmentSample out = in;
  if (rng.bernoulli(0.5)) {
    for (int c = 0; c < 3; ++c) {
      out.image.plane(c) = in.image.plane(c).rowwise().reverse().eval();
    }
    out.label.values = in.label.values.rowwise().reverse().eval();
    out.parts.codes = in.parts.codes.rowwise().reverse().eval();
  }
  if (rng.bernoulli(0.5)) {
    const Real factor = Real(1) + Real(rng.uniform(-0.10, 0.10));
    out.image.m = (out.image.m * factor).cwiseMax(Real(0)).cwiseMin(Real(1));
  }
  return out;
}

}  // namespace skinseg
