#include "ffd/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ffd {

std::vector<InstanceRecord> extract_instances(const MaskU16& mask) {
  std::map<uint16_t, InstanceRecord> by_id;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      uint16_t id = mask.at(x, y);
      if (id == 0) continue;
      auto& rec = by_id[id];
      rec.id = id;
      rec.pixels.emplace_back(x, y);
    }
  std::vector<InstanceRecord> out;
  out.reserve(by_id.size());
  for (auto& [id, rec] : by_id) {
    rec.box = box_from_mask(rec.pixels);
    rec.class_id = 1;
    out.push_back(std::move(rec));
  }
  return out;
}

namespace {

std::vector<GtBox> annotations_from(const std::vector<InstanceRecord>& instances) {
  std::vector<GtBox> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back({inst.box, inst.class_id});
  return out;
}

}  // namespace

std::vector<Sample> load_dataset(const std::string& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw DataError("manifest not found: " + manifest_path);
  json manifest;
  try {
    f >> manifest;
  } catch (const json::exception& e) {
    throw DataError("invalid manifest json: " + std::string(e.what()));
  }
  if (!manifest.is_array()) throw DataError("manifest must be a json array of records");

  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<Sample> samples;
  for (const auto& rec : manifest) {
    if (!rec.contains("image") || !rec.contains("mask"))
      throw DataError("manifest record needs image and mask fields");
    const fs::path image_path = base / rec["image"].get<std::string>();
    const fs::path mask_path = base / rec["mask"].get<std::string>();
    if (!fs::exists(image_path)) throw DataError("missing image file: " + image_path.string());
    if (!fs::exists(mask_path)) throw DataError("missing mask file: " + mask_path.string());

    Sample s;
    s.image = read_image_png(image_path.string());
    s.mask = read_mask_png(mask_path.string());
    if (s.image.width != s.mask.width || s.image.height != s.mask.height)
      throw DataError("image/mask size mismatch for " + image_path.string());

    auto instances = extract_instances(s.mask);
    for (size_t i = 0; i < instances.size(); ++i)
      if (instances[i].id != int(i) + 1)
        throw DataError("non-contiguous instance ids in " + mask_path.string() +
                        " (expected 1..K, found id " + std::to_string(instances[i].id) + ")");
    s.annotations = annotations_from(instances);
    s.name = fs::path(rec["image"].get<std::string>()).stem().string();
    s.split = rec.value("split", "");
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_dataset(const std::string& dir, const std::vector<Sample>& samples) {
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  json manifest = json::array();
  for (const auto& s : samples) {
    const std::string image_rel = "images/" + s.name + ".png";
    const std::string mask_rel = "masks/" + s.name + ".png";
    write_image_png((fs::path(dir) / image_rel).string(), s.image);
    write_mask_png((fs::path(dir) / mask_rel).string(), s.mask);
    json rec{{"image", image_rel}, {"mask", mask_rel}};
    if (!s.split.empty()) rec["split"] = s.split;
    manifest.push_back(rec);
  }
  std::ofstream f((fs::path(dir) / "manifest.json").string());
  f << manifest.dump(2) << "\n";
  if (!f) throw DataError("failed to write manifest under " + dir);
}

namespace {

struct Hsv {
  double h, s, v;  // h in [0,1)
};

Hsv rgb_to_hsv(double r, double g, double b) {
  double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  double d = mx - mn;
  Hsv out{0.0, mx > 0 ? d / mx : 0.0, mx};
  if (d > 0) {
    if (mx == r)
      out.h = std::fmod((g - b) / d / 6.0 + 1.0, 1.0);
    else if (mx == g)
      out.h = ((b - r) / d + 2.0) / 6.0;
    else
      out.h = ((r - g) / d + 4.0) / 6.0;
  }
  return out;
}

void hsv_to_rgb(const Hsv& hsv, double& r, double& g, double& b) {
  double h = std::fmod(std::fmod(hsv.h, 1.0) + 1.0, 1.0) * 6.0;
  int i = int(h) % 6;
  double f = h - std::floor(h);
  double p = hsv.v * (1.0 - hsv.s);
  double q = hsv.v * (1.0 - hsv.s * f);
  double t = hsv.v * (1.0 - hsv.s * (1.0 - f));
  switch (i) {
    case 0: r = hsv.v; g = t; b = p; break;
    case 1: r = q; g = hsv.v; b = p; break;
    case 2: r = p; g = hsv.v; b = t; break;
    case 3: r = p; g = q; b = hsv.v; break;
    case 4: r = t; g = p; b = hsv.v; break;
    default: r = hsv.v; g = p; b = q; break;
  }
}

uint8_t clamp_u8(double v) { return uint8_t(std::min(255.0, std::max(0.0, std::round(v)))); }

void color_jitter(ImageU8& image, const AugmentConfig& cfg, Rng& rng) {
  const double dh = rng.uniform(-cfg.hue_delta, cfg.hue_delta);
  const double cs = rng.uniform(cfg.sat_min, cfg.sat_max);
  const double cv = rng.uniform(cfg.val_min, cfg.val_max);
  const double cc = rng.uniform(cfg.contrast_min, cfg.contrast_max);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      uint8_t* px = image.at(x, y);
      Hsv hsv = rgb_to_hsv(px[0] / 255.0, px[1] / 255.0, px[2] / 255.0);
      hsv.h += dh;
      hsv.s = std::min(1.0, std::max(0.0, hsv.s * cs));
      hsv.v = std::min(1.0, std::max(0.0, hsv.v * cv));
      double r, g, b;
      hsv_to_rgb(hsv, r, g, b);
      // contrast around mid-gray, in linear rgb
      px[0] = clamp_u8(((r - 0.5) * cc + 0.5) * 255.0);
      px[1] = clamp_u8(((g - 0.5) * cc + 0.5) * 255.0);
      px[2] = clamp_u8(((b - 0.5) * cc + 0.5) * 255.0);
    }
}

struct Affine {
  // dest = A * src + t
  double a = 1, b = 0, c = 0, d = 1;
  double tx = 0, ty = 0;

  std::pair<double, double> apply(double x, double y) const {
    return {a * x + b * y + tx, c * x + d * y + ty};
  }
  Affine inverse() const {
    double det = a * d - b * c;
    Affine inv;
    inv.a = d / det;
    inv.b = -b / det;
    inv.c = -c / det;
    inv.d = a / det;
    inv.tx = -(inv.a * tx + inv.b * ty);
    inv.ty = -(inv.c * tx + inv.d * ty);
    return inv;
  }
};

// mirror -> scale -> rotate about the image center, then translate.
Affine make_transform(bool mirror, double scale, double angle_rad, double trans_x,
                      double trans_y, double cx, double cy) {
  double cosb = std::cos(angle_rad), sinb = std::sin(angle_rad);
  double fx = mirror ? -1.0 : 1.0;
  Affine m;
  m.a = cosb * scale * fx;
  m.b = -sinb * scale;
  m.c = sinb * scale * fx;
  m.d = cosb * scale;
  // dest = R*S*F*(src - c) + c + t
  m.tx = cx + trans_x - (m.a * cx + m.b * cy);
  m.ty = cy + trans_y - (m.c * cx + m.d * cy);
  return m;
}

double bilinear(const ImageU8& img, int channel, double x, double y) {
  int x0 = int(std::floor(x)), y0 = int(std::floor(y));
  double fx = x - x0, fy = y - y0;
  auto sample = [&](int xi, int yi) -> double {
    if (xi < 0 || xi >= img.width || yi < 0 || yi >= img.height) return 0.0;  // black fill
    return img.at(xi, yi)[channel];
  };
  return sample(x0, y0) * (1 - fx) * (1 - fy) + sample(x0 + 1, y0) * fx * (1 - fy) +
         sample(x0, y0 + 1) * (1 - fx) * fy + sample(x0 + 1, y0 + 1) * fx * fy;
}

}  // namespace

Sample augment(const Sample& sample, const AugmentConfig& cfg, Rng& rng) {
  const int w = sample.image.width, h = sample.image.height;

  // Draw order is fixed; the per-sample stream makes augmentation bitwise
  // deterministic for a given seed.
  const bool mirror = rng.uniform() < cfg.mirror_prob;
  const double angle = rng.uniform(cfg.rotation_min_deg, cfg.rotation_max_deg) * 3.14159265358979323846 / 180.0;
  const double tx = rng.uniform(cfg.translation_min_px, cfg.translation_max_px);
  const double ty = rng.uniform(cfg.translation_min_px, cfg.translation_max_px);
  const double scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  const bool jitter = rng.uniform() < cfg.color_jitter_prob;

  // Pixel centers sit at integer coordinates; the lattice center is
  // ((w-1)/2, (h-1)/2), so a pure mirror maps pixel x to w-1-x and the
  // re-extracted box center lands exactly at w - cx.
  const Affine fwd =
      make_transform(mirror, scale, angle, tx, ty, (w - 1) / 2.0, (h - 1) / 2.0);
  const Affine inv = fwd.inverse();

  Sample out;
  out.name = sample.name;
  out.split = sample.split;
  out.image = make_image(w, h);
  out.mask = make_mask(w, h);

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // pixel centers sit at integer coordinates for resampling purposes
      auto [sx, sy] = inv.apply(double(x), double(y));
      uint8_t* px = out.image.at(x, y);
      for (int c = 0; c < 3; ++c) px[c] = clamp_u8(bilinear(sample.image, c, sx, sy));
      int nx = int(std::lround(sx)), ny = int(std::lround(sy));
      if (nx >= 0 && nx < w && ny >= 0 && ny < h) out.mask.at(x, y) = sample.mask.at(nx, ny);
    }

  // Instances whose transformed centers leave the image are dropped whole.
  // Box centers use the pixel-as-unit-square convention, shifted by half a
  // pixel from the resampling lattice.
  auto original = extract_instances(sample.mask);
  std::set<uint16_t> dropped;
  for (const auto& inst : original) {
    auto [dx, dy] = fwd.apply(inst.box.cx - 0.5, inst.box.cy - 0.5);
    if (dx < -0.5 || dx >= w - 0.5 || dy < -0.5 || dy >= h - 0.5)
      dropped.insert(uint16_t(inst.id));
  }
  if (!dropped.empty())
    for (auto& id : out.mask.ids)
      if (dropped.count(id)) id = 0;

  if (jitter) color_jitter(out.image, cfg, rng);

  out.annotations = annotations_from(extract_instances(out.mask));
  return out;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_dataset(
    const std::vector<Sample>& samples, int train_parts, int test_parts, uint64_t seed) {
  if (train_parts < 0 || test_parts < 0 || train_parts + test_parts <= 0)
    throw ConfigError("split ratio parts must be nonnegative and not both zero");
  std::vector<size_t> order(samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_int(uint32_t(i))]);

  const size_t train_count =
      samples.size() * size_t(train_parts) / size_t(train_parts + test_parts);
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (size_t i = 0; i < order.size(); ++i)
    (i < train_count ? out.first : out.second).push_back(samples[order[i]]);
  return out;
}

}  // namespace ffd
