#include "ffd/synth.hpp"

#include <algorithm>
#include <cmath>

namespace ffd {

namespace {

struct PixelBounds {
  int min_x, max_x, min_y, max_y;
  int w() const { return max_x - min_x + 1; }
  int h() const { return max_y - min_y + 1; }
};

PixelBounds bounds_of(const std::vector<std::pair<int, int>>& pixels) {
  PixelBounds b{pixels[0].first, pixels[0].first, pixels[0].second, pixels[0].second};
  for (const auto& [x, y] : pixels) {
    b.min_x = std::min(b.min_x, x);
    b.max_x = std::max(b.max_x, x);
    b.min_y = std::min(b.min_y, y);
    b.max_y = std::max(b.max_y, y);
  }
  return b;
}

// Inclusive pixel ranges overlap iff both axes intersect; touching in
// continuous coordinates means adjacent pixel ranges, which do not.
bool ranges_overlap(const PixelBounds& a, const PixelBounds& b) {
  return a.min_x <= b.max_x && b.min_x <= a.max_x && a.min_y <= b.max_y && b.min_y <= a.max_y;
}

}  // namespace

SynthScene synthesize_scene(const ImageU8& base_image, const std::vector<PoolEntry>& pool,
                            const SynthConfig& config, Rng& rng) {
  if (pool.empty()) throw DataError("synthesize_scene: instance pool is empty");
  for (const auto& entry : pool)
    if (entry.instances.empty())
      throw DataError("synthesize_scene: pool entry without instances");
  if (config.n_max < 1) throw ConfigError("synthesize_scene: n_max must be >= 1");

  const int w = base_image.width, h = base_image.height;
  SynthScene scene;
  scene.image = base_image;
  scene.mask = make_mask(w, h);

  std::vector<PixelBounds> accepted;
  const int n_i = int(rng.uniform_int(uint32_t(config.n_max)));

  for (int t = 0; t < n_i; ++t) {
    const PoolEntry& src = pool[rng.uniform_int(uint32_t(pool.size()))];
    const InstanceRecord& inst = src.instances[rng.uniform_int(uint32_t(src.instances.size()))];
    const PixelBounds src_bounds = bounds_of(inst.pixels);
    if (src_bounds.w() > w || src_bounds.h() > h) continue;  // cannot fit at all

    bool placed = false;
    for (int attempt = 0; attempt < config.max_placement_attempts && !placed; ++attempt) {
      const int px = int(rng.uniform_int(uint32_t(w - src_bounds.w() + 1)));
      const int py = int(rng.uniform_int(uint32_t(h - src_bounds.h() + 1)));
      const PixelBounds dst{px, px + src_bounds.w() - 1, py, py + src_bounds.h() - 1};

      bool collides = false;
      for (const auto& prev : accepted)
        if (ranges_overlap(prev, dst)) {
          collides = true;
          break;
        }
      if (collides) continue;

      const uint16_t new_id = uint16_t(accepted.size() + 1);
      for (const auto& [sx, sy] : inst.pixels) {
        const int dx = px + (sx - src_bounds.min_x);
        const int dy = py + (sy - src_bounds.min_y);
        const uint8_t* sp = src.image.at(sx, sy);
        uint8_t* dp = scene.image.at(dx, dy);
        dp[0] = sp[0];
        dp[1] = sp[1];
        dp[2] = sp[2];
        scene.mask.at(dx, dy) = new_id;
      }
      accepted.push_back(dst);
      BoxAbs box;
      box.w = dst.w();
      box.h = dst.h();
      box.cx = dst.min_x + box.w / 2;
      box.cy = dst.min_y + box.h / 2;
      scene.annotations.push_back({box, inst.class_id});
      placed = true;
    }
    // exhausted attempts: the instance is skipped, generation stays total
  }
  return scene;
}

bool verify_overlap_free(const std::vector<GtBox>& annotations) {
  for (size_t i = 0; i < annotations.size(); ++i)
    for (size_t j = i + 1; j < annotations.size(); ++j) {
      const BoxAbs& a = annotations[i].box;
      const BoxAbs& b = annotations[j].box;
      double ix = std::min(a.cx + a.w / 2, b.cx + b.w / 2) - std::max(a.cx - a.w / 2, b.cx - b.w / 2);
      double iy = std::min(a.cy + a.h / 2, b.cy + b.h / 2) - std::max(a.cy - a.h / 2, b.cy - b.h / 2);
      if (ix > 0 && iy > 0) return false;
    }
  return true;
}

}  // namespace ffd
