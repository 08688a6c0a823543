#include "ffd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ffd {

TileGrid TileGrid::from_image(int image_w, int image_h, int tile) {
  if (tile <= 0) throw ConfigError("tile size must be positive");
  if (image_w % tile != 0 || image_h % tile != 0)
    throw ConfigError("image " + std::to_string(image_w) + "x" + std::to_string(image_h) +
                      " is not divisible by tile size " + std::to_string(tile));
  TileGrid g;
  g.tile_w = g.tile_h = static_cast<double>(tile);
  g.cols = image_w / tile;
  g.rows = image_h / tile;
  g.image_w = image_w;
  g.image_h = image_h;
  return g;
}

std::pair<int, int> assign_tile(const BoxAbs& box, const TileGrid& grid) {
  if (box.cx < 0 || box.cx >= grid.image_w || box.cy < 0 || box.cy >= grid.image_h)
    throw DataError("box center (" + std::to_string(box.cx) + ", " + std::to_string(box.cy) +
                    ") lies outside the image");
  int col = static_cast<int>(std::floor(box.cx / grid.tile_w));
  int row = static_cast<int>(std::floor(box.cy / grid.tile_h));
  col = std::min(col, grid.cols - 1);
  row = std::min(row, grid.rows - 1);
  return {row, col};
}

BoxNorm normalize_box(const BoxAbs& box, int tile_row, int tile_col, const TileGrid& grid) {
  if (box.w <= 0 || box.h <= 0)
    throw DataError("normalize_box: box extents must be positive");
  double gx = tile_col * grid.tile_w;
  double gy = tile_row * grid.tile_h;
  BoxNorm nb;
  nb.ncx = (box.cx - gx) / grid.tile_w;
  nb.ncy = (box.cy - gy) / grid.tile_h;
  nb.lw = std::log(box.w / grid.image_w);
  nb.lh = std::log(box.h / grid.image_h);
  return nb;
}

BoxAbs denormalize_box(const BoxNorm& nb, int tile_row, int tile_col, const TileGrid& grid) {
  double gx = tile_col * grid.tile_w;
  double gy = tile_row * grid.tile_h;
  BoxAbs box;
  box.cx = nb.ncx * grid.tile_w + gx;
  box.cy = nb.ncy * grid.tile_h + gy;
  box.w = std::exp(nb.lw) * grid.image_w;
  box.h = std::exp(nb.lh) * grid.image_h;
  return box;
}

double iou(const BoxAbs& a, const BoxAbs& b) {
  double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2;
  double ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
  double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2;
  double by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
  double ix = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  double iy = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  double inter = ix * iy;
  double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

BoxAbs box_from_mask(const std::vector<std::pair<int, int>>& instance_pixels) {
  if (instance_pixels.empty())
    throw DataError("box_from_mask: empty pixel set");
  int min_x = instance_pixels[0].first, max_x = min_x;
  int min_y = instance_pixels[0].second, max_y = min_y;
  for (const auto& [x, y] : instance_pixels) {
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  }
  BoxAbs box;
  box.w = max_x - min_x + 1;
  box.h = max_y - min_y + 1;
  box.cx = min_x + box.w / 2;
  box.cy = min_y + box.h / 2;
  return box;
}

}  // namespace ffd
