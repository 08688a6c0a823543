#pragma once

#include <utility>
#include <vector>

#include "ffd/errors.hpp"

namespace ffd {

// Absolute-pixel box: center + extents.
struct BoxAbs {
  double cx = 0, cy = 0, w = 0, h = 0;
};

// Tile-relative normalized box: center offset in tile units, extents as
// log(w/W), log(h/H) of the full image. Extents scale by image size while
// offsets scale by tile size; implemented exactly as specified.
struct BoxNorm {
  double ncx = 0, ncy = 0, lw = 0, lh = 0;
};

// Non-overlapping tiling of a W x H image into cols x rows tiles of
// tile_w x tile_h pixels each.
struct TileGrid {
  double tile_w = 0, tile_h = 0;
  int rows = 0, cols = 0;
  double image_w = 0, image_h = 0;

  static TileGrid from_image(int image_w, int image_h, int tile);
};

// Tile owning a box center: col = floor(cx / tile_w), row = floor(cy / tile_h).
// Centers exactly on a boundary belong to the higher-index tile; the image
// edge clamps to the last tile. Throws if the center is outside the image.
std::pair<int, int> assign_tile(const BoxAbs& box, const TileGrid& grid);

BoxNorm normalize_box(const BoxAbs& box, int tile_row, int tile_col, const TileGrid& grid);
BoxAbs denormalize_box(const BoxNorm& nb, int tile_row, int tile_col, const TileGrid& grid);

// Ground-truth annotation: box plus class id (background is 0, fruit 1).
struct GtBox {
  BoxAbs box;
  int class_id = 1;
};

// Intersection area / union area, in [0, 1]; 0 for disjoint boxes.
double iou(const BoxAbs& a, const BoxAbs& b);

// Axis-aligned bounding box of a pixel set under the pixel-as-unit-square
// convention: pixel (x, y) covers [x, x+1) x [y, y+1), so a single pixel at
// (5,5) yields center (5.5, 5.5) and extent 1x1. Equals the bounding box of
// the convex hull, since a hull cannot extend past the extreme pixels.
BoxAbs box_from_mask(const std::vector<std::pair<int, int>>& instance_pixels);

}  // namespace ffd
