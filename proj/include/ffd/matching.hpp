#pragma once

#include <span>
#include <utility>
#include <vector>

#include "ffd/geometry.hpp"
#include "ffd/lor.hpp"

namespace ffd {

// Per-tile matching cost matrix, one row per ground truth falling in the
// tile, one column per query slot.
struct CostMatrix {
  int rows = 0;  // G
  int cols = 0;  // N_g
  std::vector<double> values;
  int tile_row = 0, tile_col = 0;

  double& at(int r, int c) { return values[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
};

// Minimum-cost one-to-one assignment of rows to columns. `pairs` holds
// (row, column) sorted by row; rows left over when G > N_g land in
// `unmatched_rows`.
struct Assignment {
  std::vector<std::pair<int, int>> pairs;
  std::vector<int> unmatched_rows;
  double total_cost = 0.0;
};

// Matching cost of one (prediction, ground truth) pair: cross-entropy of the
// ground-truth class plus lambda times smooth-L1 between the denormalized
// prediction and the ground-truth box in absolute pixel space.
double match_cost(std::span<const float> pred_logits, const BoxNorm& pred_box,
                  const GtBox& gt, int tile_row, int tile_col, const TileGrid& grid,
                  double lambda = 1.0);

// Exact Hungarian assignment. Optimal over all injections of rows into
// columns (or columns into rows when G > N_g); ties broken toward the
// lexicographically smallest pair list.
Assignment hungarian(const CostMatrix& cost);

// Assignment over a whole image, keyed by global query column index.
struct TiledMatchResult {
  // (ground-truth index, query column) sorted by query column
  std::vector<std::pair<int, int>> pairs;
  std::vector<int> unmatched_gts;
  int cost_matrices_built = 0;  // == number of occupied tiles
};

// Groups ground truths by owning tile and runs Hungarian matching per
// occupied tile; tiles without ground truth build no cost matrix.
TiledMatchResult tiled_match(const HeadOutput& head, const std::vector<GtBox>& gts,
                             const TileGrid& grid, double lambda = 1.0);

}  // namespace ffd
