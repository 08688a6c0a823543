#include "ffd/loss.hpp"

#include <algorithm>

namespace ffd {

double cross_entropy(std::span<const double> logits, int target) {
  if (target < 0 || target >= static_cast<int>(logits.size()))
    throw ConfigError("cross_entropy: target class out of range");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double denom = 0.0;
  for (double v : logits) denom += std::exp(v - mx);
  return std::log(denom) - (logits[static_cast<size_t>(target)] - mx);
}

double smooth_l1(const std::array<double, 4>& pred, const std::array<double, 4>& target,
                 double beta) {
  if (beta <= 0) throw ConfigError("smooth_l1: beta must be positive");
  double total = 0.0;
  for (int i = 0; i < 4; ++i)
    total += smooth_l1_term(pred[static_cast<size_t>(i)] - target[static_cast<size_t>(i)], beta);
  return total;
}

QueryTargets build_targets(const TiledMatchResult& match, const std::vector<GtBox>& gts,
                           const TileGrid& grid, int num_queries, int grid_h, int grid_w,
                           int n_g) {
  QueryTargets t;
  t.class_targets.assign(static_cast<size_t>(num_queries), 0);
  t.box_targets.assign(static_cast<size_t>(num_queries), std::nullopt);
  for (const auto& [gt_index, column] : match.pairs) {
    if (column < 0 || column >= num_queries)
      throw DimensionError("column", "build_targets: assignment column out of range");
    const GtBox& gt = gts[static_cast<size_t>(gt_index)];
    auto [tr, tc, slot] = query_index_to_tile(column, grid_h, grid_w, n_g);
    (void)slot;
    t.class_targets[static_cast<size_t>(column)] = gt.class_id;
    t.box_targets[static_cast<size_t>(column)] = normalize_box(gt.box, tr, tc, grid);
  }
  return t;
}

}  // namespace ffd
