#include "ffd/matching.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>

#include "ffd/loss.hpp"

namespace ffd {

namespace {

// Jonker-Volgenant style shortest-augmenting-path solver on a square matrix.
// Returns row -> column and writes the minimal total into `total`.
std::vector<int> solve_square(const std::vector<std::vector<double>>& cost, double& total) {
  const int n = static_cast<int>(cost.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = p[j0], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  total = 0.0;
  for (int j = 1; j <= n; ++j)
    if (p[j]) {
      row_to_col[p[j] - 1] = j - 1;
      total += cost[p[j] - 1][j - 1];
    }
  return row_to_col;
}

// Minimal cost of matching min(|rows|, |cols|) of the given rows to distinct
// given columns. Rectangular handled by zero-padding to square: dummy rows
// absorb surplus columns at zero cost, dummy columns shift the total by a
// constant that cancels in comparisons.
double best_cost(const CostMatrix& cost, const std::vector<int>& rows,
                 const std::vector<int>& cols) {
  if (rows.empty() || cols.empty()) return 0.0;
  const int n = static_cast<int>(std::max(rows.size(), cols.size()));
  std::vector<std::vector<double>> square(n, std::vector<double>(n, 0.0));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < cols.size(); ++c)
      square[r][c] = cost.at(rows[r], cols[c]);
  double total = 0.0;
  solve_square(square, total);
  return total;
}

bool close(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

double match_cost(std::span<const float> pred_logits, const BoxNorm& pred_box, const GtBox& gt,
                  int tile_row, int tile_col, const TileGrid& grid, double lambda) {
  if (lambda < 0) throw ConfigError("match_cost: lambda must be nonnegative");
  std::vector<double> logits(pred_logits.begin(), pred_logits.end());
  double cls = cross_entropy(logits, gt.class_id);
  BoxAbs pred_abs = denormalize_box(pred_box, tile_row, tile_col, grid);
  double box = smooth_l1({pred_abs.cx, pred_abs.cy, pred_abs.w, pred_abs.h},
                         {gt.box.cx, gt.box.cy, gt.box.w, gt.box.h}, 1.0);
  return cls + lambda * box;
}

Assignment hungarian(const CostMatrix& cost) {
  if (cost.rows < 1 || cost.cols < 1)
    throw ConfigError("hungarian: cost matrix must be nonempty");
  for (double v : cost.values)
    if (!std::isfinite(v)) throw NumericalError("hungarian: cost matrix has non-finite entries");

  std::vector<int> all_cols(static_cast<size_t>(cost.cols));
  for (int c = 0; c < cost.cols; ++c) all_cols[static_cast<size_t>(c)] = c;
  std::vector<int> all_rows(static_cast<size_t>(cost.rows));
  for (int r = 0; r < cost.rows; ++r) all_rows[static_cast<size_t>(r)] = r;

  const double optimum = best_cost(cost, all_rows, all_cols);

  // Fix pairs row by row, smallest column first, keeping the total optimal.
  // This resolves cost ties toward the lexicographically smallest pair list.
  Assignment result;
  std::vector<int> cols_left = all_cols;
  int skips_left = std::max(0, cost.rows - cost.cols);
  double fixed = 0.0;
  for (int r = 0; r < cost.rows; ++r) {
    std::vector<int> rows_after;
    for (int rr = r + 1; rr < cost.rows; ++rr) rows_after.push_back(rr);

    int chosen = -1;
    for (int j : cols_left) {
      std::vector<int> cols_minus;
      for (int c : cols_left)
        if (c != j) cols_minus.push_back(c);
      double candidate = fixed + cost.at(r, j) + best_cost(cost, rows_after, cols_minus);
      if (close(candidate, optimum)) {
        chosen = j;
        break;
      }
    }
    if (chosen >= 0) {
      fixed += cost.at(r, chosen);
      result.pairs.emplace_back(r, chosen);
      cols_left.erase(std::find(cols_left.begin(), cols_left.end(), chosen));
    } else {
      if (skips_left <= 0)
        throw NumericalError("hungarian: internal inconsistency while fixing assignment");
      --skips_left;
      result.unmatched_rows.push_back(r);
    }
  }
  result.total_cost = fixed;
  return result;
}

TiledMatchResult tiled_match(const HeadOutput& head, const std::vector<GtBox>& gts,
                             const TileGrid& grid, double lambda) {
  if (head.grid_h != grid.rows || head.grid_w != grid.cols)
    throw DimensionError("tile", "head output grid does not match the tile grid");

  // Group ground truths by owning tile; map preserves ascending tile order
  // and original gt order within a tile.
  std::map<std::pair<int, int>, std::vector<int>> by_tile;
  for (size_t g = 0; g < gts.size(); ++g)
    by_tile[assign_tile(gts[g].box, grid)].push_back(static_cast<int>(g));

  const int k = head.num_classes();
  TiledMatchResult result;
  for (const auto& [tile, gt_indices] : by_tile) {
    const auto [tr, tc] = tile;
    CostMatrix cm;
    cm.rows = static_cast<int>(gt_indices.size());
    cm.cols = head.n_g;
    cm.tile_row = tr;
    cm.tile_col = tc;
    cm.values.resize(static_cast<size_t>(cm.rows) * cm.cols);

    std::vector<float> logits(static_cast<size_t>(k));
    for (int slot = 0; slot < head.n_g; ++slot) {
      const int col = tile_to_query_index(tr, tc, slot, head.grid_h, head.grid_w, head.n_g);
      for (int ci = 0; ci < k; ++ci) logits[static_cast<size_t>(ci)] = head.logit(col, ci);
      auto bp = head.box(col);
      BoxNorm pred{bp[0], bp[1], bp[2], bp[3]};
      for (int r = 0; r < cm.rows; ++r)
        cm.at(r, slot) =
            match_cost(logits, pred, gts[static_cast<size_t>(gt_indices[static_cast<size_t>(r)])], tr, tc, grid, lambda);
    }
    ++result.cost_matrices_built;

    Assignment a = hungarian(cm);
    for (const auto& [local_gt, slot] : a.pairs) {
      const int col = tile_to_query_index(tr, tc, slot, head.grid_h, head.grid_w, head.n_g);
      result.pairs.emplace_back(gt_indices[static_cast<size_t>(local_gt)], col);
    }
    if (!a.unmatched_rows.empty()) {
      std::cerr << "warning: tile (" << tr << ", " << tc << ") holds "
                << gt_indices.size() << " ground truths but only " << head.n_g
                << " query slots; " << a.unmatched_rows.size() << " left unmatched\n";
      for (int local_gt : a.unmatched_rows)
        result.unmatched_gts.push_back(gt_indices[static_cast<size_t>(local_gt)]);
    }
  }
  std::sort(result.pairs.begin(), result.pairs.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  return result;
}

}  // namespace ffd
