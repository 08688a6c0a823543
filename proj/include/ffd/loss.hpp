#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "ffd/geometry.hpp"
#include "ffd/lor.hpp"
#include "ffd/matching.hpp"
#include "ffd/tensor.hpp"

namespace ffd {

// Per-coordinate smooth-L1 kernel: quadratic inside |d| < beta, linear
// outside. Both branches meet at 0.5*beta. Shared between the training loss
// and the matching cost.
template <typename S>
inline S smooth_l1_term(S d, S beta) {
  S a = std::abs(d);
  return a < beta ? S(0.5) * d * d / beta : a - S(0.5) * beta;
}

// -log softmax(logits)[target], stabilized by max-subtraction.
double cross_entropy(std::span<const double> logits, int target);

// Smooth-L1 between two 4-vectors, summed over coordinates.
double smooth_l1(const std::array<double, 4>& pred, const std::array<double, 4>& target,
                 double beta = 1.0);

// Per-query training targets derived from a tiled assignment. Matched
// queries carry the ground-truth class and its box normalized to the query's
// own tile; everything else is background (class 0, no box target).
struct QueryTargets {
  std::vector<int> class_targets;
  std::vector<std::optional<BoxNorm>> box_targets;

  int matched_count() const {
    int n = 0;
    for (const auto& b : box_targets) n += b.has_value() ? 1 : 0;
    return n;
  }
};

QueryTargets build_targets(const TiledMatchResult& match, const std::vector<GtBox>& gts,
                           const TileGrid& grid, int num_queries, int grid_h, int grid_w,
                           int n_g);

// L = mean cross-entropy over all queries + lambda * mean smooth-L1 over
// matched queries (normalized box space). Differentiable end to end; with no
// matched queries the box term contributes zero.
template <typename S>
struct LossBreakdown {
  TensorT<S> total;
  double class_term = 0.0;
  double box_term = 0.0;
};

template <typename S>
LossBreakdown<S> total_loss(TapeT<S>& tape, const HeadOutputT<S>& head,
                            const QueryTargets& targets, double lambda = 1.0) {
  const int nq = head.num_queries();
  if (static_cast<int>(targets.class_targets.size()) != nq)
    throw DimensionError("column", "total_loss: one class target per query required");

  LossBreakdown<S> out;
  auto ce = tape.softmax_cross_entropy_mean(head.class_logits, targets.class_targets);
  out.class_term = static_cast<double>(ce->values[0]);

  std::vector<int> matched;
  for (int q = 0; q < nq; ++q)
    if (targets.box_targets[static_cast<size_t>(q)].has_value()) matched.push_back(q);

  if (matched.empty()) {
    out.total = ce;
    return out;
  }

  std::vector<S> tgt(4 * matched.size());
  for (size_t j = 0; j < matched.size(); ++j) {
    const BoxNorm& b = *targets.box_targets[static_cast<size_t>(matched[j])];
    tgt[j] = static_cast<S>(b.ncx);
    tgt[matched.size() + j] = static_cast<S>(b.ncy);
    tgt[2 * matched.size() + j] = static_cast<S>(b.lw);
    tgt[3 * matched.size() + j] = static_cast<S>(b.lh);
  }
  auto pred = tape.select_columns(head.box_params, matched);
  auto target_tensor = tape.leaf({4, static_cast<int>(matched.size())}, std::move(tgt));
  auto box = tape.smooth_l1_mean(pred, target_tensor, S(1));
  out.box_term = static_cast<double>(box->values[0]);
  out.total = tape.add(ce, tape.scale(box, static_cast<S>(lambda)));
  return out;
}

}  // namespace ffd
