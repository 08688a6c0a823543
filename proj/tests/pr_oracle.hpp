// Brute-force precision-recall oracle used by the metrics tests and the
// acceptance suite. Kept independent of src/metrics.cpp: its own matching
// loop, its own interpolation scan.
#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "ffd/metrics.hpp"

namespace ffd_test {

inline std::optional<double> oracle_ap(const std::vector<ffd::Detection>& dets,
                                       const std::vector<ffd::GroundTruth>& gts, double thr,
                                       double area_lo, double area_hi) {
  int n_gt = 0;
  for (const auto& g : gts) {
    double area = g.box.w * g.box.h;
    if (area > area_lo && area <= area_hi) ++n_gt;
  }
  if (n_gt == 0) return std::nullopt;

  std::vector<std::pair<double, size_t>> keyed;
  for (size_t i = 0; i < dets.size(); ++i) keyed.push_back({-dets[i].score, i});
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<char> matched(gts.size(), 0);
  std::vector<double> prec, rec;
  int tp = 0, fp = 0;
  for (const auto& [negscore, di] : keyed) {
    const ffd::Detection& d = dets[di];
    int best = -1, best_ig = -1;
    double best_v = -1, best_ig_v = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].image_id != d.image_id || gts[g].class_id != d.class_id) continue;
      double v = ffd::iou(d.box, gts[g].box);
      if (v < thr) continue;
      double area = gts[g].box.w * gts[g].box.h;
      bool in_band = area > area_lo && area <= area_hi;
      if (in_band && !matched[g] && v > best_v) {
        best_v = v;
        best = int(g);
      } else if (!in_band && v > best_ig_v) {
        best_ig_v = v;
        best_ig = int(g);
      }
    }
    if (best >= 0) {
      matched[size_t(best)] = 1;
      ++tp;
    } else if (best_ig >= 0) {
      continue;  // ignored: matched an out-of-band gt
    } else {
      ++fp;
    }
    prec.push_back(double(tp) / (tp + fp));
    rec.push_back(double(tp) / n_gt);
  }

  double total = 0;
  for (int i = 0; i <= 100; ++i) {
    double r = i / 100.0;
    double p = 0;
    for (size_t k = 0; k < rec.size(); ++k)
      if (rec[k] >= r && prec[k] > p) p = prec[k];
    total += p;
  }
  return total / 101.0;
}

}  // namespace ffd_test
