#include "ffd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "ffd/parallel.hpp"

namespace ffd {

namespace {

struct Band {
  double area_min = 0.0;
  double area_max = std::numeric_limits<double>::infinity();

  bool contains(const BoxAbs& b) const {
    double area = b.w * b.h;
    return area > area_min && area <= area_max;
  }
};

constexpr Band kAll{-1.0, std::numeric_limits<double>::infinity()};
constexpr Band kSmall{-1.0, 100.0};
constexpr Band kMedium{100.0, 900.0};
constexpr Band kLarge{900.0, std::numeric_limits<double>::infinity()};

// Greedy matching at one threshold within one band. Returns per-detection
// (tp, ignored) flags in globally sorted order plus the in-band gt count.
std::optional<double> ap_banded(const std::vector<Detection>& detections,
                                const std::vector<GroundTruth>& gts, double thr,
                                const Band& band) {
  int n_gt = 0;
  for (const auto& g : gts) n_gt += band.contains(g.box) ? 1 : 0;
  if (n_gt == 0) return std::nullopt;

  std::vector<int> order(detections.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return detections[size_t(a)].score > detections[size_t(b)].score;
  });

  std::map<std::pair<int, int>, std::vector<int>> gts_by_key;
  for (size_t g = 0; g < gts.size(); ++g)
    gts_by_key[{gts[g].image_id, gts[g].class_id}].push_back(int(g));

  std::vector<char> gt_matched(gts.size(), 0);
  std::vector<char> tp_flags, ignore_flags;
  tp_flags.reserve(order.size());
  ignore_flags.reserve(order.size());

  for (int di : order) {
    const Detection& det = detections[size_t(di)];
    auto it = gts_by_key.find({det.image_id, det.class_id});
    int best_gt = -1, best_ignored = -1;
    double best_iou = thr, best_ignored_iou = thr;
    if (it != gts_by_key.end()) {
      for (int g : it->second) {
        double v = iou(det.box, gts[size_t(g)].box);
        if (band.contains(gts[size_t(g)].box)) {
          if (!gt_matched[size_t(g)] && v >= best_iou) {
            best_iou = v;
            best_gt = g;
          }
        } else if (v >= best_ignored_iou) {
          best_ignored_iou = v;
          best_ignored = g;
        }
      }
    }
    if (best_gt >= 0) {
      gt_matched[size_t(best_gt)] = 1;
      tp_flags.push_back(1);
      ignore_flags.push_back(0);
    } else if (best_ignored >= 0) {
      tp_flags.push_back(0);
      ignore_flags.push_back(1);  // matched an out-of-band gt
    } else {
      tp_flags.push_back(0);
      ignore_flags.push_back(0);
    }
  }

  // precision-recall over non-ignored detections, then 101-point interpolation
  std::vector<double> precisions, recalls;
  int tp = 0, fp = 0;
  for (size_t i = 0; i < tp_flags.size(); ++i) {
    if (ignore_flags[i]) continue;
    tp_flags[i] ? ++tp : ++fp;
    precisions.push_back(double(tp) / (tp + fp));
    recalls.push_back(double(tp) / n_gt);
  }

  double ap_sum = 0.0;
  for (int r = 0; r <= 100; ++r) {
    double target = r / 100.0;
    double best = 0.0;
    for (size_t i = 0; i < recalls.size(); ++i)
      if (recalls[i] >= target) best = std::max(best, precisions[i]);
    ap_sum += best;
  }
  return ap_sum / 101.0;
}

}  // namespace

std::optional<double> ap_at_iou(const std::vector<Detection>& detections,
                                const std::vector<GroundTruth>& gts, double iou_threshold) {
  if (iou_threshold <= 0.0 || iou_threshold >= 1.0)
    throw ConfigError("ap_at_iou: threshold must lie in (0, 1)");
  return ap_banded(detections, gts, iou_threshold, kAll);
}

EvalReport coco_style_report(const std::vector<Detection>& detections,
                             const std::vector<GroundTruth>& gts,
                             std::vector<double> thresholds) {
  if (thresholds.empty())
    for (int i = 0; i < 10; ++i) thresholds.push_back(0.50 + 0.05 * i);

  EvalReport report;
  report.thresholds = thresholds;
  report.per_threshold.resize(thresholds.size());

  struct BandAccum {
    const Band* band;
    std::vector<std::optional<double>> values;
  };
  std::vector<BandAccum> bands{{&kAll, {}}, {&kSmall, {}}, {&kMedium, {}}, {&kLarge, {}}};
  for (auto& b : bands) b.values.resize(thresholds.size());

  // thresholds are independent; evaluate them on the worker pool
  parallel_for(int64_t(thresholds.size()), [&](int64_t begin, int64_t end) {
    for (int64_t t = begin; t < end; ++t)
      for (auto& b : bands)
        b.values[size_t(t)] = ap_banded(detections, gts, thresholds[size_t(t)], *b.band);
  });

  auto mean_defined = [](const std::vector<std::optional<double>>& vals) -> std::optional<double> {
    double sum = 0.0;
    int n = 0;
    for (const auto& v : vals)
      if (v) {
        sum += *v;
        ++n;
      }
    if (n == 0) return std::nullopt;
    return sum / n;
  };

  report.ap = mean_defined(bands[0].values);
  report.ap_small = mean_defined(bands[1].values);
  report.ap_medium = mean_defined(bands[2].values);
  report.ap_large = mean_defined(bands[3].values);
  report.per_threshold = bands[0].values;
  return report;
}

}  // namespace ffd
