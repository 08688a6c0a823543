#pragma once

#include <optional>
#include <vector>

#include "ffd/geometry.hpp"

namespace ffd {

struct Detection {
  BoxAbs box;
  int class_id = 1;
  double score = 0.0;  // in [0, 1]
  int image_id = 0;
};

struct GroundTruth {
  BoxAbs box;
  int class_id = 1;
  int image_id = 0;
};

// Average precision over all bands; fields stay empty when the band holds no
// ground truth (not applicable rather than zero).
struct EvalReport {
  std::optional<double> ap;
  std::optional<double> ap_small;   // gt area in [0, 10^2]
  std::optional<double> ap_medium;  // (10^2, 30^2]
  std::optional<double> ap_large;   // > 30^2
  std::vector<double> thresholds;
  std::vector<std::optional<double>> per_threshold;
};

// AP at one IoU threshold: detections sorted by descending score (ties by
// insertion order), greedily matched to the unmatched ground truth of
// highest IoU >= threshold within the same image and class; area under the
// precision-recall curve via 101-point interpolation.
std::optional<double> ap_at_iou(const std::vector<Detection>& detections,
                                const std::vector<GroundTruth>& gts, double iou_threshold);

// Mean AP over thresholds 0.50:0.05:0.95 plus area-banded variants. Banded
// evaluation restricts ground truths to the band; detections matched to an
// out-of-band ground truth are ignored rather than counted as false
// positives.
EvalReport coco_style_report(const std::vector<Detection>& detections,
                             const std::vector<GroundTruth>& gts,
                             std::vector<double> thresholds = {});

}  // namespace ffd
