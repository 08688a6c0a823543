#pragma once

#include <vector>

#include "ffd/image.hpp"
#include "ffd/metrics.hpp"
#include "ffd/model.hpp"

namespace ffd {

// Postprocessing-free decode: every query is read independently. A query
// emits a detection iff its argmax class is not background and the softmax
// probability reaches the threshold; the box is denormalized to the query's
// own tile. No NMS, no duplicate suppression of any kind, so at most
// N_g * H_o * W_o detections can come out.
std::vector<Detection> decode_detections(const HeadOutput& head, const TileGrid& grid,
                                         double score_threshold, int image_id = 0);

// Eval-mode forward + decode. The image size must be divisible by the
// model's stride.
std::vector<Detection> infer_image(const Model& model, const ImageU8& image, double score_threshold,
                                   int image_id = 0);

}  // namespace ffd
