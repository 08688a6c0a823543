#include "ffd/infer.hpp"

#include <cmath>

namespace ffd {

std::vector<Detection> decode_detections(const HeadOutput& head, const TileGrid& grid,
                                         double score_threshold, int image_id) {
  const int nq = head.num_queries();
  const int k = head.num_classes();
  std::vector<Detection> out;
  for (int q = 0; q < nq; ++q) {
    double mx = head.logit(q, 0);
    int best = 0;
    for (int c = 1; c < k; ++c)
      if (head.logit(q, c) > mx) {
        mx = head.logit(q, c);
        best = c;
      }
    if (best == 0) continue;  // background argmax
    double denom = 0.0;
    for (int c = 0; c < k; ++c) denom += std::exp(double(head.logit(q, c)) - mx);
    const double score = 1.0 / denom;
    if (score < score_threshold) continue;

    auto [tr, tc, slot] = query_index_to_tile(q, head.grid_h, head.grid_w, head.n_g);
    (void)slot;
    auto bp = head.box(q);
    Detection det;
    det.box = denormalize_box({bp[0], bp[1], bp[2], bp[3]}, tr, tc, grid);
    det.class_id = best;
    det.score = score;
    det.image_id = image_id;
    out.push_back(det);
  }
  return out;
}

std::vector<Detection> infer_image(const Model& model, const ImageU8& image, double score_threshold,
                                   int image_id) {
  const int stride = tile_size(model.config.backbone.tile);
  if (image.width % stride != 0 || image.height % stride != 0)
    throw ConfigError("image " + std::to_string(image.width) + "x" +
                      std::to_string(image.height) + " is not divisible by the model stride " +
                      std::to_string(stride) + "; use e.g. " +
                      std::to_string((image.width / stride) * stride) + "x" +
                      std::to_string((image.height / stride) * stride));
  Tape tape(false);
  auto tensor = image_to_tensor<float>(image);
  auto head = model_forward_inference(tape, model, tensor);
  auto grid = model_grid(model, image.width, image.height);
  return decode_detections(head, grid, score_threshold, image_id);
}

}  // namespace ffd
