#pragma once

#include <string>

#include "ffd/backbone.hpp"
#include "ffd/geometry.hpp"
#include "ffd/lor.hpp"

namespace ffd {

struct ModelConfig {
  BackboneConfig backbone;
  LORConfig lor;
};

// Reference-resolution preset: 320x256 input, C=256 features, N_g per tile mode.
inline ModelConfig preset_config(TileMode mode) {
  ModelConfig c;
  c.backbone.tile = mode;
  c.backbone.input_w = 320;
  c.backbone.input_h = 256;
  c.lor.n_g = default_n_g(mode);
  return c;
}

template <typename S>
struct ModelT {
  ModelConfig config;
  BackboneParamsT<S> backbone;
  LORParamsT<S> lor;

  int64_t param_count() const { return backbone.param_count() + lor.param_count(); }
};

using Model = ModelT<float>;

template <typename S>
ModelT<S> build_model(const ModelConfig& config, uint64_t seed) {
  Rng rng(seed);
  ModelT<S> m;
  m.config = config;
  m.backbone = build_backbone<S>(config.backbone, rng);
  m.lor = build_lor<S>(config.lor, config.backbone.channels_per_stage[4], rng);
  return m;
}

template <typename S>
HeadOutputT<S> model_forward(TapeT<S>& tape, ModelT<S>& model, const TensorT<S>& image,
                             BatchNormMode mode) {
  auto t_f = backbone_forward(tape, model.backbone, image, mode);
  return lor_head_forward(tape, model.lor, t_f);
}

// Inference path; see backbone_forward_inference for the normalization.
template <typename S>
HeadOutputT<S> model_forward_inference(TapeT<S>& tape, const ModelT<S>& model,
                                       const TensorT<S>& image) {
  auto t_f = backbone_forward_inference(tape, model.backbone, image);
  return lor_head_forward(tape, model.lor, t_f);
}

// Tile grid covering an H x W image under the model's stride.
template <typename S>
TileGrid model_grid(const ModelT<S>& model, int image_w, int image_h) {
  return TileGrid::from_image(image_w, image_h, tile_size(model.config.backbone.tile));
}

// Deterministic traversal of all learnable tensors; checkpoint layout and
// optimizer slots both key off this order.
template <typename S, typename Fn>
void visit_params(ModelT<S>& model, Fn&& fn) {
  visit_backbone_params(model.backbone, fn);
  visit_lor_params(model.lor, fn);
}

// Non-learnable state (BN running stats), saved alongside parameters.
template <typename S, typename Fn>
void visit_state(ModelT<S>& model, Fn&& fn) {
  visit_backbone_state(model.backbone, fn);
}

}  // namespace ffd
