#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ffd/rng.hpp"
#include "ffd/tensor.hpp"

namespace ffd {

// Total stride of the feature extractor; one tile of the input image maps to
// one spatial site of its output.
enum class TileMode { Tile16, Tile32, Tile64 };

inline int tile_size(TileMode mode) {
  switch (mode) {
    case TileMode::Tile16: return 16;
    case TileMode::Tile32: return 32;
    case TileMode::Tile64: return 64;
  }
  throw ConfigError("unknown tile mode");
}

struct BackboneConfig {
  std::array<int, 5> layers_per_stage{2, 2, 3, 3, 4};
  std::array<int, 5> channels_per_stage{16, 32, 64, 128, 256};
  TileMode tile = TileMode::Tile32;
  int input_h = 64;
  int input_w = 64;
};

// 3x3 conv + BN + ReLU unit. Stage entry layers downsample except where the
// tile mode moves the final stage's strides (Tile16: none, Tile64: last two).
template <typename S>
struct ConvBnLayerT {
  TensorT<S> weight;  // [C_out, C_in, 3, 3]
  TensorT<S> bias;    // [C_out]
  TensorT<S> gamma;
  TensorT<S> beta;
  BatchNormStateT<S> bn_state;
  int stride = 1;
};

template <typename S>
struct BackboneParamsT {
  BackboneConfig config;
  std::vector<ConvBnLayerT<S>> layers;

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& l : layers)
      n += l.weight->numel() + l.bias->numel() + l.gamma->numel() + l.beta->numel();
    return n;
  }
};

using BackboneParams = BackboneParamsT<float>;

// Per-layer strides of one stage under the configured tile mode.
std::vector<int> stage_strides(const BackboneConfig& config, int stage);

// He fan-in initialization, deterministic for a given seed. Throws when the
// configured input size is not divisible by the total stride.
template <typename S>
BackboneParamsT<S> build_backbone(const BackboneConfig& config, Rng& rng);

// image is [3, H, W] with values in [0, 1]; output is C x H_o x W_o where
// H_o = H / stride. Train mode updates BN running stats.
template <typename S>
TensorT<S> backbone_forward(TapeT<S>& tape, BackboneParamsT<S>& params,
                            const TensorT<S>& image, BatchNormMode mode);

template <typename S, typename Fn>
void visit_backbone_params(BackboneParamsT<S>& params, Fn&& fn) {
  for (size_t i = 0; i < params.layers.size(); ++i) {
    const std::string base = "backbone.layer" + std::to_string(i);
    fn(base + ".weight", params.layers[i].weight);
    fn(base + ".bias", params.layers[i].bias);
    fn(base + ".gamma", params.layers[i].gamma);
    fn(base + ".beta", params.layers[i].beta);
  }
}

template <typename S, typename Fn>
void visit_backbone_state(BackboneParamsT<S>& params, Fn&& fn) {
  for (size_t i = 0; i < params.layers.size(); ++i) {
    const std::string base = "backbone.layer" + std::to_string(i);
    fn(base + ".running_mean", params.layers[i].bn_state.running_mean);
    fn(base + ".running_var", params.layers[i].bn_state.running_var);
  }
}

// --- template definitions --------------------------------------------------

inline std::vector<int> stage_strides(const BackboneConfig& config, int stage) {
  int layers = config.layers_per_stage[static_cast<size_t>(stage)];
  std::vector<int> strides(static_cast<size_t>(layers), 1);
  if (stage < 4) {
    strides[0] = 2;
    return strides;
  }
  switch (config.tile) {
    case TileMode::Tile16:
      break;  // final stage at unit stride
    case TileMode::Tile32:
      strides[0] = 2;
      break;
    case TileMode::Tile64:
      if (layers < 2)
        throw ConfigError("tile64 needs at least two layers in the final stage");
      strides[static_cast<size_t>(layers) - 1] = 2;
      strides[static_cast<size_t>(layers) - 2] = 2;
      break;
  }
  return strides;
}

template <typename S>
BackboneParamsT<S> build_backbone(const BackboneConfig& config, Rng& rng) {
  for (int c : config.layers_per_stage)
    if (c < 1) throw ConfigError("each backbone stage needs at least one layer");
  for (int c : config.channels_per_stage)
    if (c < 1) throw ConfigError("backbone channel counts must be positive");
  const int stride = tile_size(config.tile);
  if (config.input_h % stride != 0 || config.input_w % stride != 0)
    throw ConfigError("input size " + std::to_string(config.input_w) + "x" +
                      std::to_string(config.input_h) + " must be divisible by " +
                      std::to_string(stride));

  BackboneParamsT<S> params;
  params.config = config;
  int in_ch = 3;
  for (int stage = 0; stage < 5; ++stage) {
    const int out_ch = config.channels_per_stage[static_cast<size_t>(stage)];
    const auto strides = stage_strides(config, stage);
    for (int layer = 0; layer < config.layers_per_stage[static_cast<size_t>(stage)]; ++layer) {
      ConvBnLayerT<S> l;
      l.stride = strides[static_cast<size_t>(layer)];
      const int fan_in = in_ch * 9;
      const double std_dev = std::sqrt(2.0 / fan_in);
      std::vector<S> w(static_cast<size_t>(out_ch) * in_ch * 9);
      for (auto& v : w) v = static_cast<S>(rng.normal() * std_dev);
      l.weight = make_tensor<S>({out_ch, in_ch, 3, 3}, std::move(w), true);
      l.bias = make_zeros<S>({out_ch}, true);
      l.gamma = make_tensor<S>({out_ch}, std::vector<S>(out_ch, S(1)), true);
      l.beta = make_zeros<S>({out_ch}, true);
      l.bn_state.running_mean.assign(out_ch, S(0));
      l.bn_state.running_var.assign(out_ch, S(1));
      params.layers.push_back(std::move(l));
      in_ch = out_ch;
    }
  }
  return params;
}

template <typename S>
TensorT<S> backbone_forward(TapeT<S>& tape, BackboneParamsT<S>& params,
                            const TensorT<S>& image, BatchNormMode mode) {
  if (image->shape.size() != 3 || image->shape[0] != 3)
    throw DimensionError("channel", "backbone expects a 3 x H x W image tensor");
  const int stride = tile_size(params.config.tile);
  if (image->shape[1] % stride != 0 || image->shape[2] % stride != 0)
    throw ConfigError("image size " + std::to_string(image->shape[2]) + "x" +
                      std::to_string(image->shape[1]) + " must be divisible by " +
                      std::to_string(stride));
  TensorT<S> x = image;
  for (auto& l : params.layers) {
    x = tape.conv2d(x, l.weight, l.bias, l.stride, 1);
    x = tape.batch_norm(x, l.gamma, l.beta, &l.bn_state, mode);
    x = tape.relu(x);
  }
  return x;
}

// Inference forward on the batch-1 reference path: BatchNorm normalizes by
// the current image's spatial statistics on scratch state. Running buffers
// stay untouched, so the call is a pure function of (params, image) and the
// params can be shared across threads. Running-stat normalization collapses
// here because each channel of the deepest stage holds only a handful of
// values per image, making per-image statistics irreplaceable by any single
// stored estimate.
template <typename S>
TensorT<S> backbone_forward_inference(TapeT<S>& tape, const BackboneParamsT<S>& params,
                                      const TensorT<S>& image) {
  if (image->shape.size() != 3 || image->shape[0] != 3)
    throw DimensionError("channel", "backbone expects a 3 x H x W image tensor");
  const int stride = tile_size(params.config.tile);
  if (image->shape[1] % stride != 0 || image->shape[2] % stride != 0)
    throw ConfigError("image size " + std::to_string(image->shape[2]) + "x" +
                      std::to_string(image->shape[1]) + " must be divisible by " +
                      std::to_string(stride));
  TensorT<S> x = image;
  for (const auto& l : params.layers) {
    x = tape.conv2d(x, l.weight, l.bias, l.stride, 1);
    BatchNormStateT<S> scratch = l.bn_state;
    x = tape.batch_norm(x, l.gamma, l.beta, &scratch, BatchNormMode::Train);
    x = tape.relu(x);
  }
  return x;
}

}  // namespace ffd
