#pragma once

#include <json.hpp>

#include "ffd/data.hpp"
#include "ffd/model.hpp"
#include "ffd/train.hpp"

namespace ffd {

inline void to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = nlohmann::json{{"layers_per_stage", c.layers_per_stage},
                     {"channels_per_stage", c.channels_per_stage},
                     {"tile", tile_size(c.tile)},
                     {"input_h", c.input_h},
                     {"input_w", c.input_w}};
}

inline TileMode tile_mode_from(int tile) {
  switch (tile) {
    case 16: return TileMode::Tile16;
    case 32: return TileMode::Tile32;
    case 64: return TileMode::Tile64;
    default: throw ConfigError("tile must be one of 16, 32, 64; got " + std::to_string(tile));
  }
}

inline void from_json(const nlohmann::json& j, BackboneConfig& c) {
  BackboneConfig defaults;
  c.layers_per_stage = j.value("layers_per_stage", defaults.layers_per_stage);
  c.channels_per_stage = j.value("channels_per_stage", defaults.channels_per_stage);
  c.tile = tile_mode_from(j.value("tile", 32));
  c.input_h = j.value("input_h", defaults.input_h);
  c.input_w = j.value("input_w", defaults.input_w);
}

inline void to_json(nlohmann::json& j, const LORConfig& c) {
  j = nlohmann::json{{"d", c.d},
                     {"n_g", c.n_g},
                     {"repetitions", c.repetitions},
                     {"expansion", c.expansion},
                     {"num_classes", c.num_classes},
                     {"squeeze", c.squeeze == SqueezeKind::Sigmoid ? "sigmoid" : "softmax"}};
}

inline void from_json(const nlohmann::json& j, LORConfig& c) {
  LORConfig defaults;
  c.d = j.value("d", defaults.d);
  c.n_g = j.value("n_g", defaults.n_g);
  c.repetitions = j.value("repetitions", defaults.repetitions);
  c.expansion = j.value("expansion", defaults.expansion);
  c.num_classes = j.value("num_classes", defaults.num_classes);
  const std::string squeeze = j.value("squeeze", "sigmoid");
  if (squeeze == "sigmoid")
    c.squeeze = SqueezeKind::Sigmoid;
  else if (squeeze == "softmax")
    c.squeeze = SqueezeKind::Softmax;
  else
    throw ConfigError("squeeze must be 'sigmoid' or 'softmax'");
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"backbone", c.backbone}, {"lor", c.lor}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (j.contains("backbone")) j.at("backbone").get_to(c.backbone);
  if (j.contains("lor")) j.at("lor").get_to(c.lor);
}

inline void to_json(nlohmann::json& j, const AugmentConfig& c) {
  j = nlohmann::json{{"color_jitter_prob", c.color_jitter_prob},
                     {"rotation_deg", {c.rotation_min_deg, c.rotation_max_deg}},
                     {"translation_px", {c.translation_min_px, c.translation_max_px}},
                     {"mirror_prob", c.mirror_prob},
                     {"scale", {c.scale_min, c.scale_max}}};
}

inline void from_json(const nlohmann::json& j, AugmentConfig& c) {
  AugmentConfig defaults;
  c.color_jitter_prob = j.value("color_jitter_prob", defaults.color_jitter_prob);
  if (j.contains("rotation_deg")) {
    c.rotation_min_deg = j["rotation_deg"][0];
    c.rotation_max_deg = j["rotation_deg"][1];
  }
  if (j.contains("translation_px")) {
    c.translation_min_px = j["translation_px"][0];
    c.translation_max_px = j["translation_px"][1];
  }
  c.mirror_prob = j.value("mirror_prob", defaults.mirror_prob);
  if (j.contains("scale")) {
    c.scale_min = j["scale"][0];
    c.scale_max = j["scale"][1];
  }
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"base_lr", c.base_lr},
                     {"weight_decay", c.weight_decay},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"epochs", c.epochs},
                     {"lambda", c.lambda},
                     {"seed", c.seed},
                     {"augment_enabled", c.augment_enabled},
                     {"augment", c.augment},
                     {"model", c.model},
                     {"grad_accum", c.grad_accum},
                     {"max_iterations", c.max_iterations}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig defaults;
  c.base_lr = j.value("base_lr", defaults.base_lr);
  c.weight_decay = j.value("weight_decay", defaults.weight_decay);
  c.adam_beta1 = j.value("adam_beta1", defaults.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", defaults.adam_beta2);
  c.epochs = j.value("epochs", defaults.epochs);
  c.lambda = j.value("lambda", defaults.lambda);
  c.seed = j.value("seed", defaults.seed);
  c.augment_enabled = j.value("augment_enabled", defaults.augment_enabled);
  if (j.contains("augment")) j.at("augment").get_to(c.augment);
  if (j.contains("model")) j.at("model").get_to(c.model);
  c.grad_accum = j.value("grad_accum", defaults.grad_accum);
  c.max_iterations = j.value("max_iterations", defaults.max_iterations);
  if (c.base_lr <= 0 || c.adam_beta1 <= 0 || c.adam_beta1 >= 1 || c.adam_beta2 <= 0 ||
      c.adam_beta2 >= 1 || c.weight_decay < 0)
    throw ConfigError("train config: rates must be positive and betas inside (0, 1)");
}

}  // namespace ffd
