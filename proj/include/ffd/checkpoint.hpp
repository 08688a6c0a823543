#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ffd/model.hpp"
#include "ffd/rng.hpp"

namespace ffd {

// Adam moment buffers, one pair per parameter tensor in visit_params order.
struct AdamState {
  int64_t t = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

// Single little-endian binary file with length-prefixed named FP32 segments
// (parameters and BN running stats), the model config as JSON, optional
// optimizer state, and the rng state. save -> load -> save is bitwise
// identity.
void save_checkpoint(const std::string& path, Model& model, const AdamState* adam,
                     const Rng* rng);

struct LoadedCheckpoint {
  Model model;
  std::optional<AdamState> adam;
  std::optional<Rng> rng;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace ffd
