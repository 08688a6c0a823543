#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ffd/checkpoint.hpp"
#include "ffd/data.hpp"
#include "ffd/model.hpp"

namespace ffd {

struct TrainConfig {
  double base_lr = 0.001;
  double weight_decay = 0.0001;
  double adam_beta1 = 0.90;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;
  int epochs = 1000;
  double lambda = 1.0;
  uint64_t seed = 0;
  bool augment_enabled = true;
  AugmentConfig augment;
  ModelConfig model;
  int grad_accum = 1;  // effective batching on the batch-1 reference path
  int64_t max_iterations = 0;  // 0 = run all epochs; otherwise hard cap
};

// Cosine annealing from base_lr at step 0 down to 0 at total_steps.
double cosine_lr(double base_lr, int64_t step, int64_t total_steps);

void adam_init(AdamState& state, Model& model);

// One decoupled-weight-decay Adam update from the accumulated gradients
// (divided by scale), then gradients are cleared.
void adam_step(AdamState& state, Model& model, const TrainConfig& cfg, double lr,
               double grad_scale);

struct TrainStats {
  int64_t iterations = 0;
  double first_loss = 0.0;
  double final_loss = 0.0;
};

// Augment -> forward -> tiled match -> targets -> loss -> backward -> Adam,
// per sample, deterministic for a given seed. Writes one CSV line per
// iteration to `csv_log` when given: iteration,loss,L_c,L_b. Aborts with a
// NumericalError naming the sample when the loss goes non-finite.
TrainStats train_model(Model& model, AdamState& adam, const std::vector<Sample>& samples,
                       const TrainConfig& cfg, std::ostream* csv_log);

}  // namespace ffd
