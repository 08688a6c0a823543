#include "ffd/train.hpp"

#include <cmath>
#include <ostream>

#include "ffd/loss.hpp"
#include "ffd/matching.hpp"

namespace ffd {

double cosine_lr(double base_lr, int64_t step, int64_t total_steps) {
  if (total_steps <= 0) return base_lr;
  if (step >= total_steps) return 0.0;
  return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * double(step) / double(total_steps)));
}

void adam_init(AdamState& state, Model& model) {
  state.t = 0;
  state.m.clear();
  state.v.clear();
  visit_params(model, [&](const std::string&, Tensor& t) {
    state.m.emplace_back(t->values.size(), 0.f);
    state.v.emplace_back(t->values.size(), 0.f);
  });
}

void adam_step(AdamState& state, Model& model, const TrainConfig& cfg, double lr,
               double grad_scale) {
  ++state.t;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, double(state.t));
  const double bc2 = 1.0 - std::pow(b2, double(state.t));
  size_t idx = 0;
  visit_params(model, [&](const std::string&, Tensor& t) {
    auto& m = state.m[idx];
    auto& v = state.v[idx];
    ++idx;
    t->ensure_grad();
    for (size_t i = 0; i < t->values.size(); ++i) {
      double g = double(t->grad[i]) / grad_scale;
      m[i] = float(b1 * m[i] + (1.0 - b1) * g);
      v[i] = float(b2 * v[i] + (1.0 - b2) * g * g);
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      t->values[i] = float(t->values[i] -
                           lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) +
                                 cfg.weight_decay * t->values[i]));
    }
    t->zero_grad();
  });
}

TrainStats train_model(Model& model, AdamState& adam, const std::vector<Sample>& samples,
                       const TrainConfig& cfg, std::ostream* csv_log) {
  if (samples.empty()) throw DataError("train: dataset is empty");
  if (cfg.grad_accum < 1) throw ConfigError("train: grad_accum must be >= 1");

  const TileGrid grid = model_grid(model, samples[0].image.width, samples[0].image.height);
  int64_t total_iters = int64_t(cfg.epochs) * int64_t(samples.size());
  if (cfg.max_iterations > 0) total_iters = std::min(total_iters, cfg.max_iterations);
  const int64_t total_steps = std::max<int64_t>(1, total_iters / cfg.grad_accum);

  if (csv_log) *csv_log << "iteration,loss,class_loss,box_loss\n";

  TrainStats stats;
  int64_t iteration = 0;
  int accum = 0;
  for (int epoch = 0; epoch < cfg.epochs && iteration < total_iters; ++epoch) {
    // seeded per-epoch shuffle
    std::vector<size_t> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(cfg.seed, 0x517cc1b7ull + uint64_t(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(uint32_t(i))]);

    for (size_t oi = 0; oi < order.size() && iteration < total_iters; ++oi) {
      const Sample& base = samples[order[oi]];
      Sample working;
      const Sample* sample = &base;
      if (cfg.augment_enabled) {
        Rng aug_rng(cfg.seed ^ mix_seed(order[oi], uint64_t(epoch)));
        working = augment(base, cfg.augment, aug_rng);
        sample = &working;
      }

      Tape tape;
      auto image = image_to_tensor<float>(sample->image);
      auto head = model_forward(tape, model, image, BatchNormMode::Train);
      auto match = tiled_match(head, sample->annotations, grid, cfg.lambda);
      auto targets = build_targets(match, sample->annotations, grid, head.num_queries(),
                                   head.grid_h, head.grid_w, head.n_g);
      auto loss = total_loss(tape, head, targets, cfg.lambda);

      const double loss_value = double(loss.total->values[0]);
      if (!std::isfinite(loss_value))
        throw NumericalError("training loss is not finite at iteration " +
                             std::to_string(iteration) + " on sample '" + sample->name +
                             "' (class " + std::to_string(loss.class_term) + ", box " +
                             std::to_string(loss.box_term) + ")");

      tape.backward(loss.total);

      if (iteration == 0) stats.first_loss = loss_value;
      stats.final_loss = loss_value;
      if (csv_log)
        *csv_log << iteration << "," << loss_value << "," << loss.class_term << ","
                 << loss.box_term << "\n";

      ++iteration;
      if (++accum == cfg.grad_accum) {
        const double lr = cosine_lr(cfg.base_lr, adam.t, total_steps);
        adam_step(adam, model, cfg, lr, double(cfg.grad_accum));
        accum = 0;
      }
    }
  }
  if (accum > 0) {
    const double lr = cosine_lr(cfg.base_lr, adam.t, total_steps);
    adam_step(adam, model, cfg, lr, double(accum));
  }
  stats.iterations = iteration;
  return stats;
}

}  // namespace ffd
