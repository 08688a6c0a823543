#include "ffd/gradcheck_suite.hpp"

#include "ffd/gradcheck.hpp"
#include "ffd/loss.hpp"
#include "ffd/matching.hpp"
#include "ffd/model.hpp"
#include "ffd/rng.hpp"

namespace ffd {

namespace {

constexpr double kTolerance = 1e-4;

TensorT<double> rand_leaf(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(size_t(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return make_tensor<double>(std::move(shape), std::move(v));
}

template <typename Fn>
GradSuiteEntry check(const std::string& name, Fn&& fn, std::vector<TensorT<double>> inputs,
                     double step = 1e-3, int64_t max_coords = 0, uint64_t subsample_seed = 1) {
  auto r = gradient_check<double>(fn, inputs, step, max_coords, subsample_seed);
  GradSuiteEntry e{name, r.max_rel_error, r.coords_checked, r.coords_excluded, false};
  e.pass = r.max_rel_error < kTolerance;
  return e;
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(uint64_t seed) {
  Rng rng(seed);
  std::vector<GradSuiteEntry> out;

  for (int k : {1, 3})
    for (int stride : {1, 2})
      out.push_back(check(
          "conv2d k" + std::to_string(k) + " s" + std::to_string(stride),
          [k, stride](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
            auto y = t.conv2d(in[0], in[1], in[2], stride, (k - 1) / 2);
            return t.sum(t.mul(y, y));
          },
          {rand_leaf({2, 5, 4}, rng), rand_leaf({3, 2, k, k}, rng), rand_leaf({3}, rng)}));

  for (auto mode : {BatchNormMode::Train, BatchNormMode::Eval})
    out.push_back(check(
        mode == BatchNormMode::Train ? "batch_norm train" : "batch_norm eval",
        [mode](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
          BatchNormStateT<double> st{{0.1, -0.2}, {0.9, 1.1}};
          auto y = t.batch_norm(in[0], in[1], in[2], &st, mode);
          return t.sum(t.mul(y, y));
        },
        {rand_leaf({2, 3, 3}, rng), rand_leaf({2}, rng, 0.5, 1.5), rand_leaf({2}, rng)}));

  out.push_back(check(
      "relu",
      [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
        return t.sum(t.mul(t.relu(in[0]), t.relu(in[0])));
      },
      {rand_leaf({3, 4, 2}, rng)}));

  out.push_back(check(
      "sigmoid",
      [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
        auto s = t.sigmoid(in[0]);
        return t.sum(t.mul(s, s));
      },
      {rand_leaf({3, 4, 2}, rng)}));

  out.push_back(check(
      "softmax_channels",
      [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
        auto s = t.softmax_channels(in[0]);
        return t.sum(t.mul(s, s));
      },
      {rand_leaf({4, 2, 3}, rng)}));

  out.push_back(check(
      "global_avg_pool + broadcast_mul",
      [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
        auto p = t.global_avg_pool(in[0]);
        auto y = t.broadcast_mul(in[1], p);
        return t.sum(t.mul(y, y));
      },
      {rand_leaf({3, 3, 3}, rng), rand_leaf({3, 3, 3}, rng)}));

  out.push_back(check(
      "add + scale + mul",
      [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
        auto y = t.add(t.scale(in[0], 0.3), in[1]);
        return t.sum(t.mul(y, y));
      },
      {rand_leaf({5, 2}, rng), rand_leaf({5, 2}, rng)}));

  out.push_back(check(
      "linear",
      [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
        auto y = t.linear(in[0], in[1], in[2]);
        return t.sum(t.mul(y, y));
      },
      {rand_leaf({4, 3}, rng), rand_leaf({2, 4}, rng), rand_leaf({2}, rng)}));

  out.push_back(check(
      "delineate + select_columns",
      [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
        auto q = t.delineate(in[0], 2);
        auto s = t.select_columns(q, {0, 2, 5});
        return t.sum(t.mul(s, s));
      },
      {rand_leaf({4, 2, 2}, rng)}));

  out.push_back(check(
      "softmax_cross_entropy",
      [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
        return t.softmax_cross_entropy_mean(in[0], {0, 1, 2, 0});
      },
      {rand_leaf({3, 4}, rng, -2.0, 2.0)}));

  out.push_back(check(
      "smooth_l1",
      [](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
        return t.smooth_l1_mean(in[0], in[1], 1.0);
      },
      {rand_leaf({4, 3}, rng, -3.0, 3.0), rand_leaf({4, 3}, rng, -0.5, 0.5)}));

  // Composed backbone + LOR + FFN on a 2x2-tile toy configuration, driven
  // through the full training loss with fixed targets.
  {
    ModelConfig cfg;
    cfg.backbone.channels_per_stage = {4, 4, 6, 6, 8};
    cfg.backbone.input_h = cfg.backbone.input_w = 64;
    cfg.lor.d = 4;
    cfg.lor.n_g = 2;
    cfg.lor.repetitions = 2;
    auto model = build_model<double>(cfg, seed);
    auto grid = TileGrid::from_image(64, 64, 32);

    std::vector<GtBox> gts{{{20, 20, 10, 12}, 1}, {{50, 40, 6, 6}, 1}};
    TiledMatchResult fixed;
    fixed.pairs = {{0, tile_to_query_index(0, 0, 1, 2, 2, 2)},
                   {1, tile_to_query_index(1, 1, 0, 2, 2, 2)}};
    auto targets = build_targets(fixed, gts, grid, 8, 2, 2, 2);

    std::vector<TensorT<double>> inputs;
    std::vector<double> img(size_t(3) * 64 * 64);
    for (auto& v : img) v = rng.uniform();
    inputs.push_back(make_tensor<double>({3, 64, 64}, std::move(img)));
    visit_params(model, [&](const std::string&, TensorT<double>& t) { inputs.push_back(t); });

    auto fn = [&model, &targets](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
      auto head = model_forward(t, model, in[0], BatchNormMode::Train);
      return total_loss(t, head, targets, 1.0).total;
    };
    out.push_back(check("composed backbone+LOR+FFN (2x2 tiles)", fn, inputs, 1e-3, 10, seed));
  }

  return out;
}

}  // namespace ffd
