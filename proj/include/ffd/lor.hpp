#pragma once

#include <array>
#include <string>
#include <tuple>
#include <vector>

#include "ffd/backbone.hpp"
#include "ffd/rng.hpp"
#include "ffd/tensor.hpp"

namespace ffd {

enum class SqueezeKind { Sigmoid, Softmax };

struct LORConfig {
  int d = 32;            // query dimension
  int n_g = 10;          // queries per spatial site (5/10/20 presets for tile 16/32/64)
  int repetitions = 3;   // QT+CCGC blocks composed in sequence
  int expansion = 2;     // CCGC channel expansion factor r
  int num_classes = 2;   // includes background at index 0
  SqueezeKind squeeze = SqueezeKind::Sigmoid;
};

// Queries-per-tile presets reproducing N_q = 1600 / 800 / 400 at 320x256.
inline int default_n_g(TileMode mode) {
  switch (mode) {
    case TileMode::Tile16: return 5;
    case TileMode::Tile32: return 10;
    case TileMode::Tile64: return 20;
  }
  throw ConfigError("unknown tile mode");
}

// One QT+CCGC repetition. QT is a channel-preserving 1x1 conv with residual
// and ReLU; CCGC pools the QT output globally, expands channels by r with
// ReLU, squeezes back with sigmoid (or softmax in the ablation), and the
// resulting gate is broadcast-multiplied into the QT output.
template <typename S>
struct LORRepetitionT {
  TensorT<S> qt_weight, qt_bias;            // 1x1 conv, C' -> C'
  TensorT<S> expand_weight, expand_bias;    // C' -> r*C'
  TensorT<S> squeeze_weight, squeeze_bias;  // r*C' -> C'
};

template <typename S>
struct LORParamsT {
  LORConfig config;
  int in_channels = 0;
  TensorT<S> proj_weight, proj_bias;  // 1x1 conv, C -> d*N_g
  std::vector<LORRepetitionT<S>> reps;
  TensorT<S> cls_weight, cls_bias;              // d -> num_classes, one layer
  std::array<TensorT<S>, 3> box_weight;         // d -> d -> d -> 4
  std::array<TensorT<S>, 3> box_bias;

  int64_t param_count() const {
    int64_t n = proj_weight->numel() + proj_bias->numel() + cls_weight->numel() + cls_bias->numel();
    for (const auto& r : reps)
      n += r.qt_weight->numel() + r.qt_bias->numel() + r.expand_weight->numel() +
           r.expand_bias->numel() + r.squeeze_weight->numel() + r.squeeze_bias->numel();
    for (int i = 0; i < 3; ++i) n += box_weight[i]->numel() + box_bias[i]->numel();
    return n;
  }
};

using LORParams = LORParamsT<float>;

// Query matrix T_q: one d-dimensional column per query, with an invertible
// column <-> (tile row, tile col, slot) mapping.
template <typename S>
struct QueryMatrixT {
  TensorT<S> values;  // [d, N_g * H_o * W_o]
  int grid_h = 0, grid_w = 0;
  int n_g = 0;
};

using QueryMatrix = QueryMatrixT<float>;

// Per-query predictions, index-aligned with QueryMatrix columns: class
// logits (one row of K per query) and box parameters b-hat (4 per query).
template <typename S>
struct HeadOutputT {
  TensorT<S> class_logits;  // [num_classes, N_q], column per query
  TensorT<S> box_params;    // [4, N_q], column per query
  int grid_h = 0, grid_w = 0;
  int n_g = 0;

  int num_queries() const { return n_g * grid_h * grid_w; }
  int num_classes() const { return class_logits->shape[0]; }
  S logit(int query, int cls) const {
    return class_logits->values[static_cast<int64_t>(cls) * num_queries() + query];
  }
  std::array<S, 4> box(int query) const {
    const int nq = num_queries();
    return {box_params->values[query], box_params->values[nq + query],
            box_params->values[2 * static_cast<int64_t>(nq) + query],
            box_params->values[3 * static_cast<int64_t>(nq) + query]};
  }
};

using HeadOutput = HeadOutputT<float>;

// Tile-major column ordering: column = (row * W_o + col) * N_g + slot.
inline std::tuple<int, int, int> query_index_to_tile(int column, int grid_h, int grid_w, int n_g) {
  const int total = n_g * grid_h * grid_w;
  if (column < 0 || column >= total)
    throw ConfigError("query column " + std::to_string(column) + " out of range [0, " +
                      std::to_string(total) + ")");
  int slot = column % n_g;
  int site = column / n_g;
  return {site / grid_w, site % grid_w, slot};
}

inline int tile_to_query_index(int tile_row, int tile_col, int slot, int grid_h, int grid_w,
                               int n_g) {
  if (tile_row < 0 || tile_row >= grid_h || tile_col < 0 || tile_col >= grid_w || slot < 0 ||
      slot >= n_g)
    throw ConfigError("tile coordinates out of range");
  return (tile_row * grid_w + tile_col) * n_g + slot;
}

template <typename S>
LORParamsT<S> build_lor(const LORConfig& config, int in_channels, Rng& rng) {
  if (config.d < 1 || config.n_g < 1 || config.repetitions < 1 || config.expansion < 1)
    throw ConfigError("LOR config values must be >= 1");
  if (config.num_classes < 2)
    throw ConfigError("LOR needs background plus at least one object class");

  auto he_linear = [&rng](int out_dim, int in_dim) {
    const double std_dev = std::sqrt(2.0 / in_dim);
    std::vector<S> w(static_cast<size_t>(out_dim) * in_dim);
    for (auto& v : w) v = static_cast<S>(rng.normal() * std_dev);
    return make_tensor<S>({out_dim, in_dim}, std::move(w), true);
  };
  auto he_conv1x1 = [&rng](int out_ch, int in_ch) {
    const double std_dev = std::sqrt(2.0 / in_ch);
    std::vector<S> w(static_cast<size_t>(out_ch) * in_ch);
    for (auto& v : w) v = static_cast<S>(rng.normal() * std_dev);
    return make_tensor<S>({out_ch, in_ch, 1, 1}, std::move(w), true);
  };

  LORParamsT<S> p;
  p.config = config;
  p.in_channels = in_channels;
  const int cq = config.d * config.n_g;
  p.proj_weight = he_conv1x1(cq, in_channels);
  p.proj_bias = make_zeros<S>({cq}, true);
  for (int i = 0; i < config.repetitions; ++i) {
    LORRepetitionT<S> rep;
    rep.qt_weight = he_conv1x1(cq, cq);
    rep.qt_bias = make_zeros<S>({cq}, true);
    rep.expand_weight = he_linear(config.expansion * cq, cq);
    rep.expand_bias = make_zeros<S>({config.expansion * cq}, true);
    rep.squeeze_weight = he_linear(cq, config.expansion * cq);
    rep.squeeze_bias = make_zeros<S>({cq}, true);
    p.reps.push_back(std::move(rep));
  }
  p.cls_weight = he_linear(config.num_classes, config.d);
  // background-biased init: a fresh model predicts background everywhere,
  // so untrained inference stays silent at the default threshold
  p.cls_bias = make_zeros<S>({config.num_classes}, true);
  p.cls_bias->values[0] = S(2);
  const std::array<int, 4> widths{config.d, config.d, config.d, 4};
  for (int i = 0; i < 3; ++i) {
    p.box_weight[static_cast<size_t>(i)] = he_linear(widths[static_cast<size_t>(i) + 1], widths[static_cast<size_t>(i)]);
    p.box_bias[static_cast<size_t>(i)] = make_zeros<S>({widths[static_cast<size_t>(i) + 1]}, true);
  }
  // regression prior: the final layer starts near a centered small box
  // (offsets at the tile center, log-extents well below 0) instead of
  // He-scale noise
  for (auto& v : p.box_weight[2]->values) v *= S(0.01);
  p.box_bias[2]->values = {S(0.5), S(0.5), S(-2), S(-2)};
  return p;
}

// 1x1 projection of backbone features into d*N_g query channels.
template <typename S>
TensorT<S> query_projection(TapeT<S>& tape, const LORParamsT<S>& params, const TensorT<S>& t_f) {
  return tape.conv2d(t_f, params.proj_weight, params.proj_bias, 1, 0);
}

// T_qt = ReLU(conv1x1(x) + x)
template <typename S>
TensorT<S> query_transform(TapeT<S>& tape, const LORRepetitionT<S>& rep, const TensorT<S>& x) {
  auto fx = tape.conv2d(x, rep.qt_weight, rep.qt_bias, 1, 0);
  return tape.relu(tape.add(fx, x));
}

// Global pool -> expand (ReLU) -> squeeze (sigmoid or softmax) gate vector.
template <typename S>
TensorT<S> ccgc(TapeT<S>& tape, const LORRepetitionT<S>& rep, const TensorT<S>& t_qt,
                SqueezeKind squeeze) {
  auto z = tape.global_avg_pool(t_qt);
  auto e = tape.relu(tape.linear(z, rep.expand_weight, rep.expand_bias));
  auto s = tape.linear(e, rep.squeeze_weight, rep.squeeze_bias);
  return squeeze == SqueezeKind::Sigmoid ? tape.sigmoid(s) : tape.softmax_channels(s);
}

// N repetitions of y = QT(x); x = y * CCGC(y). QT and CCGC run in parallel
// on the same transformed tensor; the gate taps the QT output.
template <typename S>
TensorT<S> lor_forward(TapeT<S>& tape, const LORParamsT<S>& params, const TensorT<S>& t_g) {
  TensorT<S> x = t_g;
  for (const auto& rep : params.reps) {
    auto y = query_transform(tape, rep, x);
    auto gate = ccgc(tape, rep, y, params.config.squeeze);
    x = tape.broadcast_mul(y, gate);
  }
  return x;
}

template <typename S>
QueryMatrixT<S> delineate(TapeT<S>& tape, const TensorT<S>& t_lor, const LORConfig& config) {
  QueryMatrixT<S> q;
  q.values = tape.delineate(t_lor, config.d);
  q.grid_h = t_lor->shape[1];
  q.grid_w = t_lor->shape[2];
  q.n_g = t_lor->shape[0] / config.d;
  return q;
}

// Single-layer classification head; softmax lives in the loss.
template <typename S>
TensorT<S> ffn_class(TapeT<S>& tape, const LORParamsT<S>& params, const QueryMatrixT<S>& q) {
  return tape.linear(q.values, params.cls_weight, params.cls_bias);
}

// Three-layer box head with ReLU after the first two layers only; the output
// stays unbounded so the log-scale extents can be negative.
template <typename S>
TensorT<S> ffn_box(TapeT<S>& tape, const LORParamsT<S>& params, const QueryMatrixT<S>& q) {
  auto h1 = tape.relu(tape.linear(q.values, params.box_weight[0], params.box_bias[0]));
  auto h2 = tape.relu(tape.linear(h1, params.box_weight[1], params.box_bias[1]));
  return tape.linear(h2, params.box_weight[2], params.box_bias[2]);
}

// Full head: projection -> LOR -> delineation -> prediction FFNs.
template <typename S>
HeadOutputT<S> lor_head_forward(TapeT<S>& tape, const LORParamsT<S>& params,
                                const TensorT<S>& t_f) {
  auto t_g = query_projection(tape, params, t_f);
  auto t_lor = lor_forward(tape, params, t_g);
  auto q = delineate(tape, t_lor, params.config);
  HeadOutputT<S> out;
  out.class_logits = ffn_class(tape, params, q);
  out.box_params = ffn_box(tape, params, q);
  out.grid_h = q.grid_h;
  out.grid_w = q.grid_w;
  out.n_g = q.n_g;
  return out;
}

template <typename S, typename Fn>
void visit_lor_params(LORParamsT<S>& p, Fn&& fn) {
  fn(std::string("lor.proj.weight"), p.proj_weight);
  fn(std::string("lor.proj.bias"), p.proj_bias);
  for (size_t i = 0; i < p.reps.size(); ++i) {
    const std::string base = "lor.rep" + std::to_string(i);
    fn(base + ".qt.weight", p.reps[i].qt_weight);
    fn(base + ".qt.bias", p.reps[i].qt_bias);
    fn(base + ".expand.weight", p.reps[i].expand_weight);
    fn(base + ".expand.bias", p.reps[i].expand_bias);
    fn(base + ".squeeze.weight", p.reps[i].squeeze_weight);
    fn(base + ".squeeze.bias", p.reps[i].squeeze_bias);
  }
  fn(std::string("lor.cls.weight"), p.cls_weight);
  fn(std::string("lor.cls.bias"), p.cls_bias);
  for (int i = 0; i < 3; ++i) {
    const std::string base = "lor.box" + std::to_string(i);
    fn(base + ".weight", p.box_weight[static_cast<size_t>(i)]);
    fn(base + ".bias", p.box_bias[static_cast<size_t>(i)]);
  }
}

}  // namespace ffd
