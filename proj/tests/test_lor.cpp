#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "ffd/gradcheck.hpp"
#include "ffd/lor.hpp"
#include "ffd/model.hpp"
#include "ffd/rng.hpp"

using namespace ffd;

namespace {

template <typename S>
TensorT<S> rand_map(int c, int h, int w, Rng& rng) {
  std::vector<S> v(size_t(c) * h * w);
  for (auto& x : v) x = S(rng.uniform(-1.0, 1.0));
  return make_tensor<S>({c, h, w}, std::move(v));
}

template <typename S>
void fill_zero(TensorT<S>& t) {
  std::fill(t->values.begin(), t->values.end(), S(0));
}

}  // namespace

TEST_CASE("query projection channel arithmetic") {
  LORConfig cfg;
  cfg.d = 32;
  cfg.n_g = 10;
  Rng rng(1);
  auto p = build_lor<float>(cfg, 256, rng);
  CHECK(p.proj_weight->shape == std::vector<int>{320, 256, 1, 1});

  Tape tape(false);
  auto t_f = rand_map<float>(256, 2, 3, rng);
  auto t_g = query_projection(tape, p, t_f);
  CHECK(t_g->shape == std::vector<int>{320, 2, 3});
}

TEST_CASE("query projection with identity-like weight") {
  LORConfig cfg;
  cfg.d = 4;
  cfg.n_g = 2;
  Rng rng(2);
  auto p = build_lor<float>(cfg, 8, rng);  // d*n_g == in_channels == 8
  fill_zero(p.proj_weight);
  fill_zero(p.proj_bias);
  for (int i = 0; i < 8; ++i) p.proj_weight->values[size_t(i) * 8 + i] = 1.f;

  Tape tape(false);
  auto t_f = rand_map<float>(8, 2, 2, rng);
  auto t_g = query_projection(tape, p, t_f);
  CHECK(t_g->values == t_f->values);
}

TEST_CASE("query transform: zero weights pass through ReLU(x)") {
  LORConfig cfg;
  cfg.d = 2;
  cfg.n_g = 2;
  Rng rng(3);
  auto p = build_lor<float>(cfg, 4, rng);
  fill_zero(p.reps[0].qt_weight);
  fill_zero(p.reps[0].qt_bias);

  Tape tape(false);
  auto x = rand_map<float>(4, 2, 2, rng);
  auto y = query_transform(tape, p.reps[0], x);
  for (size_t i = 0; i < x->values.size(); ++i)
    CHECK(y->values[i] == std::max(0.f, x->values[i]));

  auto zeros = make_tensor<float>({4, 2, 2}, std::vector<float>(16, 0.f));
  auto z = query_transform(tape, p.reps[0], zeros);
  for (float v : z->values) CHECK(v == 0.f);
}

TEST_CASE("ccgc gate properties") {
  LORConfig cfg;
  cfg.d = 2;
  cfg.n_g = 3;
  Rng rng(4);
  auto p = build_lor<float>(cfg, 6, rng);
  Tape tape(false);

  SUBCASE("zero weights give 0.5 per channel") {
    fill_zero(p.reps[0].expand_weight);
    fill_zero(p.reps[0].expand_bias);
    fill_zero(p.reps[0].squeeze_weight);
    fill_zero(p.reps[0].squeeze_bias);
    auto x = rand_map<float>(6, 2, 2, rng);
    auto gate = ccgc(tape, p.reps[0], x, SqueezeKind::Sigmoid);
    REQUIRE(gate->shape == std::vector<int>{6});
    for (float v : gate->values) CHECK(v == doctest::Approx(0.5f));
  }

  SUBCASE("constant channels pool to the constant, then deterministic gate") {
    std::vector<float> v(6 * 4);
    for (int c = 0; c < 6; ++c)
      for (int i = 0; i < 4; ++i) v[size_t(c) * 4 + i] = float(c) * 0.25f;
    auto x = make_tensor<float>({6, 2, 2}, std::move(v));
    auto z = tape.global_avg_pool(x);
    for (int c = 0; c < 6; ++c) CHECK(z->values[size_t(c)] == doctest::Approx(float(c) * 0.25f));
    auto g1 = ccgc(tape, p.reps[0], x, SqueezeKind::Sigmoid);
    auto g2 = ccgc(tape, p.reps[0], x, SqueezeKind::Sigmoid);
    CHECK(g1->values == g2->values);
  }

  SUBCASE("sigmoid gate strictly inside (0,1); softmax gate sums to 1") {
    auto x = rand_map<float>(6, 2, 2, rng);
    auto sg = ccgc(tape, p.reps[0], x, SqueezeKind::Sigmoid);
    for (float v : sg->values) {
      CHECK(v > 0.f);
      CHECK(v < 1.f);
    }
    auto sm = ccgc(tape, p.reps[0], x, SqueezeKind::Softmax);
    float sum = 0.f;
    for (float v : sm->values) sum += v;
    CHECK(sum == doctest::Approx(1.f));
  }
}

TEST_CASE("lor_forward preserves shape for any repetition count") {
  Rng rng(5);
  for (int n : {1, 2, 3, 5}) {
    LORConfig cfg;
    cfg.d = 2;
    cfg.n_g = 3;
    cfg.repetitions = n;
    Rng r(5);
    auto p = build_lor<float>(cfg, 6, r);
    Tape tape(false);
    auto x = rand_map<float>(6, 2, 2, rng);
    auto y = lor_forward(tape, p, x);
    CHECK(y->shape == x->shape);
  }
}

TEST_CASE("lor_forward: N=1 with zero sub-block weights gives ReLU(x) * 0.5") {
  LORConfig cfg;
  cfg.d = 2;
  cfg.n_g = 2;
  cfg.repetitions = 1;
  Rng rng(6);
  auto p = build_lor<float>(cfg, 4, rng);
  fill_zero(p.reps[0].qt_weight);
  fill_zero(p.reps[0].qt_bias);
  fill_zero(p.reps[0].expand_weight);
  fill_zero(p.reps[0].expand_bias);
  fill_zero(p.reps[0].squeeze_weight);
  fill_zero(p.reps[0].squeeze_bias);

  Tape tape(false);
  auto x = rand_map<float>(4, 2, 2, rng);
  auto y = lor_forward(tape, p, x);
  for (size_t i = 0; i < x->values.size(); ++i)
    CHECK(y->values[i] == doctest::Approx(std::max(0.f, x->values[i]) * 0.5f));
}

TEST_CASE("saturated gate passes the last QT output through") {
  LORConfig cfg;
  cfg.d = 2;
  cfg.n_g = 2;
  cfg.repetitions = 1;
  Rng rng(7);
  auto p = build_lor<float>(cfg, 4, rng);
  // saturate the sigmoid with a huge squeeze bias
  std::fill(p.reps[0].squeeze_bias->values.begin(), p.reps[0].squeeze_bias->values.end(), 50.f);
  fill_zero(p.reps[0].squeeze_weight);

  Tape tape(false);
  auto x = rand_map<float>(4, 2, 2, rng);
  auto qt = query_transform(tape, p.reps[0], x);
  auto y = lor_forward(tape, p, x);
  for (size_t i = 0; i < qt->values.size(); ++i)
    CHECK(y->values[i] == doctest::Approx(qt->values[i]));
}

TEST_CASE("delineation produces N_g*H_o*W_o columns and round-trips") {
  LORConfig cfg;
  cfg.d = 2;
  cfg.n_g = 1;
  Rng rng(8);
  Tape tape(false);

  SUBCASE("single site, single slot") {
    auto x = rand_map<float>(2, 1, 1, rng);
    auto q = delineate(tape, x, cfg);
    REQUIRE(q.values->shape == std::vector<int>{2, 1});
    CHECK(q.values->values[0] == x->values[0]);
    CHECK(q.values->values[1] == x->values[1]);
  }

  SUBCASE("800 queries at tile 32 with N_g = 10 at 320x256") {
    LORConfig big;
    big.d = 3;
    big.n_g = 10;
    auto x = rand_map<float>(30, 8, 10, rng);
    auto q = delineate(tape, x, big);
    CHECK(q.values->shape == std::vector<int>{3, 800});
  }

  SUBCASE("delineate then inverse is the identity") {
    auto x = rand_map<float>(6, 3, 4, rng);
    LORConfig c3;
    c3.d = 2;
    c3.n_g = 3;
    auto q = delineate(tape, x, c3);
    auto back = tape.inverse_delineate(q.values, q.n_g, q.grid_h, q.grid_w);
    CHECK(back->values == x->values);
  }
}

TEST_CASE("query index mapping is a bijection with documented ordering") {
  const int gh = 3, gw = 4, ng = 5;
  CHECK(query_index_to_tile(0, gh, gw, ng) == std::tuple<int, int, int>{0, 0, 0});
  CHECK(query_index_to_tile(ng, gh, gw, ng) == std::tuple<int, int, int>{0, 1, 0});
  std::set<int> seen;
  for (int col = 0; col < ng * gh * gw; ++col) {
    auto [tr, tc, s] = query_index_to_tile(col, gh, gw, ng);
    CHECK(tile_to_query_index(tr, tc, s, gh, gw, ng) == col);
    seen.insert(col);
  }
  CHECK(int(seen.size()) == ng * gh * gw);
  CHECK_THROWS_AS(query_index_to_tile(ng * gh * gw, gh, gw, ng), ConfigError);
  CHECK_THROWS_AS(query_index_to_tile(-1, gh, gw, ng), ConfigError);
}

TEST_CASE("ffn heads") {
  LORConfig cfg;
  cfg.d = 3;
  cfg.n_g = 2;
  cfg.num_classes = 3;
  Rng rng(9);
  auto p = build_lor<float>(cfg, 6, rng);
  Tape tape(false);
  auto x = rand_map<float>(6, 2, 2, rng);
  auto q = delineate(tape, x, cfg);

  SUBCASE("zero class weights give zero logits") {
    fill_zero(p.cls_weight);
    fill_zero(p.cls_bias);
    auto logits = ffn_class(tape, p, q);
    for (float v : logits->values) CHECK(v == 0.f);
  }

  SUBCASE("identity class weight copies query values (d == num_classes)") {
    fill_zero(p.cls_weight);
    fill_zero(p.cls_bias);
    for (int i = 0; i < 3; ++i) p.cls_weight->values[size_t(i) * 3 + i] = 1.f;
    auto logits = ffn_class(tape, p, q);
    CHECK(logits->values == q.values->values);
  }

  SUBCASE("class head matches a direct matrix multiply") {
    auto logits = ffn_class(tape, p, q);
    const int nq = q.values->shape[1];
    for (int o = 0; o < 3; ++o)
      for (int n = 0; n < nq; ++n) {
        double acc = p.cls_bias->values[size_t(o)];
        for (int i = 0; i < 3; ++i)
          acc += double(p.cls_weight->values[size_t(o) * 3 + i]) *
                 double(q.values->values[size_t(i) * nq + n]);
        CHECK(logits->values[size_t(o) * nq + n] == doctest::Approx(float(acc)));
      }
  }

  SUBCASE("zero box weights give zero box params") {
    for (int i = 0; i < 3; ++i) {
      fill_zero(p.box_weight[size_t(i)]);
      fill_zero(p.box_bias[size_t(i)]);
    }
    auto boxes = ffn_box(tape, p, q);
    REQUIRE(boxes->shape == std::vector<int>{4, q.values->shape[1]});
    for (float v : boxes->values) CHECK(v == 0.f);
  }

  SUBCASE("single-query box head matches a hand-computed 3-layer composition") {
    LORConfig tiny;
    tiny.d = 2;
    tiny.n_g = 1;
    Rng r(10);
    auto tp = build_lor<float>(tiny, 2, r);
    auto qv = make_tensor<float>({2, 1}, {0.3f, -0.7f});
    QueryMatrixT<float> qm{qv, 1, 1, 1};
    auto got = ffn_box(tape, tp, qm);

    auto lin = [](const Tensor& w, const Tensor& b, std::vector<float> in) {
      int out_dim = w->shape[0], in_dim = w->shape[1];
      std::vector<float> out(static_cast<size_t>(out_dim), 0.f);
      for (int o = 0; o < out_dim; ++o) {
        double acc = b->values[size_t(o)];
        for (int i = 0; i < in_dim; ++i) acc += double(w->values[size_t(o) * in_dim + i]) * in[size_t(i)];
        out[size_t(o)] = float(acc);
      }
      return out;
    };
    auto h1 = lin(tp.box_weight[0], tp.box_bias[0], {0.3f, -0.7f});
    for (auto& v : h1) v = std::max(0.f, v);
    auto h2 = lin(tp.box_weight[1], tp.box_bias[1], h1);
    for (auto& v : h2) v = std::max(0.f, v);
    auto h3 = lin(tp.box_weight[2], tp.box_bias[2], h2);
    for (int i = 0; i < 4; ++i) CHECK(got->values[size_t(i)] == doctest::Approx(h3[size_t(i)]));
  }
}

TEST_CASE("full LOR block passes gradient checking on a 2x2-tile toy config") {
  LORConfig cfg;
  cfg.d = 2;
  cfg.n_g = 2;
  cfg.repetitions = 3;
  cfg.expansion = 2;
  Rng rng(11);
  auto p = build_lor<double>(cfg, 3, rng);

  std::vector<TensorT<double>> inputs;
  auto x = rand_map<double>(3, 2, 2, rng);
  inputs.push_back(x);
  visit_lor_params(p, [&](const std::string&, TensorT<double>& t) { inputs.push_back(t); });

  auto fn = [&p](TapeT<double>& t, const std::vector<TensorT<double>>& in) {
    auto head = lor_head_forward(t, p, in[0]);
    return t.add(t.sum(t.mul(head.class_logits, head.class_logits)),
                 t.sum(t.mul(head.box_params, head.box_params)));
  };
  auto r = gradient_check<double>(fn, inputs, 1e-4, 24, 7);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("N_q reproduces the tile-size table at 320x256") {
  for (auto [mode, expected] :
       {std::pair{TileMode::Tile16, 1600}, {TileMode::Tile32, 800}, {TileMode::Tile64, 400}}) {
    auto cfg = preset_config(mode);
    int ho = cfg.backbone.input_h / tile_size(mode);
    int wo = cfg.backbone.input_w / tile_size(mode);
    CHECK(cfg.lor.n_g * ho * wo == expected);
  }
}
