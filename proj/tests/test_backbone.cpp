#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ffd/backbone.hpp"
#include "ffd/rng.hpp"

using namespace ffd;

namespace {

// Closed-form learnable parameter count: per conv layer 9*C_in*C_out weights
// + C_out bias + 2*C_out batch-norm affine.
int64_t analytic_param_count(const BackboneConfig& c) {
  int64_t total = 0;
  int in_ch = 3;
  for (int stage = 0; stage < 5; ++stage) {
    int out_ch = c.channels_per_stage[size_t(stage)];
    for (int layer = 0; layer < c.layers_per_stage[size_t(stage)]; ++layer) {
      total += int64_t(9) * in_ch * out_ch + out_ch + 2 * out_ch;
      in_ch = out_ch;
    }
  }
  return total;
}

Tensor random_image(int h, int w, Rng& rng) {
  std::vector<float> v(size_t(3) * h * w);
  for (auto& x : v) x = float(rng.uniform());
  return make_tensor<float>({3, h, w}, std::move(v));
}

}  // namespace

TEST_CASE("build is deterministic for a fixed seed") {
  BackboneConfig c;
  Rng r1(7), r2(7);
  auto a = build_backbone<float>(c, r1);
  auto b = build_backbone<float>(c, r2);
  REQUIRE(a.layers.size() == b.layers.size());
  for (size_t i = 0; i < a.layers.size(); ++i) {
    CHECK(a.layers[i].weight->values == b.layers[i].weight->values);
    CHECK(a.layers[i].stride == b.layers[i].stride);
  }
}

TEST_CASE("parameter count matches the analytic formula, low millions") {
  BackboneConfig c;
  Rng rng(1);
  auto p = build_backbone<float>(c, rng);
  auto expected = analytic_param_count(c);
  CHECK(p.param_count() == expected);
  CHECK(p.param_count() >= 1'000'000);
  CHECK(p.param_count() < 10'000'000);
}

TEST_CASE("tile16 and tile32 have identical parameter counts") {
  BackboneConfig c16, c32, c64;
  c16.tile = TileMode::Tile16;
  c32.tile = TileMode::Tile32;
  c64.tile = TileMode::Tile64;
  c16.input_h = c16.input_w = 64;
  c32.input_h = c32.input_w = 64;
  c64.input_h = c64.input_w = 64;
  Rng r1(3), r2(3), r3(3);
  auto p16 = build_backbone<float>(c16, r1);
  auto p32 = build_backbone<float>(c32, r2);
  auto p64 = build_backbone<float>(c64, r3);
  CHECK(p16.param_count() == p32.param_count());
  CHECK(p32.param_count() == p64.param_count());
}

TEST_CASE("indivisible input size is rejected with the divisor named") {
  BackboneConfig c;
  c.input_h = 100;  // not divisible by 32
  c.input_w = 64;
  Rng rng(1);
  try {
    build_backbone<float>(c, rng);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("32") != std::string::npos);
  }
}

TEST_CASE("stride schedule per tile mode") {
  BackboneConfig c;
  c.tile = TileMode::Tile16;
  CHECK(stage_strides(c, 4) == std::vector<int>{1, 1, 1, 1});
  c.tile = TileMode::Tile32;
  CHECK(stage_strides(c, 4) == std::vector<int>{2, 1, 1, 1});
  c.tile = TileMode::Tile64;
  CHECK(stage_strides(c, 4) == std::vector<int>{1, 1, 2, 2});
  CHECK(stage_strides(c, 0) == std::vector<int>{2, 1});
}

TEST_CASE("output shapes at the reference resolution") {
  Rng rng(5);
  // small channel widths keep this quick; shapes depend only on strides
  BackboneConfig c;
  c.channels_per_stage = {4, 4, 8, 8, 8};
  c.input_w = 320;
  c.input_h = 256;

  SUBCASE("tile32 gives 8x10") {
    Rng r(5);
    auto p = build_backbone<float>(c, r);
    Tape tape(false);
    auto out = backbone_forward(tape, p, random_image(256, 320, rng), BatchNormMode::Eval);
    CHECK(out->shape == std::vector<int>{8, 8, 10});
  }
  SUBCASE("tile16 gives 16x20") {
    c.tile = TileMode::Tile16;
    Rng r(5);
    auto p = build_backbone<float>(c, r);
    Tape tape(false);
    auto out = backbone_forward(tape, p, random_image(256, 320, rng), BatchNormMode::Eval);
    CHECK(out->shape == std::vector<int>{8, 16, 20});
  }
  SUBCASE("tile64 gives 4x5") {
    c.tile = TileMode::Tile64;
    Rng r(5);
    auto p = build_backbone<float>(c, r);
    Tape tape(false);
    auto out = backbone_forward(tape, p, random_image(256, 320, rng), BatchNormMode::Eval);
    CHECK(out->shape == std::vector<int>{8, 4, 5});
  }
}

TEST_CASE("default config at 320x256 produces 256 x 8 x 10 / 256 x 16 x 20") {
  Rng rng(2);
  BackboneConfig c;
  c.input_w = 320;
  c.input_h = 256;
  {
    Rng r(2);
    auto p = build_backbone<float>(c, r);
    Tape tape(false);
    auto out = backbone_forward(tape, p, random_image(256, 320, rng), BatchNormMode::Eval);
    CHECK(out->shape == std::vector<int>{256, 8, 10});
  }
  {
    c.tile = TileMode::Tile16;
    Rng r(2);
    auto p = build_backbone<float>(c, r);
    Tape tape(false);
    auto out = backbone_forward(tape, p, random_image(256, 320, rng), BatchNormMode::Eval);
    CHECK(out->shape == std::vector<int>{256, 16, 20});
  }
}

TEST_CASE("64x64 toy image under tile32 gives 2x2") {
  Rng rng(9);
  BackboneConfig c;
  c.channels_per_stage = {4, 4, 8, 8, 8};
  auto p = build_backbone<float>(c, rng);
  Tape tape(false);
  auto out = backbone_forward(tape, p, random_image(64, 64, rng), BatchNormMode::Eval);
  CHECK(out->shape == std::vector<int>{8, 2, 2});
}

TEST_CASE("eval forward is a pure function of params and image") {
  Rng rng(13);
  BackboneConfig c;
  c.channels_per_stage = {2, 2, 4, 4, 4};
  auto p = build_backbone<float>(c, rng);
  auto img = random_image(64, 64, rng);
  Tape t1(false), t2(false);
  auto a = backbone_forward(t1, p, img, BatchNormMode::Eval);
  auto b = backbone_forward(t2, p, img, BatchNormMode::Eval);
  CHECK(a->values == b->values);
}

TEST_CASE("wrong channel count is rejected") {
  Rng rng(1);
  BackboneConfig c;
  c.channels_per_stage = {2, 2, 4, 4, 4};
  auto p = build_backbone<float>(c, rng);
  Tape tape(false);
  auto bad = make_tensor<float>({1, 64, 64}, std::vector<float>(64 * 64, 0.f));
  CHECK_THROWS_AS(backbone_forward(tape, p, bad, BatchNormMode::Eval), DimensionError);
}
