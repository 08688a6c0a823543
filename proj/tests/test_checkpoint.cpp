#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ffd/checkpoint.hpp"
#include "ffd/config_json.hpp"

using namespace ffd;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.backbone.channels_per_stage = {2, 2, 4, 4, 4};
  c.backbone.input_h = c.backbone.input_w = 64;
  c.lor.d = 4;
  c.lor.n_g = 2;
  c.lor.repetitions = 1;
  return c;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "ffd_test_ckpt";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("save -> load -> save is bitwise identity") {
  auto model = build_model<float>(tiny_config(), 42);
  AdamState adam;
  adam.t = 17;
  visit_params(model, [&](const std::string&, Tensor& t) {
    adam.m.emplace_back(t->values.size(), 0.25f);
    adam.v.emplace_back(t->values.size(), 0.5f);
  });
  Rng rng(7);
  rng.next_u32();

  auto p1 = temp_file("a.ckpt").string();
  auto p2 = temp_file("b.ckpt").string();
  save_checkpoint(p1, model, &adam, &rng);

  auto loaded = load_checkpoint(p1);
  REQUIRE(loaded.adam.has_value());
  REQUIRE(loaded.rng.has_value());
  CHECK(loaded.adam->t == 17);
  CHECK(loaded.rng->state() == rng.state());

  save_checkpoint(p2, loaded.model, &*loaded.adam, &*loaded.rng);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("loaded parameters and running stats match the saved model") {
  auto model = build_model<float>(tiny_config(), 3);
  // make running stats distinctive
  model.backbone.layers[0].bn_state.running_mean[0] = 0.125f;
  model.backbone.layers[0].bn_state.running_var[1] = 2.5f;

  auto path = temp_file("params.ckpt").string();
  save_checkpoint(path, model, nullptr, nullptr);
  auto loaded = load_checkpoint(path);

  CHECK_FALSE(loaded.adam.has_value());
  CHECK_FALSE(loaded.rng.has_value());
  CHECK(loaded.model.backbone.layers[0].bn_state.running_mean[0] == 0.125f);
  CHECK(loaded.model.backbone.layers[0].bn_state.running_var[1] == 2.5f);

  std::vector<std::pair<std::string, std::vector<float>>> saved, restored;
  visit_params(model, [&](const std::string& n, Tensor& t) { saved.emplace_back(n, t->values); });
  visit_params(loaded.model,
               [&](const std::string& n, Tensor& t) { restored.emplace_back(n, t->values); });
  REQUIRE(saved.size() == restored.size());
  for (size_t i = 0; i < saved.size(); ++i) {
    CHECK(saved[i].first == restored[i].first);
    CHECK(saved[i].second == restored[i].second);
  }
}

TEST_CASE("config survives the json round trip inside the checkpoint") {
  auto cfg = tiny_config();
  cfg.backbone.tile = TileMode::Tile16;
  cfg.lor.squeeze = SqueezeKind::Softmax;
  cfg.lor.num_classes = 3;
  auto model = build_model<float>(cfg, 9);
  auto path = temp_file("cfg.ckpt").string();
  save_checkpoint(path, model, nullptr, nullptr);
  auto loaded = load_checkpoint(path);
  CHECK(loaded.model.config.backbone.tile == TileMode::Tile16);
  CHECK(loaded.model.config.lor.squeeze == SqueezeKind::Softmax);
  CHECK(loaded.model.config.lor.num_classes == 3);
  CHECK(loaded.model.config.backbone.channels_per_stage == cfg.backbone.channels_per_stage);
}

TEST_CASE("garbage files are rejected") {
  auto path = temp_file("garbage.ckpt").string();
  std::ofstream(path) << "not a checkpoint at all";
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.ckpt"), DataError);
}
