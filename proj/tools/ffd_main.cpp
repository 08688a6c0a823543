#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ffd/checkpoint.hpp"
#include "ffd/config_json.hpp"
#include "ffd/data.hpp"
#include "ffd/gradcheck_suite.hpp"
#include "ffd/infer.hpp"
#include "ffd/metrics.hpp"
#include "ffd/parallel.hpp"
#include "ffd/synth.hpp"
#include "ffd/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

ffd::TrainConfig load_train_config(const std::string& path) {
  ffd::TrainConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream f(path);
  if (!f) throw ffd::ConfigError("config file not found: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ffd::ConfigError("invalid config json: " + std::string(e.what()));
  }
  j.get_to(cfg);
  return cfg;
}

json detection_to_json(const ffd::Detection& d) {
  return json{{"cx", d.box.cx}, {"cy", d.box.cy}, {"w", d.box.w},       {"h", d.box.h},
              {"class", d.class_id},              {"score", d.score},   {"image", d.image_id}};
}

json report_to_json(const ffd::EvalReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
  };
  json per = json::array();
  for (size_t i = 0; i < r.thresholds.size(); ++i)
    per.push_back({{"iou", r.thresholds[i]}, {"ap", opt(r.per_threshold[i])}});
  return json{{"AP", opt(r.ap)},         {"AP_S", opt(r.ap_small)}, {"AP_M", opt(r.ap_medium)},
              {"AP_L", opt(r.ap_large)}, {"per_threshold", per}};
}

void emit(const json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream f(out_path);
    f << j.dump(2) << "\n";
    if (!f) throw ffd::DataError("cannot write " + out_path);
  }
}

std::vector<ffd::PoolEntry> build_pool(const std::vector<ffd::Sample>& samples) {
  std::vector<ffd::PoolEntry> pool;
  for (const auto& s : samples) {
    auto instances = ffd::extract_instances(s.mask);
    if (instances.empty()) continue;
    pool.push_back({s.image, std::move(instances)});
  }
  if (pool.empty()) throw ffd::DataError("no instances found in the source dataset");
  return pool;
}

int run_synth(const std::string& base_dir, const std::string& source_manifest, int count,
              uint64_t seed, const std::string& out_dir, const ffd::SynthConfig& synth_cfg) {
  std::vector<std::string> base_files;
  for (const auto& entry : fs::directory_iterator(base_dir))
    if (entry.path().extension() == ".png") base_files.push_back(entry.path().string());
  std::sort(base_files.begin(), base_files.end());
  if (base_files.empty()) throw ffd::DataError("no .png base images under " + base_dir);

  std::vector<ffd::ImageU8> bases;
  bases.reserve(base_files.size());
  for (const auto& p : base_files) bases.push_back(ffd::read_image_png(p));

  auto pool = build_pool(ffd::load_dataset(source_manifest));

  std::vector<ffd::Sample> scenes(static_cast<size_t>(count), ffd::Sample{});
  ffd::parallel_for(count, [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) {
      ffd::Rng rng(ffd::mix_seed(seed, uint64_t(i)));
      const auto& base = bases[rng.uniform_int(uint32_t(bases.size()))];
      auto scene = ffd::synthesize_scene(base, pool, synth_cfg, rng);
      char name[32];
      std::snprintf(name, sizeof(name), "scene_%05lld", static_cast<long long>(i));
      scenes[size_t(i)] = {std::move(scene.image), std::move(scene.mask),
                           std::move(scene.annotations), name, ""};
    }
  });
  ffd::write_dataset(out_dir, scenes);
  std::cout << "wrote " << count << " scenes to " << out_dir << "\n";
  return 0;
}

int run_train(const ffd::TrainConfig& cfg, const std::string& dataset, const std::string& out) {
  auto samples = ffd::load_dataset(dataset);
  auto model = ffd::build_model<float>(cfg.model, cfg.seed);
  ffd::AdamState adam;
  ffd::adam_init(adam, model);

  std::ofstream log_file(out + ".loss.csv");
  auto stats = ffd::train_model(model, adam, samples, cfg, &log_file);

  ffd::Rng rng(cfg.seed);
  ffd::save_checkpoint(out, model, &adam, &rng);
  std::cout << "trained " << stats.iterations << " iterations, loss " << stats.first_loss
            << " -> " << stats.final_loss << "; checkpoint: " << out << "\n";
  return 0;
}

int run_infer(const std::string& checkpoint, const std::string& image_path, double threshold,
              const std::string& out) {
  auto loaded = ffd::load_checkpoint(checkpoint);
  auto image = ffd::read_image_png(image_path);
  auto detections = ffd::infer_image(loaded.model, image, threshold);
  json arr = json::array();
  for (const auto& d : detections) arr.push_back(detection_to_json(d));
  emit(arr, out);
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& dataset, const std::string& split,
             const std::string& out) {
  auto loaded = ffd::load_checkpoint(checkpoint);
  auto samples = ffd::load_dataset(dataset);

  std::vector<const ffd::Sample*> selected;
  for (const auto& s : samples)
    if (split.empty() || split == "all" || s.split == split) selected.push_back(&s);

  // per-image inference on the worker pool; results land in fixed slots
  std::vector<std::vector<ffd::Detection>> per_image(selected.size());
  ffd::parallel_for(int64_t(selected.size()), [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i)
      // threshold 0: evaluation needs every scored output
      per_image[size_t(i)] = ffd::infer_image(loaded.model, selected[size_t(i)]->image, 0.0, int(i));
  });

  std::vector<ffd::Detection> detections;
  std::vector<ffd::GroundTruth> gts;
  for (size_t i = 0; i < selected.size(); ++i) {
    detections.insert(detections.end(), per_image[i].begin(), per_image[i].end());
    for (const auto& a : selected[i]->annotations) gts.push_back({a.box, a.class_id, int(i)});
  }
  auto report = ffd::coco_style_report(detections, gts);
  emit(report_to_json(report), out);
  return 0;
}

int run_gradcheck() {
  bool all_pass = true;
  for (const auto& e : ffd::run_gradient_suite()) {
    std::printf("%-42s max_rel_err=%10.3e checked=%lld excluded=%lld  %s\n", e.name.c_str(),
                e.max_rel_error, static_cast<long long>(e.coords_checked),
                static_cast<long long>(e.coords_excluded), e.pass ? "pass" : "FAIL");
    all_pass = all_pass && e.pass;
  }
  if (!all_pass) throw ffd::NumericalError("gradient check failed");
  return 0;
}

int run_bench(const std::string& config_path, int tile, int iterations) {
  ffd::TrainConfig cfg = load_train_config(config_path);
  if (tile != 0) {
    cfg.model.backbone.tile = ffd::tile_mode_from(tile);
    cfg.model.lor.n_g = ffd::default_n_g(cfg.model.backbone.tile);
  }
  auto model = ffd::build_model<float>(cfg.model, cfg.seed);
  const int h = cfg.model.backbone.input_h, w = cfg.model.backbone.input_w;
  auto image = ffd::make_image(w, h, 127);
  auto tensor = ffd::image_to_tensor<float>(image);

  // warm-up
  {
    ffd::Tape tape(false);
    ffd::model_forward_inference(tape, model, tensor);
  }
  double total_ms = 0.0, best_ms = 1e30;
  for (int i = 0; i < iterations; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    ffd::Tape tape(false);
    ffd::model_forward_inference(tape, model, tensor);
    auto t1 = std::chrono::steady_clock::now();
    double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    total_ms += ms;
    best_ms = std::min(best_ms, ms);
  }
  std::cout << "forward pass over " << w << "x" << h << ", " << iterations
            << " runs: mean " << total_ms / iterations << " ms, best " << best_ms << " ms\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FFD: single-stage, postprocessing-free fruit detector"};
  app.require_subcommand(1);

  std::string config_path, out_path, dataset_path, checkpoint_path, image_path;
  std::string base_dir, source_manifest, split = "all";
  uint64_t seed = 0;
  int tile = 0, count = 100, bench_iters = 20;
  double threshold = 0.5;
  int n_max = 100;

  auto* synth = app.add_subcommand("synth", "generate synthetic scenes");
  synth->add_option("--base", base_dir, "directory of fruit-free base images (*.png)")->required();
  synth->add_option("--source", source_manifest, "manifest.json of the instance source dataset")->required();
  synth->add_option("--count", count, "number of scenes to generate");
  synth->add_option("--seed", seed, "rng seed");
  synth->add_option("--out", out_path, "output dataset directory")->required();
  synth->add_option("--n-max", n_max, "maximum instances per scene");

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "train config json");
  train->add_option("--dataset", dataset_path, "dataset manifest.json")->required();
  train->add_option("--seed", seed, "rng seed (overrides config)");
  train->add_option("--tile", tile, "tile size (16, 32, 64; overrides config)");
  train->add_option("--out", out_path, "checkpoint output path")->required();

  auto* infer = app.add_subcommand("infer", "run postprocessing-free inference");
  infer->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  infer->add_option("--image", image_path, "input image (png)")->required();
  infer->add_option("--threshold", threshold, "score threshold (default 0.5)");
  infer->add_option("--out", out_path, "write detections json here instead of stdout");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  eval->add_option("--dataset", dataset_path, "dataset manifest.json")->required();
  eval->add_option("--split", split, "all, train, or test");
  eval->add_option("--out", out_path, "write report json here instead of stdout");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");

  auto* bench = app.add_subcommand("bench", "forward-pass timing");
  bench->add_option("--config", config_path, "train config json (model section used)");
  bench->add_option("--tile", tile, "tile size (16, 32, 64)");
  bench->add_option("--iterations", bench_iters, "timed runs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      ffd::SynthConfig scfg;
      scfg.n_max = n_max;
      return run_synth(base_dir, source_manifest, count, seed, out_path, scfg);
    }
    if (train->parsed()) {
      ffd::TrainConfig cfg = load_train_config(config_path);
      if (seed != 0 || train->count("--seed")) cfg.seed = seed;
      if (tile != 0) {
        cfg.model.backbone.tile = ffd::tile_mode_from(tile);
        cfg.model.lor.n_g = ffd::default_n_g(cfg.model.backbone.tile);
      }
      return run_train(cfg, dataset_path, out_path);
    }
    if (infer->parsed()) return run_infer(checkpoint_path, image_path, threshold, out_path);
    if (eval->parsed()) return run_eval(checkpoint_path, dataset_path, split, out_path);
    if (gradcheck->parsed()) return run_gradcheck();
    if (bench->parsed()) return run_bench(config_path, tile, bench_iters);
  } catch (const ffd::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ffd::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ffd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
