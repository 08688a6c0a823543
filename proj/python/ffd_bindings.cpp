#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "ffd/checkpoint.hpp"
#include "ffd/config_json.hpp"
#include "ffd/infer.hpp"
#include "ffd/matching.hpp"
#include "ffd/metrics.hpp"
#include "ffd/synth.hpp"
#include "ffd/train.hpp"

namespace py = pybind11;
using namespace ffd;

namespace {

ImageU8 image_from_array(const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& arr) {
  auto buf = arr.request();
  if (buf.ndim != 3 || buf.shape[2] != 3)
    throw std::invalid_argument("image must be an H x W x 3 uint8 array");
  ImageU8 img = make_image(int(buf.shape[1]), int(buf.shape[0]));
  std::memcpy(img.pixels.data(), buf.ptr, img.pixels.size());
  return img;
}

py::array_t<uint8_t> image_to_array(const ImageU8& img) {
  py::array_t<uint8_t> arr({img.height, img.width, 3});
  std::memcpy(arr.mutable_data(), img.pixels.data(), img.pixels.size());
  return arr;
}

MaskU16 mask_from_array(const py::array_t<uint16_t, py::array::c_style | py::array::forcecast>& arr) {
  auto buf = arr.request();
  if (buf.ndim != 2) throw std::invalid_argument("mask must be an H x W uint16 array");
  MaskU16 mask = make_mask(int(buf.shape[1]), int(buf.shape[0]));
  std::memcpy(mask.ids.data(), buf.ptr, mask.ids.size() * sizeof(uint16_t));
  return mask;
}

py::array_t<uint16_t> mask_to_array(const MaskU16& mask) {
  py::array_t<uint16_t> arr({mask.height, mask.width});
  std::memcpy(arr.mutable_data(), mask.ids.data(), mask.ids.size() * sizeof(uint16_t));
  return arr;
}

py::dict detection_to_dict(const Detection& d) {
  py::dict out;
  out["cx"] = d.box.cx;
  out["cy"] = d.box.cy;
  out["w"] = d.box.w;
  out["h"] = d.box.h;
  out["class_id"] = d.class_id;
  out["score"] = d.score;
  out["image_id"] = d.image_id;
  return out;
}

class PyModel {
 public:
  PyModel(const std::string& config_json, uint64_t seed) {
    ModelConfig cfg = nlohmann::json::parse(config_json).get<ModelConfig>();
    model_ = build_model<float>(cfg, seed);
  }
  explicit PyModel(Model model) : model_(std::move(model)) {}

  py::list infer(const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& image,
                 double threshold) {
    auto img = image_from_array(image);
    py::list out;
    for (const auto& d : infer_image(model_, img, threshold)) out.append(detection_to_dict(d));
    return out;
  }

  void save(const std::string& path) { save_checkpoint(path, model_, nullptr, nullptr); }

  static PyModel load(const std::string& path) {
    return PyModel(std::move(load_checkpoint(path).model));
  }

  int64_t param_count() const { return model_.param_count(); }
  std::string config() const { return nlohmann::json(model_.config).dump(); }

 private:
  Model model_;
};

}  // namespace

PYBIND11_MODULE(ffdpy, m) {
  m.doc() = "FFD core operations: geometry, matching, synthesis, evaluation, inference";

  m.def(
      "hungarian",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& cost) {
        auto buf = cost.request();
        if (buf.ndim != 2) throw std::invalid_argument("cost must be a 2-d array");
        CostMatrix c;
        c.rows = int(buf.shape[0]);
        c.cols = int(buf.shape[1]);
        c.values.assign(static_cast<double*>(buf.ptr),
                        static_cast<double*>(buf.ptr) + c.rows * c.cols);
        auto a = hungarian(c);
        return py::make_tuple(a.pairs, a.total_cost, a.unmatched_rows);
      },
      py::arg("cost"),
      "Exact minimum-cost assignment; returns (pairs, total_cost, unmatched_rows).");

  m.def(
      "normalize_box",
      [](double cx, double cy, double w, double h, int tile_row, int tile_col, int image_w,
         int image_h, int tile) {
        auto grid = TileGrid::from_image(image_w, image_h, tile);
        auto nb = normalize_box({cx, cy, w, h}, tile_row, tile_col, grid);
        return py::make_tuple(nb.ncx, nb.ncy, nb.lw, nb.lh);
      },
      py::arg("cx"), py::arg("cy"), py::arg("w"), py::arg("h"), py::arg("tile_row"),
      py::arg("tile_col"), py::arg("image_w"), py::arg("image_h"), py::arg("tile") = 32);

  m.def(
      "denormalize_box",
      [](double ncx, double ncy, double lw, double lh, int tile_row, int tile_col, int image_w,
         int image_h, int tile) {
        auto grid = TileGrid::from_image(image_w, image_h, tile);
        auto b = denormalize_box({ncx, ncy, lw, lh}, tile_row, tile_col, grid);
        return py::make_tuple(b.cx, b.cy, b.w, b.h);
      },
      py::arg("ncx"), py::arg("ncy"), py::arg("lw"), py::arg("lh"), py::arg("tile_row"),
      py::arg("tile_col"), py::arg("image_w"), py::arg("image_h"), py::arg("tile") = 32);

  m.def(
      "assign_tile",
      [](double cx, double cy, int image_w, int image_h, int tile) {
        auto grid = TileGrid::from_image(image_w, image_h, tile);
        return assign_tile({cx, cy, 1, 1}, grid);
      },
      py::arg("cx"), py::arg("cy"), py::arg("image_w"), py::arg("image_h"), py::arg("tile") = 32);

  m.def(
      "iou",
      [](py::sequence a, py::sequence b) {
        BoxAbs ba{a[0].cast<double>(), a[1].cast<double>(), a[2].cast<double>(), a[3].cast<double>()};
        BoxAbs bb{b[0].cast<double>(), b[1].cast<double>(), b[2].cast<double>(), b[3].cast<double>()};
        return iou(ba, bb);
      },
      py::arg("a"), py::arg("b"), "IoU of two (cx, cy, w, h) boxes.");

  m.def(
      "synthesize_scene",
      [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& base,
         const py::list& pool, uint64_t seed, int n_max) {
        std::vector<PoolEntry> entries;
        for (auto item : pool) {
          auto pair = item.cast<py::tuple>();
          PoolEntry e;
          e.image = image_from_array(pair[0].cast<py::array_t<uint8_t, py::array::c_style | py::array::forcecast>>());
          auto mask = mask_from_array(pair[1].cast<py::array_t<uint16_t, py::array::c_style | py::array::forcecast>>());
          e.instances = extract_instances(mask);
          entries.push_back(std::move(e));
        }
        SynthConfig cfg;
        cfg.n_max = n_max;
        Rng rng(seed);
        auto scene = synthesize_scene(image_from_array(base), entries, cfg, rng);
        py::list boxes;
        for (const auto& a : scene.annotations)
          boxes.append(py::make_tuple(a.box.cx, a.box.cy, a.box.w, a.box.h, a.class_id));
        return py::make_tuple(image_to_array(scene.image), mask_to_array(scene.mask), boxes);
      },
      py::arg("base"), py::arg("pool"), py::arg("seed") = 0, py::arg("n_max") = 100,
      "Occlusion-aware scene synthesis; pool entries are (image, mask) pairs.");

  m.def(
      "evaluate",
      [](const py::list& detections, const py::list& gts) {
        std::vector<Detection> dets;
        for (auto item : detections) {
          auto t = item.cast<py::tuple>();
          dets.push_back({{t[0].cast<double>(), t[1].cast<double>(), t[2].cast<double>(),
                           t[3].cast<double>()},
                          t.size() > 5 ? t[5].cast<int>() : 1,
                          t[4].cast<double>(),
                          t.size() > 6 ? t[6].cast<int>() : 0});
        }
        std::vector<GroundTruth> gt;
        for (auto item : gts) {
          auto t = item.cast<py::tuple>();
          gt.push_back({{t[0].cast<double>(), t[1].cast<double>(), t[2].cast<double>(),
                         t[3].cast<double>()},
                        t.size() > 4 ? t[4].cast<int>() : 1,
                        t.size() > 5 ? t[5].cast<int>() : 0});
        }
        auto r = coco_style_report(dets, gt);
        py::dict out;
        auto set = [&out](const char* key, const std::optional<double>& v) {
          if (v)
            out[key] = *v;
          else
            out[key] = py::none();
        };
        set("AP", r.ap);
        set("AP_S", r.ap_small);
        set("AP_M", r.ap_medium);
        set("AP_L", r.ap_large);
        return out;
      },
      py::arg("detections"), py::arg("gts"),
      "COCO-style report. Detections: (cx, cy, w, h, score[, class_id[, image_id]]); "
      "gts: (cx, cy, w, h[, class_id[, image_id]]).");

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&, uint64_t>(), py::arg("config_json") = "{}",
           py::arg("seed") = 0)
      .def("infer", &PyModel::infer, py::arg("image"), py::arg("threshold") = 0.5,
           "Postprocessing-free detections for an H x W x 3 uint8 image.")
      .def("save", &PyModel::save, py::arg("path"))
      .def_static("load", &PyModel::load, py::arg("path"))
      .def_property_readonly("param_count", &PyModel::param_count)
      .def_property_readonly("config", &PyModel::config);
}
