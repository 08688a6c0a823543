#include "ffd/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "ffd/config_json.hpp"

namespace ffd {

namespace {

constexpr char kMagic[8] = {'F', 'F', 'D', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw DataError("checkpoint truncated");
  return v;
}

void write_string(std::ofstream& f, const std::string& s) {
  write_pod<uint32_t>(f, uint32_t(s.size()));
  f.write(s.data(), std::streamsize(s.size()));
}

std::string read_string(std::ifstream& f) {
  uint32_t len = read_pod<uint32_t>(f);
  std::string s(len, '\0');
  f.read(s.data(), std::streamsize(len));
  if (!f) throw DataError("checkpoint truncated");
  return s;
}

void write_segment(std::ofstream& f, const std::string& name, const std::vector<int>& shape,
                   const std::vector<float>& payload) {
  write_string(f, name);
  write_pod<uint32_t>(f, uint32_t(shape.size()));
  for (int d : shape) write_pod<uint32_t>(f, uint32_t(d));
  write_pod<uint64_t>(f, uint64_t(payload.size()) * sizeof(float));
  f.write(reinterpret_cast<const char*>(payload.data()),
          std::streamsize(payload.size() * sizeof(float)));
}

struct Segment {
  std::string name;
  std::vector<int> shape;
  std::vector<float> payload;
};

Segment read_segment(std::ifstream& f) {
  Segment s;
  s.name = read_string(f);
  uint32_t ndim = read_pod<uint32_t>(f);
  for (uint32_t i = 0; i < ndim; ++i) s.shape.push_back(int(read_pod<uint32_t>(f)));
  uint64_t bytes = read_pod<uint64_t>(f);
  if (bytes % sizeof(float) != 0) throw DataError("checkpoint segment has odd byte length");
  s.payload.resize(bytes / sizeof(float));
  f.read(reinterpret_cast<char*>(s.payload.data()), std::streamsize(bytes));
  if (!f) throw DataError("checkpoint truncated in segment " + s.name);
  return s;
}

void write_float_vec(std::ofstream& f, const std::vector<float>& v) {
  write_pod<uint64_t>(f, uint64_t(v.size()));
  f.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(float)));
}

std::vector<float> read_float_vec(std::ifstream& f) {
  uint64_t n = read_pod<uint64_t>(f);
  std::vector<float> v(n);
  f.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(float)));
  if (!f) throw DataError("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, Model& model, const AdamState* adam,
                     const Rng* rng) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint for writing: " + path);

  f.write(kMagic, 8);
  write_pod<uint32_t>(f, kVersion);

  nlohmann::json config = model.config;
  write_string(f, config.dump());

  uint32_t count = 0;
  visit_params(model, [&](const std::string&, Tensor&) { ++count; });
  visit_state(model, [&](const std::string&, std::vector<float>&) { ++count; });
  write_pod<uint32_t>(f, count);
  visit_params(model, [&](const std::string& name, Tensor& t) {
    write_segment(f, name, t->shape, t->values);
  });
  visit_state(model, [&](const std::string& name, std::vector<float>& v) {
    write_segment(f, name, {int(v.size())}, v);
  });

  write_pod<uint8_t>(f, adam ? 1 : 0);
  if (adam) {
    write_pod<uint64_t>(f, uint64_t(adam->t));
    write_pod<uint32_t>(f, uint32_t(adam->m.size()));
    for (size_t i = 0; i < adam->m.size(); ++i) {
      write_float_vec(f, adam->m[i]);
      write_float_vec(f, adam->v[i]);
    }
  }

  write_pod<uint8_t>(f, rng ? 1 : 0);
  if (rng) {
    write_pod<uint64_t>(f, rng->state());
    write_pod<uint64_t>(f, rng->inc());
  }
  if (!f) throw DataError("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint not found: " + path);

  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("not an FFD checkpoint: " + path);
  uint32_t version = read_pod<uint32_t>(f);
  if (version != kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));

  ModelConfig config = nlohmann::json::parse(read_string(f)).get<ModelConfig>();

  LoadedCheckpoint out{build_model<float>(config, 0), std::nullopt, std::nullopt};

  uint32_t count = read_pod<uint32_t>(f);
  std::vector<Segment> segments;
  segments.reserve(count);
  for (uint32_t i = 0; i < count; ++i) segments.push_back(read_segment(f));

  auto take = [&segments, &path](const std::string& name) -> Segment& {
    for (auto& s : segments)
      if (s.name == name) return s;
    throw DataError("checkpoint " + path + " is missing segment " + name);
  };
  visit_params(out.model, [&](const std::string& name, Tensor& t) {
    Segment& s = take(name);
    if (s.shape != t->shape)
      throw DataError("checkpoint segment " + name + " has unexpected shape");
    t->values = s.payload;
  });
  visit_state(out.model, [&](const std::string& name, std::vector<float>& v) {
    Segment& s = take(name);
    if (s.payload.size() != v.size())
      throw DataError("checkpoint segment " + name + " has unexpected length");
    v = s.payload;
  });

  if (read_pod<uint8_t>(f)) {
    AdamState adam;
    adam.t = int64_t(read_pod<uint64_t>(f));
    uint32_t n = read_pod<uint32_t>(f);
    for (uint32_t i = 0; i < n; ++i) {
      adam.m.push_back(read_float_vec(f));
      adam.v.push_back(read_float_vec(f));
    }
    out.adam = std::move(adam);
  }
  if (read_pod<uint8_t>(f)) {
    uint64_t state = read_pod<uint64_t>(f);
    uint64_t inc = read_pod<uint64_t>(f);
    Rng rng;
    rng.restore(state, inc);
    out.rng = rng;
  }
  return out;
}

}  // namespace ffd
