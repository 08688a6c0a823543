#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ffd/geometry.hpp"
#include "ffd/image.hpp"
#include "ffd/rng.hpp"

namespace ffd {

// One instance extracted from a mask: its pixels, bounding box, and class.
struct InstanceRecord {
  int id = 0;
  std::vector<std::pair<int, int>> pixels;
  BoxAbs box;
  int class_id = 1;
};

// Unit of dataset I/O: image + instance-id mask + annotations derived from
// the mask (never stored on disk).
struct Sample {
  ImageU8 image;
  MaskU16 mask;
  std::vector<GtBox> annotations;
  std::string name;
  std::string split;  // "train", "test", or empty
};

struct AugmentConfig {
  double color_jitter_prob = 0.4;
  double rotation_min_deg = -10.0, rotation_max_deg = 10.0;
  double translation_min_px = -50.0, translation_max_px = 50.0;
  double mirror_prob = 0.5;
  double scale_min = 0.8, scale_max = 1.25;
  // jitter magnitudes
  double hue_delta = 0.05;
  double sat_min = 0.7, sat_max = 1.3;
  double val_min = 0.7, val_max = 1.3;
  double contrast_min = 0.7, contrast_max = 1.3;
};

// One entry per distinct nonzero id, ascending; boxes via box_from_mask.
std::vector<InstanceRecord> extract_instances(const MaskU16& mask);

// Reads a manifest.json (array of {image, mask, split?} records, paths
// relative to the manifest) in manifest order. Validates existence, size
// agreement, and contiguous instance ids 1..K.
std::vector<Sample> load_dataset(const std::string& manifest_path);

// Writes images/, masks/, and manifest.json in the dataset layout.
void write_dataset(const std::string& dir, const std::vector<Sample>& samples);

// Geometric transforms hit image and mask together (nearest-neighbor for the
// mask); boxes are re-extracted from the transformed mask, never transformed
// directly. Instances whose centers leave the image are dropped. Color
// jitter fires with the configured probability and touches only the image.
Sample augment(const Sample& sample, const AugmentConfig& config, Rng& rng);

// Deterministic seeded shuffle, then split train:test = parts ratio.
std::pair<std::vector<Sample>, std::vector<Sample>> split_dataset(
    const std::vector<Sample>& samples, int train_parts, int test_parts, uint64_t seed);

}  // namespace ffd
