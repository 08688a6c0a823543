#pragma once

#include <cstdint>
#include <vector>

#include "ffd/data.hpp"
#include "ffd/geometry.hpp"
#include "ffd/image.hpp"
#include "ffd/rng.hpp"

namespace ffd {

struct SynthConfig {
  int n_max = 100;                 // instance count drawn uniformly from [0, n_max)
  int max_placement_attempts = 50; // rejections before an instance is skipped
};

// Source of instance patches: an image plus the instances extracted from its
// mask. Entries must carry at least one instance.
struct PoolEntry {
  ImageU8 image;
  std::vector<InstanceRecord> instances;
};

struct SynthScene {
  ImageU8 image;
  MaskU16 mask;
  std::vector<GtBox> annotations;
};

// Composites randomly chosen instances onto a fruit-free base image at
// random in-bounds locations, accepting a placement only when its bounding
// box overlaps no previously accepted box. Instance pixels are copied
// verbatim; the output mask assigns fresh sequential ids 1..K.
SynthScene synthesize_scene(const ImageU8& base_image, const std::vector<PoolEntry>& pool,
                            const SynthConfig& config, Rng& rng);

// True iff all pairwise box intersections have zero area (touching edges
// are permitted).
bool verify_overlap_free(const std::vector<GtBox>& annotations);

}  // namespace ffd
