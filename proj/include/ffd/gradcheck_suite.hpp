#pragma once

#include <string>
#include <vector>

namespace ffd {

struct GradSuiteEntry {
  std::string name;
  double max_rel_error = 0.0;
  int64_t coords_checked = 0;
  int64_t coords_excluded = 0;
  bool pass = false;
};

// FP64 central-difference checks of every differentiable primitive plus the
// composed backbone + LOR + FFN graph on a 2x2-tile toy configuration. An
// entry passes when its max relative error stays below 1e-4.
std::vector<GradSuiteEntry> run_gradient_suite(uint64_t seed = 7);

}  // namespace ffd
