#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "ffd/rng.hpp"
#include "ffd/tensor.hpp"

namespace ffd {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int64_t coords_checked = 0;
  int64_t coords_excluded = 0;  // perturbation straddled a kink (branch flip)
};

// Central-difference check of a scalar-valued graph builder against the
// tape's analytic gradients.
//
//   fn(tape, inputs) must rebuild the graph from scratch on every call and
//   return a scalar tensor. The builder is required to be pure: it is run
//   twice up front and must reproduce both the value and the branch hash
//   bitwise, otherwise a NumericalError is thrown.
//
// Relative error per coordinate: |analytic - numeric| / max(1, |analytic|,
// |numeric|). Coordinates whose +/-step evaluations take different branches
// (e.g. the input sits within `step` of a ReLU kink) are excluded rather
// than compared against a meaningless difference quotient.
//
// max_coords_per_tensor > 0 checks a seeded random subset of coordinates per
// input, which keeps composed-graph checks affordable.
template <typename S, typename Fn>
GradCheckResult gradient_check(Fn&& fn, const std::vector<TensorT<S>>& inputs,
                               S step = S(1e-3), int64_t max_coords_per_tensor = 0,
                               uint64_t subsample_seed = 0) {
  if (step <= S(0)) throw ConfigError("gradient_check: step must be positive");

  auto eval = [&](bool record) {
    TapeT<S> tape(record);
    TensorT<S> y = fn(tape, inputs);
    if (y->numel() != 1) throw NumericalError("gradient_check: builder must return a scalar");
    struct Out {
      S value;
      uint64_t hash;
      TensorT<S> tensor;
    };
    return Out{y->values[0], tape.branch_hash(), y};
  };

  // Purity gate: identical inputs must reproduce value and branch pattern.
  {
    auto a = eval(false);
    auto b = eval(false);
    if (a.value != b.value || a.hash != b.hash)
      throw NumericalError("gradient_check: builder is not deterministic");
  }

  // Analytic pass.
  for (const auto& t : inputs) {
    t->requires_grad = true;
    t->on_tape = true;
    t->zero_grad();
  }
  {
    TapeT<S> tape(true);
    TensorT<S> y = fn(tape, inputs);
    if (y->numel() != 1) throw NumericalError("gradient_check: builder must return a scalar");
    tape.backward(y);
  }
  std::vector<std::vector<S>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& t : inputs) {
    t->ensure_grad();
    analytic.push_back(t->grad);
  }

  GradCheckResult result;
  Rng pick(subsample_seed);
  for (size_t ti = 0; ti < inputs.size(); ++ti) {
    auto& t = inputs[ti];
    const int64_t n = t->numel();
    std::vector<int64_t> coords;
    if (max_coords_per_tensor > 0 && n > max_coords_per_tensor) {
      // sample without replacement
      std::vector<int64_t> all(n);
      for (int64_t i = 0; i < n; ++i) all[i] = i;
      for (int64_t i = 0; i < max_coords_per_tensor; ++i) {
        int64_t j = i + pick.uniform_int(static_cast<uint32_t>(n - i));
        std::swap(all[i], all[j]);
      }
      coords.assign(all.begin(), all.begin() + max_coords_per_tensor);
    } else {
      coords.resize(n);
      for (int64_t i = 0; i < n; ++i) coords[i] = i;
    }

    for (int64_t ci : coords) {
      const S saved = t->values[ci];
      t->values[ci] = saved + step;
      auto plus = eval(false);
      t->values[ci] = saved - step;
      auto minus = eval(false);
      t->values[ci] = saved;

      if (plus.hash != minus.hash) {
        ++result.coords_excluded;
        continue;
      }
      double numeric = (static_cast<double>(plus.value) - static_cast<double>(minus.value)) /
                       (2.0 * static_cast<double>(step));
      double a = static_cast<double>(analytic[ti][ci]);
      double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
      double rel = std::abs(a - numeric) / denom;
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.coords_checked;
    }
  }
  return result;
}

}  // namespace ffd
