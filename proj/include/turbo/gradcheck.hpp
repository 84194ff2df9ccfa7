// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference checks of the analytic gradients, run in 64-bit.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "turbo/tensor.hpp"

namespace turbo {

struct GradcheckEntry {
  std::string name;
  std::size_t coords = 0;
  double max_rel_err = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  double tolerance = 1e-4;
  std::vector<GradcheckEntry> entries;

  bool passed() const;
  std::vector<std::string> failures() const;
};

using LossFn = std::function<Tensor64(const std::vector<Tensor64>&)>;

struct GradcheckOptions {
  std::size_t min_coords = 64;
  double step_scale = 1e-5;  // h = step_scale * max(1, |x|)
  /// Relative error denominator floor, so that two near-zero gradients do not
  /// blow up the ratio.
  double abs_floor = 1e-5;
};

/// Compares backward() of `loss(inputs)` with central differences on a random
/// sample of coordinates (at least `min_coords` in total and at least one per
/// input, or all of them when fewer exist). Inputs must require grad.
/// Returns the largest |analytic - numeric| / max(|analytic|, |numeric|, floor).
double max_gradient_error(const LossFn& loss, std::vector<Tensor64> inputs, std::uint64_t seed,
                          std::size_t* coords_checked = nullptr,
                          const GradcheckOptions& options = {});

/// Every differentiable op, an encoder block, and full toy-model training
/// losses for the classification and contrastive tasks.
GradcheckReport run_gradcheck_suite(std::uint64_t seed, double tolerance = 1e-4);

}  // namespace turbo
