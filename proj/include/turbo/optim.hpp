// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "turbo/turbo_net.hpp"

namespace turbo {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// Moment buffers keyed by parameter name, in parameter order.
struct OptimState {
  AdamWConfig hyper;
  std::uint64_t step = 0;
  std::vector<std::string> names;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;

  static OptimState for_params(const std::vector<NamedParam<float>>& params,
                               const AdamWConfig& hyper);
};

/// Weight decay applies to matrices only (names ending in ".weight"); biases,
/// norm parameters and the learned tokens are not decayed.
bool decays(const std::string& param_name);

/// One decoupled AdamW update. Parameters without a gradient are skipped.
/// Throws NumericalError naming the parameter if any gradient is not finite.
void adamw_step(const std::vector<NamedParam<float>>& params, OptimState& state, double lr);

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(const std::vector<NamedParam<float>>& params, double max_norm);

struct Schedule {
  double base_lr = 1e-3;
  double min_lr = 0.0;
  double warmup_epochs = 0.0;
  double total_epochs = 1.0;
  std::size_t steps_per_epoch = 1;

  std::size_t warmup_steps() const;
  std::size_t total_steps() const;
};

/// Linear warmup from 0 to base_lr over the warmup steps, then a half cosine
/// down to min_lr at the last step. Steps past the end return min_lr.
double lr_at(const Schedule& schedule, std::size_t global_step);

}  // namespace turbo
