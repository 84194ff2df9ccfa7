// SPDX-License-Identifier: Apache-2.0
//
// Analytic compute, parameter and activation-memory model for one forward
// pass of turbo training on a single clip.
//
// FLOPs follow the multiply-accumulate convention: one fused multiply-add is
// one FLOP. Softmax, normalization, GELU and bias terms are not counted.
#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "turbo/config.hpp"

namespace turbo {

struct BlockCost {
  std::string name;
  double flops = 0.0;
  double attention_flops = 0.0;  // scores + weighted sum
  double activation_floats = 0.0;
  double attention_floats = 0.0;  // heads * L^2
};

struct CostReport {
  double mask_ratio = 0.0;
  double recon_ratio = 0.0;
  std::size_t visible_tokens = 0;
  std::size_t recon_tokens = 0;

  double embed_gflops = 0.0;
  double encoder_gflops = 0.0;
  double decoder_gflops = 0.0;
  double head_gflops = 0.0;
  double total_gflops = 0.0;

  std::size_t param_count = 0;
  double activation_floats = 0.0;  // forward activations kept for backward
  double attention_floats = 0.0;   // share of the above held by attention matrices
  std::vector<BlockCost> blocks;

  double activation_mb() const { return activation_floats * 4.0 / (1024.0 * 1024.0); }
};

/// One transformer block at sequence length L and width D:
/// 4 L D^2 (qkv + output projections) + 2 L^2 D (scores + mixing) + 8 L D^2 (MLP).
double block_flops(std::size_t seq_len, std::size_t dim);

/// Per-clip cost at mask ratio m and reconstruction ratio r. The decoder is
/// only counted when r > 0.
CostReport flops_estimate(const TurboConfig& config, double mask_ratio, double recon_ratio);

/// Closed-form count of the parameters TurboNet builds for `config`.
std::size_t param_count(const TurboConfig& config);

/// Stored forward activations (floats) for a batch of clips.
double activation_memory(const TurboConfig& config, double mask_ratio, double recon_ratio,
                         std::size_t batch);

/// (0, 0), (0.5, 0.5), (0.75, 0.75), (0.75, 0.25), (0.9, 0.9), (0.9, 0.1).
std::vector<std::pair<double, double>> default_sweep_pairs();

/// Parses "0.5:0.5,0.9:0.1" into pairs; throws ConfigError on bad input.
std::vector<std::pair<double, double>> parse_sweep(const std::string& text);

std::vector<CostReport> sweep(const TurboConfig& config,
                              const std::vector<std::pair<double, double>>& pairs);

/// CSV with columns mask_pct,recon_pct,encoder_gflops,decoder_gflops,
/// total_gflops,activation_mb (activation for batch 1).
void write_sweep_csv(std::ostream& os, const std::vector<CostReport>& rows);

}  // namespace turbo
