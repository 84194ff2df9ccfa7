// SPDX-License-Identifier: Apache-2.0
//
// Three-way token partition for partial masked autoencoding: a fraction
// (1 - m) of the tokens is visible to the encoder, a fraction r is
// reconstructed by the decoder, and the remaining (m - r) is ignored for the
// step. The CLS token is outside the partition domain and always visible.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "turbo/patch_tokens.hpp"
#include "turbo/tensor.hpp"

namespace turbo {

struct PartitionSizes {
  std::size_t visible = 0;
  std::size_t recon = 0;
  std::size_t ignored = 0;
  bool operator==(const PartitionSizes&) const = default;
};

/// visible = floor(n(1-m)), recon = floor(n r), ignored = remainder.
/// Throws ConstraintError unless 0 <= r <= m <= 1.
PartitionSizes partition_sizes(std::size_t n, double mask_ratio, double recon_ratio);

struct PartitionPlan {
  std::size_t n = 0;
  double mask_ratio = 0.0;
  double recon_ratio = 0.0;
  std::vector<std::size_t> visible_idx;
  std::vector<std::size_t> recon_idx;
  std::vector<std::size_t> ignored_idx;
  std::uint64_t seed = 0;

  PartitionSizes sizes() const { return {visible_idx.size(), recon_idx.size(), ignored_idx.size()}; }
};

/// Random partition of {0..n-1}: shuffle, then split the permutation into
/// visible / recon / ignored runs. `downstream_head` rejects m = 1, since the
/// classifier or contrastive head needs at least the content tokens' context.
PartitionPlan make_partition(std::size_t n, double mask_ratio, double recon_ratio,
                             std::uint64_t seed, bool downstream_head = true);

/// Per-sample stream: one fresh plan per (seed, epoch, sample).
std::uint64_t partition_seed(std::uint64_t global_seed, std::uint64_t epoch,
                             std::uint64_t sample_index);

template <typename T>
struct PartitionedTokens {
  BasicTensor<T> visible;  // [B, N_i + 1, D], CLS first
  BasicTensor<T> targets;  // [B, N_r, P] raw patch rows
};

/// Gathers the visible embedded tokens (keeping CLS at index 0) and the raw
/// patch rows that serve as reconstruction targets.
///
/// tokens: embedded batch [B, n + 1, D]; raw_patches: [B, n, P]; one plan per
/// batch entry, all with identical sizes.
template <typename T>
PartitionedTokens<T> apply_partition(const TokenBatch<T>& tokens,
                                     const BasicTensor<T>& raw_patches,
                                     const std::vector<PartitionPlan>& plans);

/// Checks that all plans in a batch share n and sizes.
void check_uniform_plans(const std::vector<PartitionPlan>& plans, std::size_t n);

}  // namespace turbo
