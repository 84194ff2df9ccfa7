// SPDX-License-Identifier: Apache-2.0
#include "turbo/partition.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "turbo/errors.hpp"
#include "turbo/rng.hpp"

namespace turbo {

namespace {

// Absorbs representation error such as 100 * 0.71 = 70.99999999999999.
constexpr double kFloorSlack = 1e-9;

std::size_t floor_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction + kFloorSlack));
}

void check_ratios(double m, double r) {
  if (!(m >= 0.0 && m <= 1.0)) {
    throw ConstraintError("mask ratio must lie in [0, 1], got " + std::to_string(m));
  }
  if (!(r >= 0.0)) {
    throw ConstraintError("reconstruction ratio must be >= 0, got " + std::to_string(r));
  }
  if (r > m) {
    throw ConstraintError("reconstruction ratio " + std::to_string(r) +
                          " exceeds mask ratio " + std::to_string(m) + ": need r ≤ m");
  }
}

}  // namespace

PartitionSizes partition_sizes(std::size_t n, double mask_ratio, double recon_ratio) {
  check_ratios(mask_ratio, recon_ratio);
  PartitionSizes s;
  s.visible = std::min(n, floor_count(n, 1.0 - mask_ratio));
  // r = m reconstructs every masked token, even when n * m is fractional.
  s.recon = recon_ratio == mask_ratio ? n - s.visible
                                      : std::min(n - s.visible, floor_count(n, recon_ratio));
  s.ignored = n - s.visible - s.recon;
  return s;
}

PartitionPlan make_partition(std::size_t n, double mask_ratio, double recon_ratio,
                             std::uint64_t seed, bool downstream_head) {
  if (n == 0) throw ConstraintError("partition needs at least one token");
  const PartitionSizes s = partition_sizes(n, mask_ratio, recon_ratio);
  if (downstream_head && mask_ratio >= 1.0) {
    throw ConfigError("mask ratio 1 leaves no visible content tokens for the downstream head");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  PartitionPlan plan;
  plan.n = n;
  plan.mask_ratio = mask_ratio;
  plan.recon_ratio = recon_ratio;
  plan.seed = seed;
  const auto vis_end = order.begin() + static_cast<std::ptrdiff_t>(s.visible);
  const auto rec_end = vis_end + static_cast<std::ptrdiff_t>(s.recon);
  plan.visible_idx.assign(order.begin(), vis_end);
  plan.recon_idx.assign(vis_end, rec_end);
  plan.ignored_idx.assign(rec_end, order.end());
  return plan;
}

std::uint64_t partition_seed(std::uint64_t global_seed, std::uint64_t epoch,
                             std::uint64_t sample_index) {
  return hash_seed({global_seed, 0x6D61736BULL /* "mask" */, epoch, sample_index});
}

void check_uniform_plans(const std::vector<PartitionPlan>& plans, std::size_t n) {
  if (plans.empty()) throw ContractError("empty plan batch");
  const PartitionSizes first = plans.front().sizes();
  for (const auto& p : plans) {
    if (p.n != n) {
      throw GeometryError("plan covers " + std::to_string(p.n) + " tokens, batch has " +
                          std::to_string(n));
    }
    if (!(p.sizes() == first)) throw GeometryError("plans in one batch must share sizes");
  }
}

template <typename T>
PartitionedTokens<T> apply_partition(const TokenBatch<T>& tokens,
                                     const BasicTensor<T>& raw_patches,
                                     const std::vector<PartitionPlan>& plans) {
  const std::size_t n = tokens.geometry.num_tokens();
  const auto& emb = tokens.embeddings;
  if (emb.rank() != 3 || emb.dim(1) != n + 1 || emb.dim(0) != plans.size()) {
    throw GeometryError("token batch " + shape_str(emb.shape()) + " does not match " +
                        std::to_string(plans.size()) + " plans over " + std::to_string(n) +
                        " tokens");
  }
  if (raw_patches.rank() != 3 || raw_patches.dim(0) != plans.size() || raw_patches.dim(1) != n) {
    throw GeometryError("raw patches " + shape_str(raw_patches.shape()) +
                        " do not match the token batch");
  }
  check_uniform_plans(plans, n);
  // Token i of the partition domain sits at sequence index i + 1.
  std::vector<std::vector<std::size_t>> keep(plans.size());
  std::vector<std::vector<std::size_t>> recon(plans.size());
  for (std::size_t b = 0; b < plans.size(); ++b) {
    keep[b].push_back(0);
    for (std::size_t i : plans[b].visible_idx) keep[b].push_back(i + 1);
    recon[b] = plans[b].recon_idx;
  }
  PartitionedTokens<T> out;
  out.visible = gather_rows(emb, keep);
  {
    NoGradGuard guard;
    out.targets = gather_rows(raw_patches, recon);
  }
  return out;
}

template PartitionedTokens<float> apply_partition(const TokenBatch<float>&, const Tensor&,
                                                  const std::vector<PartitionPlan>&);
template PartitionedTokens<double> apply_partition(const TokenBatch<double>&, const Tensor64&,
                                                   const std::vector<PartitionPlan>&);

}  // namespace turbo
