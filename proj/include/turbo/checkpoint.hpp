// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout (all integers little-endian):
//   "TURBO1\n"
//   u64 header length
//   header: JSON {version, created, config, step, tensors: [{name, shape,
//           dtype, offset, bytes}], optim?}
//   float32 blobs, contiguous, in manifest order; offsets are relative to
//   the first blob.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "turbo/config.hpp"
#include "turbo/optim.hpp"
#include "turbo/turbo_net.hpp"

namespace turbo {

inline constexpr char kCheckpointMagic[] = "TURBO1\n";
inline constexpr int kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  TurboConfig config;
  std::size_t step = 0;
  std::string created;  // informational, excluded from digests
  std::vector<StoredTensor> tensors;
  std::optional<OptimState> optim;
};

/// Snapshot of a model (and optionally its optimizer) at a global step.
Checkpoint make_checkpoint(const TurboConfig& config, const TurboNet<float>& net,
                           std::size_t step, const OptimState* optim);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies stored values into the model's parameters; every parameter must be
/// present with a matching shape.
void restore_parameters(TurboNet<float>& net, const Checkpoint& ckpt);

/// Hex digest of the file with the `created` field removed from the header.
std::string checkpoint_digest(const std::filesystem::path& path);

}  // namespace turbo
