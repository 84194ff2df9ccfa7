// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "turbo/patch_tokens.hpp"

namespace turbo {

enum class Task { classify, contrast, long_classify };
enum class DatasetKind { shapes, pairs, longvideo };
enum class LogBase { e, two, ten };

std::string_view to_string(Task task);
std::string_view to_string(DatasetKind kind);
std::string_view to_string(LogBase base);
Task parse_task(std::string_view text);
DatasetKind parse_dataset(std::string_view text);
LogBase parse_log_base(std::string_view text);

/// Width of the frozen toy text embedding.
inline constexpr std::size_t kTextDim = 64;

/// Architecture plus training hyperparameters for one run.
struct TurboConfig {
  Task task = Task::classify;
  PatchGeometry geometry = PatchGeometry::make(8, 32, 32, 2, 8, 8);

  std::size_t enc_depth = 4;
  std::size_t enc_dim = 64;
  std::size_t enc_heads = 4;
  std::size_t dec_depth = 2;
  std::size_t dec_dim = 32;
  std::size_t dec_heads = 2;
  std::size_t num_classes = 16;
  std::size_t proj_dim = 32;
  std::size_t text_dim = kTextDim;

  double mask_ratio = 0.0;
  double recon_ratio = 0.0;

  // Optimization.
  std::size_t batch_size = 32;
  double epochs = 30;
  double base_lr = 1e-3;
  double min_lr = 0.0;
  double warmup_epochs = 3;
  double weight_decay = 0.05;
  double clip_grad = 1.0;  // <= 0 disables
  std::uint64_t seed = 0;

  // Objectives.
  bool normalize_embeddings = true;
  bool norm_pix_loss = true;
  double temperature = 1.0;
  LogBase log_base = LogBase::e;

  // Data.
  DatasetKind dataset = DatasetKind::shapes;
  std::size_t train_size = 2000;
  std::size_t val_size = 0;
  std::size_t test_size = 400;

  // Evaluation.
  double infer_mask = 0.0;
  std::size_t multicrop = 10;

  std::string out_dir = "runs/default";
  std::size_t checkpoint_every = 0;  // steps; 0 = only at the end

  /// Throws ConfigError on any inconsistency.
  void validate() const;
  std::size_t head_dim() const { return enc_dim / enc_heads; }
};

/// Desk-scale preset: 8 frames of 32x32, patch 2x8x8, encoder 4x64,
/// decoder 2x32, 16 classes.
TurboConfig toy_preset(Task task = Task::classify);

/// ViT-B video preset: 16 frames of 224x224, patch 2x16x16, encoder 12x768,
/// decoder 8x512, 101 classes.
TurboConfig reference_preset();

/// Reference preset with a 4x384 decoder, the decoder size whose counts match the
/// target masked FLOP rows.
TurboConfig calibration_preset();

/// Long-video presets with a constant visible-token budget:
/// F16 (m, r) = (0.5, 0.5), F32 = (0.75, 0.25), F64 = (0.875, 0.125).
TurboConfig long_preset(std::size_t frames);

}  // namespace turbo
