// SPDX-License-Identifier: Apache-2.0
#include "turbo/config.hpp"

#include <string>

#include "turbo/errors.hpp"

namespace turbo {

std::string_view to_string(Task task) {
  switch (task) {
    case Task::classify: return "classify";
    case Task::contrast: return "contrast";
    case Task::long_classify: return "long_classify";
  }
  return "?";
}

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::shapes: return "shapes";
    case DatasetKind::pairs: return "pairs";
    case DatasetKind::longvideo: return "longvideo";
  }
  return "?";
}

std::string_view to_string(LogBase base) {
  switch (base) {
    case LogBase::e: return "e";
    case LogBase::two: return "2";
    case LogBase::ten: return "10";
  }
  return "?";
}

Task parse_task(std::string_view text) {
  if (text == "classify") return Task::classify;
  if (text == "contrast") return Task::contrast;
  if (text == "long_classify" || text == "long") return Task::long_classify;
  throw ConfigError("unknown task '" + std::string(text) + "'");
}

DatasetKind parse_dataset(std::string_view text) {
  if (text == "shapes") return DatasetKind::shapes;
  if (text == "pairs") return DatasetKind::pairs;
  if (text == "longvideo") return DatasetKind::longvideo;
  throw ConfigError("unknown dataset '" + std::string(text) + "'");
}

LogBase parse_log_base(std::string_view text) {
  if (text == "e") return LogBase::e;
  if (text == "2") return LogBase::two;
  if (text == "10") return LogBase::ten;
  throw ConfigError("unknown log_base '" + std::string(text) + "' (expected e, 2 or 10)");
}

void TurboConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (enc_depth == 0 || enc_dim == 0 || enc_heads == 0) fail("encoder extents must be positive");
  if (enc_dim % enc_heads != 0) fail("enc_dim must be divisible by enc_heads");
  if (dec_dim == 0 || dec_heads == 0) fail("decoder width and heads must be positive");
  if (dec_dim % dec_heads != 0) fail("dec_dim must be divisible by dec_heads");
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) fail("mask_ratio must lie in [0, 1)");
  if (!(recon_ratio >= 0.0 && recon_ratio <= mask_ratio)) {
    fail("recon_ratio must satisfy 0 <= r <= m");
  }
  if (task != Task::contrast && num_classes < 2) fail("num_classes must be >= 2");
  if (task == Task::contrast && batch_size < 2) {
    fail("contrastive training needs batch_size >= 2 for in-batch negatives");
  }
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(temperature > 0.0)) fail("temperature must be positive");
  if (!(base_lr >= 0.0) || !(min_lr >= 0.0)) fail("learning rates must be non-negative");
  if (!(epochs > 0.0)) fail("epochs must be positive");
  if (!(warmup_epochs >= 0.0) || warmup_epochs > epochs) fail("warmup_epochs must lie in [0, epochs]");
  if (!(infer_mask >= 0.0 && infer_mask < 1.0)) fail("infer_mask must lie in [0, 1)");
  if (proj_dim == 0) fail("proj_dim must be positive");
  if (task == Task::long_classify && dataset != DatasetKind::longvideo) {
    fail("long_classify needs dataset = longvideo");
  }
  if (task == Task::contrast && dataset != DatasetKind::pairs) {
    fail("contrast needs dataset = pairs");
  }
  if (task == Task::classify && dataset != DatasetKind::shapes) {
    fail("classify needs dataset = shapes");
  }
}

TurboConfig toy_preset(Task task) {
  TurboConfig c;
  c.task = task;
  switch (task) {
    case Task::classify:
      c.dataset = DatasetKind::shapes;
      break;
    case Task::contrast:
      c.dataset = DatasetKind::pairs;
      c.base_lr = 1e-3;
      c.batch_size = 16;
      break;
    case Task::long_classify:
      return long_preset(16);
  }
  return c;
}

TurboConfig reference_preset() {
  TurboConfig c;
  c.geometry = PatchGeometry::make(16, 224, 224, 2, 16, 16);
  c.enc_depth = 12;
  c.enc_dim = 768;
  c.enc_heads = 12;
  c.dec_depth = 8;
  c.dec_dim = 512;
  c.dec_heads = 8;
  c.num_classes = 101;
  c.proj_dim = 256;
  c.batch_size = 16;
  c.epochs = 100;
  c.warmup_epochs = 10;
  c.base_lr = 1e-3;
  return c;
}

TurboConfig calibration_preset() {
  TurboConfig c = reference_preset();
  c.dec_depth = 4;
  c.dec_dim = 384;
  c.dec_heads = 6;
  return c;
}

TurboConfig long_preset(std::size_t frames) {
  TurboConfig c;
  c.task = Task::long_classify;
  c.dataset = DatasetKind::longvideo;
  c.geometry = PatchGeometry::make(frames, 32, 32, 2, 8, 8);
  c.num_classes = 8;
  c.batch_size = 16;
  c.base_lr = 1e-3;
  c.epochs = 20;
  c.warmup_epochs = 2;
  // Sized so three seeds of two presets train in well under half an hour.
  c.train_size = 800;
  c.test_size = 160;
  switch (frames) {
    case 16: c.mask_ratio = 0.5; c.recon_ratio = 0.5; break;
    case 32: c.mask_ratio = 0.75; c.recon_ratio = 0.25; break;
    case 64: c.mask_ratio = 0.875; c.recon_ratio = 0.125; break;
    default: throw ConfigError("long presets exist for 16, 32 and 64 frames");
  }
  return c;
}

}  // namespace turbo
