// SPDX-License-Identifier: Apache-2.0
//
// Training loops for the three tasks and their evaluation protocols.
//
// Every random choice in a run (init, sample order, partitions, long-video
// frame picks, eval masks) is derived from config.seed, so a (config, seed)
// pair replays bit-for-bit on one machine.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "turbo/config.hpp"
#include "turbo/metric_log.hpp"
#include "turbo/optim.hpp"
#include "turbo/synth_data.hpp"
#include "turbo/turbo_net.hpp"

namespace turbo {

struct ModelState {
  TurboConfig config;
  std::shared_ptr<TurboNet<float>> net;
  OptimState optim;
  std::size_t step = 0;  // global optimizer steps completed

  static ModelState fresh(const TurboConfig& config);
};

struct TrainHooks {
  MetricLog* log = nullptr;
  /// Stop once the global step reaches this value (0 = run the schedule).
  std::size_t stop_at_step = 0;
  /// Called every config.checkpoint_every steps and when the loop ends.
  std::function<void(const ModelState&)> on_checkpoint;
  bool progress = false;  // one stderr line per epoch
};

struct TrainResult {
  std::vector<double> losses;  // total loss per step run in this call
  std::size_t steps = 0;
  double mean_step_ms = 0.0;   // forward + backward + update, data prep excluded
  double train_accuracy = 0.0; // last epoch; in-batch retrieval for contrast
  double wall_seconds = 0.0;
};

std::size_t steps_per_epoch(const TurboConfig& config, std::size_t train_samples);
Schedule make_schedule(const TurboConfig& config, std::size_t train_samples);

TrainResult train_classify(ModelState& state, const ClipDataset& data,
                           const TrainHooks& hooks = {});
TrainResult train_contrast(ModelState& state, const ClipDataset& data,
                           const TextEmbedder& text, const TrainHooks& hooks = {});
TrainResult train_long(ModelState& state, const LongVideoDataset& data,
                       const TrainHooks& hooks = {});

struct EvalReport {
  Task task = Task::classify;
  std::string metric_name;
  double value = 0.0;
  std::size_t samples = 0;
  double mean_loss = 0.0;
  std::size_t steps = 0;
  double wall_seconds = 0.0;
  double flops_per_step = 0.0;  // forward GFLOPs per clip at the eval mask
};

/// Softmax over classes for one clip, with an eval-time mask ratio (r = 0).
/// The mask is drawn from `mask_seed`.
std::vector<float> infer_classify(const TurboNet<float>& net, const VideoFrames& clip,
                                  double infer_mask, std::uint64_t mask_seed);

/// Batched version of infer_classify over a split; the mask of sample i uses
/// eval_mask_seed(seed, i).
EvalReport evaluate_classify(const TurboNet<float>& net, const std::vector<VideoClip>& clips,
                             double infer_mask, std::uint64_t seed);
std::uint64_t eval_mask_seed(std::uint64_t seed, std::size_t sample_index);

/// Clip -> caption top-1 over consecutive in-split batches.
EvalReport evaluate_retrieval(const TurboNet<float>& net, const std::vector<VideoClip>& clips,
                              const TextEmbedder& text, std::size_t batch, std::uint64_t seed,
                              double infer_mask = 0.0);

/// Mean of the class distributions of `repeats` independent frame samplings.
std::vector<float> infer_long_multicrop(const TurboNet<float>& net, const LongVideo& video,
                                        std::size_t n_frames, std::size_t repeats,
                                        std::uint64_t seed, double infer_mask = 0.0);

EvalReport evaluate_long(const TurboNet<float>& net, const std::vector<LongVideo>& videos,
                         std::size_t repeats, std::uint64_t seed, double infer_mask = 0.0);

/// One embedding per whole second: frames [fps*s, fps*s + fps) form a clip.
/// Uses the visual projection when the model has one, else the CLS feature.
std::vector<std::vector<float>> per_second_features(const TurboNet<float>& net,
                                                    const LongVideo& video,
                                                    double infer_mask = 0.0);

/// Fraction of alignable sentences whose best-matching second k has its
/// centre k + 0.5 inside [start_s, end_s]. Unalignable sentences are skipped.
double align_recall_at_1(const std::vector<std::vector<float>>& features,
                         const std::vector<std::vector<float>>& sentence_embeds,
                         const std::vector<Sentence>& sentences);

/// Zero-shot alignment over `samples` generated videos.
EvalReport evaluate_alignment(const TurboNet<float>& net, const TextEmbedder& text,
                              std::size_t samples, std::uint64_t seed);

}  // namespace turbo
