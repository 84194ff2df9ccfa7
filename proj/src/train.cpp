// SPDX-License-Identifier: Apache-2.0
#include "turbo/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "turbo/cost_model.hpp"
#include "turbo/errors.hpp"
#include "turbo/objectives.hpp"
#include "turbo/partition.hpp"

namespace turbo {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Stream tags for hash_seed, so that the different random streams of a run
// never coincide.
constexpr std::uint64_t kOrderTag = 0x6F72646572ULL;   // "order"
constexpr std::uint64_t kFramesTag = 0x6672616D65ULL;  // "frame"
constexpr std::uint64_t kEvalTag = 0x6576616CULL;      // "eval"
constexpr std::uint64_t kCropTag = 0x63726F70ULL;      // "crop"

struct Batch {
  Tensor patches;                   // [B, n, P]
  std::vector<std::size_t> labels;  // classification tasks
  Tensor text;                      // [B, text_dim], contrast only
};

using BatchFn = std::function<Batch(const std::vector<std::size_t>& ids, std::size_t epoch)>;

/// Copies the patch rows of several clips into one [B, n, P] tensor.
Tensor stack_patches(const std::vector<VideoFrames>& clips, const PatchGeometry& geom) {
  const std::size_t n = geom.num_tokens();
  const std::size_t p = geom.patch_dim();
  std::vector<float> data(clips.size() * n * p);
  for (std::size_t b = 0; b < clips.size(); ++b) {
    const Tensor rows = patchify(clips[b], geom);
    std::copy(rows.data().begin(), rows.data().end(), data.begin() + b * n * p);
  }
  return Tensor::from({clips.size(), n, p}, std::move(data));
}

/// Pre-patchified rows of a clip split, so batches are plain copies.
struct PatchCache {
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<float> rows;

  PatchCache(const std::vector<VideoClip>& clips, const PatchGeometry& geom)
      : n(geom.num_tokens()), p(geom.patch_dim()), rows(clips.size() * n * p) {
    for (std::size_t i = 0; i < clips.size(); ++i) {
      if (clips[i].frames.frames != geom.frames || clips[i].frames.height != geom.height ||
          clips[i].frames.width != geom.width) {
        throw GeometryError("clip " + std::to_string(i) + " does not match the model geometry");
      }
      const Tensor t = patchify(clips[i].frames, geom);
      std::copy(t.data().begin(), t.data().end(), rows.begin() + i * n * p);
    }
  }

  Tensor gather(const std::vector<std::size_t>& ids) const {
    std::vector<float> out(ids.size() * n * p);
    for (std::size_t b = 0; b < ids.size(); ++b) {
      std::copy_n(rows.begin() + ids[b] * n * p, n * p, out.begin() + b * n * p);
    }
    return Tensor::from({ids.size(), n, p}, std::move(out));
  }
};

std::size_t argmax(std::span<const float> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

Tensor cls_features(const TurboNet<float>& net, const Tensor& patches,
                    const std::vector<PartitionPlan>& plans) {
  auto encoded = net.encoder_forward(net.embed_visible(patches, plans));
  return reshape(narrow(encoded, 1, 0, 1), {plans.size(), net.config().enc_dim});
}

std::vector<PartitionPlan> eval_plans(std::size_t batch, std::size_t n, double infer_mask,
                                      const std::function<std::uint64_t(std::size_t)>& seed_of) {
  if (infer_mask >= 1.0) throw ConfigError("inference mask ratio must be below 1");
  std::vector<PartitionPlan> plans;
  plans.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    plans.push_back(make_partition(n, infer_mask, 0.0, seed_of(b)));
  }
  return plans;
}

Tensor text_batch(const TextEmbedder& text, const std::vector<const std::vector<std::size_t>*>& captions) {
  const std::size_t d = text.dim();
  std::vector<float> out(captions.size() * d);
  for (std::size_t b = 0; b < captions.size(); ++b) {
    const auto e = text.embed(*captions[b]);
    std::copy(e.begin(), e.end(), out.begin() + b * d);
  }
  return Tensor::from({captions.size(), d}, std::move(out));
}

/// Number of row i whose best column is i in S = a b^T.
std::size_t diagonal_hits(const Tensor& a, const Tensor& b) {
  NoGradGuard guard;
  const Tensor s = matmul(a, transpose(b));
  const std::size_t rows = s.dim(0);
  const std::size_t cols = s.dim(1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (argmax(s.data().subspan(i * cols, cols)) == i) ++hits;
  }
  return hits;
}

VideoFrames render_long_crop(const LongVideo& video, std::size_t n_frames, Rng& rng) {
  return video.render(sample_long_video_frames(video.num_frames(), n_frames, rng));
}

TrainResult run_loop(ModelState& state, std::size_t num_train, const BatchFn& make_batch,
                     const TrainHooks& hooks) {
  const TurboConfig& cfg = state.config;
  TurboNet<float>& net = *state.net;
  const Schedule schedule = make_schedule(cfg, num_train);
  const std::size_t spe = schedule.steps_per_epoch;
  const std::size_t total = schedule.total_steps();
  const std::size_t stop = hooks.stop_at_step ? std::min(hooks.stop_at_step, total) : total;
  const std::size_t n = cfg.geometry.num_tokens();
  const std::size_t bsz = cfg.batch_size;
  const double flops_gf =
      flops_estimate(cfg, cfg.mask_ratio, cfg.recon_ratio).total_gflops * static_cast<double>(bsz);
  const LossWeights weights{cfg.task == Task::contrast ? 0.0 : lambda_ce(cfg.num_classes, cfg.log_base),
                            cfg.task == Task::contrast ? lambda_nce(bsz, cfg.log_base) : 0.0};
  // Fail on a bad ratio before any work happens.
  (void)partition_sizes(n, cfg.mask_ratio, cfg.recon_ratio);

  TrainResult result;
  const auto run_start = Clock::now();
  std::vector<std::size_t> order;
  std::size_t order_epoch = static_cast<std::size_t>(-1);
  std::size_t epoch_correct = 0;
  std::size_t epoch_seen = 0;
  double epoch_loss = 0.0;
  double step_ms_total = 0.0;

  while (state.step < stop) {
    const std::size_t epoch = state.step / spe;
    const std::size_t pos = state.step % spe;
    if (epoch != order_epoch) {
      order.resize(num_train);
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng rng(hash_seed({cfg.seed, kOrderTag, epoch}));
      rng.shuffle(std::span(order));
      order_epoch = epoch;
      epoch_correct = epoch_seen = 0;
      epoch_loss = 0.0;
    }
    const std::vector<std::size_t> ids(order.begin() + pos * bsz, order.begin() + (pos + 1) * bsz);
    const Batch batch = make_batch(ids, epoch);
    std::vector<PartitionPlan> plans;
    plans.reserve(bsz);
    for (std::size_t id : ids) {
      plans.push_back(make_partition(n, cfg.mask_ratio, cfg.recon_ratio,
                                     partition_seed(cfg.seed, epoch, id)));
    }

    const auto t0 = Clock::now();
    auto out = net.forward(batch.patches, plans);
    LossParts<float> parts;
    if (out.predicted.defined()) parts.pmae = pmae_loss(out.predicted, out.targets, cfg.norm_pix_loss);
    Tensor logits;
    Tensor zv;
    Tensor zt;
    if (cfg.task == Task::contrast) {
      zv = net.project_visual(out.z_cls);
      zt = net.project_text(batch.text);
      parts.nce = info_nce(zv, zt, static_cast<float>(cfg.temperature));
    } else {
      logits = net.classify_head(out.z_cls);
      parts.ce = ce_loss(logits, batch.labels);
    }
    LossBundle<float> loss = combine(cfg.task, parts, weights);
    const double total_loss = loss.total.item();
    if (!std::isfinite(total_loss)) {
      throw NumericalError("non-finite loss at step " + std::to_string(state.step));
    }
    backward(loss.total);
    if (cfg.clip_grad > 0.0) clip_grad_norm(net.parameters(), cfg.clip_grad);
    const double lr = lr_at(schedule, state.step);
    adamw_step(net.parameters(), state.optim, lr);
    net.zero_grad();
    const double step_ms = ms_since(t0);
    step_ms_total += step_ms;

    if (cfg.task == Task::contrast) {
      epoch_correct += diagonal_hits(zv, zt);
    } else {
      const std::size_t classes = logits.dim(1);
      for (std::size_t b = 0; b < bsz; ++b) {
        if (argmax(logits.data().subspan(b * classes, classes)) == batch.labels[b]) ++epoch_correct;
      }
    }
    epoch_seen += bsz;
    epoch_loss += total_loss;

    if (hooks.log) {
      StepMetrics m;
      m.step = state.step;
      m.epoch = epoch;
      m.task = cfg.task;
      m.loss_total = total_loss;
      if (parts.ce) m.loss_ce = loss.ce;
      if (parts.nce) m.loss_nce = loss.nce;
      m.loss_pmae = loss.pmae;
      m.lr = lr;
      m.flops_gf = flops_gf;
      m.wall_ms = step_ms;
      m.m = cfg.mask_ratio;
      m.r = cfg.recon_ratio;
      hooks.log->write_step(m);
    }
    result.losses.push_back(total_loss);
    ++result.steps;
    ++state.step;
    result.train_accuracy = static_cast<double>(epoch_correct) / static_cast<double>(epoch_seen);

    if (hooks.progress && (state.step % spe == 0 || state.step == stop)) {
      std::fprintf(stderr, "[%s] epoch %zu step %zu loss %.4f acc %.3f (%.1f ms/step)\n",
                   std::string(to_string(cfg.task)).c_str(), epoch, state.step,
                   epoch_loss / static_cast<double>(pos + 1), result.train_accuracy,
                   step_ms_total / static_cast<double>(result.steps));
    }
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 &&
        state.step != stop) {
      hooks.on_checkpoint(state);
    }
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(state);
  result.mean_step_ms = result.steps ? step_ms_total / static_cast<double>(result.steps) : 0.0;
  result.wall_seconds = std::chrono::duration<double>(Clock::now() - run_start).count();
  return result;
}

void require_task(const ModelState& state, Task task) {
  if (state.config.task != task) {
    throw ConfigError("model state is configured for task '" +
                      std::string(to_string(state.config.task)) + "', not '" +
                      std::string(to_string(task)) + "'");
  }
}

}  // namespace

ModelState ModelState::fresh(const TurboConfig& config) {
  config.validate();
  ModelState s;
  s.config = config;
  s.net = std::make_shared<TurboNet<float>>(config, config.seed);
  AdamWConfig hyper;
  hyper.weight_decay = config.weight_decay;
  s.optim = OptimState::for_params(s.net->parameters(), hyper);
  return s;
}

std::size_t steps_per_epoch(const TurboConfig& config, std::size_t train_samples) {
  if (train_samples < config.batch_size) {
    throw ConfigError("training split has " + std::to_string(train_samples) +
                      " samples, fewer than one batch of " + std::to_string(config.batch_size));
  }
  return train_samples / config.batch_size;
}

Schedule make_schedule(const TurboConfig& config, std::size_t train_samples) {
  Schedule s;
  s.base_lr = config.base_lr;
  s.min_lr = config.min_lr;
  s.warmup_epochs = config.warmup_epochs;
  s.total_epochs = config.epochs;
  s.steps_per_epoch = steps_per_epoch(config, train_samples);
  return s;
}

TrainResult train_classify(ModelState& state, const ClipDataset& data, const TrainHooks& hooks) {
  require_task(state, Task::classify);
  const PatchCache cache(data.train, state.config.geometry);
  BatchFn make = [&](const std::vector<std::size_t>& ids, std::size_t) {
    Batch b;
    b.patches = cache.gather(ids);
    for (std::size_t id : ids) b.labels.push_back(data.train[id].label);
    return b;
  };
  return run_loop(state, data.train.size(), make, hooks);
}

TrainResult train_contrast(ModelState& state, const ClipDataset& data, const TextEmbedder& text,
                           const TrainHooks& hooks) {
  require_task(state, Task::contrast);
  if (text.dim() != state.config.text_dim) {
    throw ConfigError("text embedder width " + std::to_string(text.dim()) +
                      " does not match text_dim " + std::to_string(state.config.text_dim));
  }
  for (const auto& clip : data.train) {
    if (clip.caption.empty()) throw DataError("contrastive training needs captioned clips");
  }
  const PatchCache cache(data.train, state.config.geometry);
  BatchFn make = [&](const std::vector<std::size_t>& ids, std::size_t) {
    Batch b;
    b.patches = cache.gather(ids);
    std::vector<const std::vector<std::size_t>*> caps;
    for (std::size_t id : ids) caps.push_back(&data.train[id].caption);
    b.text = text_batch(text, caps);
    return b;
  };
  return run_loop(state, data.train.size(), make, hooks);
}

TrainResult train_long(ModelState& state, const LongVideoDataset& data, const TrainHooks& hooks) {
  require_task(state, Task::long_classify);
  const TurboConfig& cfg = state.config;
  BatchFn make = [&](const std::vector<std::size_t>& ids, std::size_t epoch) {
    Batch b;
    std::vector<VideoFrames> clips;
    for (std::size_t id : ids) {
      Rng rng(hash_seed({cfg.seed, kFramesTag, epoch, id}));
      clips.push_back(render_long_crop(data.train[id], cfg.geometry.frames, rng));
      b.labels.push_back(data.train[id].activity);
    }
    b.patches = stack_patches(clips, cfg.geometry);
    return b;
  };
  return run_loop(state, data.train.size(), make, hooks);
}

// ---------------------------------------------------------------------------
// Evaluation

std::uint64_t eval_mask_seed(std::uint64_t seed, std::size_t sample_index) {
  return hash_seed({seed, kEvalTag, sample_index});
}

std::vector<float> infer_classify(const TurboNet<float>& net, const VideoFrames& clip,
                                  double infer_mask, std::uint64_t mask_seed) {
  NoGradGuard guard;
  const PatchGeometry geom = net.config().geometry.with_frames(clip.frames);
  const Tensor patches = stack_patches({clip}, geom);
  const auto plans = eval_plans(1, geom.num_tokens(), infer_mask, [&](std::size_t) { return mask_seed; });
  const Tensor probs = softmax(net.classify_head(cls_features(net, patches, plans)), 1);
  return {probs.data().begin(), probs.data().end()};
}

EvalReport evaluate_classify(const TurboNet<float>& net, const std::vector<VideoClip>& clips,
                             double infer_mask, std::uint64_t seed) {
  if (clips.empty()) throw DataError("empty evaluation split");
  NoGradGuard guard;
  const auto t0 = Clock::now();
  const PatchGeometry& geom = net.config().geometry;
  const PatchCache cache(clips, geom);
  const std::size_t chunk = 50;
  std::size_t correct = 0;
  double nll = 0.0;
  for (std::size_t start = 0; start < clips.size(); start += chunk) {
    const std::size_t count = std::min(chunk, clips.size() - start);
    std::vector<std::size_t> ids(count);
    std::iota(ids.begin(), ids.end(), start);
    const auto plans = eval_plans(count, geom.num_tokens(), infer_mask,
                                  [&](std::size_t b) { return eval_mask_seed(seed, start + b); });
    const Tensor probs = softmax(net.classify_head(cls_features(net, cache.gather(ids), plans)), 1);
    const std::size_t classes = probs.dim(1);
    for (std::size_t b = 0; b < count; ++b) {
      const auto row = probs.data().subspan(b * classes, classes);
      const std::size_t label = clips[start + b].label;
      if (argmax(row) == label) ++correct;
      nll -= std::log(std::max(static_cast<double>(row[label]), 1e-30));
    }
  }
  EvalReport r;
  r.task = Task::classify;
  r.metric_name = "accuracy";
  r.samples = clips.size();
  r.value = static_cast<double>(correct) / static_cast<double>(clips.size());
  r.mean_loss = nll / static_cast<double>(clips.size());
  r.flops_per_step = flops_estimate(net.config(), infer_mask, 0.0).total_gflops;
  r.wall_seconds = std::max(1e-9, std::chrono::duration<double>(Clock::now() - t0).count());
  return r;
}

EvalReport evaluate_retrieval(const TurboNet<float>& net, const std::vector<VideoClip>& clips,
                              const TextEmbedder& text, std::size_t batch, std::uint64_t seed,
                              double infer_mask) {
  if (batch < 2) throw ConfigError("retrieval needs batches of at least 2");
  if (clips.size() < batch) throw DataError("evaluation split smaller than one retrieval batch");
  NoGradGuard guard;
  const auto t0 = Clock::now();
  const PatchGeometry& geom = net.config().geometry;
  const PatchCache cache(clips, geom);
  std::size_t hits = 0;
  std::size_t seen = 0;
  double loss = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start + batch <= clips.size(); start += batch) {
    std::vector<std::size_t> ids(batch);
    std::iota(ids.begin(), ids.end(), start);
    const auto plans = eval_plans(batch, geom.num_tokens(), infer_mask,
                                  [&](std::size_t b) { return eval_mask_seed(seed, start + b); });
    const Tensor zv = net.project_visual(cls_features(net, cache.gather(ids), plans));
    std::vector<const std::vector<std::size_t>*> caps;
    for (std::size_t id : ids) caps.push_back(&clips[id].caption);
    const Tensor zt = net.project_text(text_batch(text, caps));
    hits += diagonal_hits(zv, zt);
    seen += batch;
    loss += info_nce(zv, zt, static_cast<float>(net.config().temperature)).item();
    ++batches;
  }
  EvalReport r;
  r.task = Task::contrast;
  r.metric_name = "retrieval_top1";
  r.samples = seen;
  r.value = static_cast<double>(hits) / static_cast<double>(seen);
  r.mean_loss = loss / static_cast<double>(batches);
  r.flops_per_step = flops_estimate(net.config(), infer_mask, 0.0).total_gflops;
  r.wall_seconds = std::max(1e-9, std::chrono::duration<double>(Clock::now() - t0).count());
  return r;
}

std::vector<float> infer_long_multicrop(const TurboNet<float>& net, const LongVideo& video,
                                        std::size_t n_frames, std::size_t repeats,
                                        std::uint64_t seed, double infer_mask) {
  if (repeats == 0) throw ConfigError("multicrop needs at least one repeat");
  NoGradGuard guard;
  const PatchGeometry geom = net.config().geometry.with_frames(n_frames);
  std::vector<VideoFrames> crops;
  for (std::size_t k = 0; k < repeats; ++k) {
    Rng rng(hash_seed({seed, kCropTag, k}));
    crops.push_back(render_long_crop(video, n_frames, rng));
  }
  const auto plans = eval_plans(repeats, geom.num_tokens(), infer_mask,
                                [&](std::size_t k) { return eval_mask_seed(seed, k); });
  const Tensor probs =
      softmax(net.classify_head(cls_features(net, stack_patches(crops, geom), plans)), 1);
  const std::size_t classes = probs.dim(1);
  std::vector<double> acc(classes, 0.0);
  for (std::size_t k = 0; k < repeats; ++k) {
    for (std::size_t c = 0; c < classes; ++c) acc[c] += probs.data()[k * classes + c];
  }
  std::vector<float> out(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    out[c] = static_cast<float>(acc[c] / static_cast<double>(repeats));
  }
  return out;
}

EvalReport evaluate_long(const TurboNet<float>& net, const std::vector<LongVideo>& videos,
                         std::size_t repeats, std::uint64_t seed, double infer_mask) {
  if (videos.empty()) throw DataError("empty evaluation split");
  const auto t0 = Clock::now();
  std::size_t correct = 0;
  double nll = 0.0;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const auto probs = infer_long_multicrop(net, videos[i], net.config().geometry.frames, repeats,
                                            hash_seed({seed, kEvalTag, i}), infer_mask);
    if (argmax(probs) == videos[i].activity) ++correct;
    nll -= std::log(std::max(static_cast<double>(probs[videos[i].activity]), 1e-30));
  }
  EvalReport r;
  r.task = Task::long_classify;
  r.metric_name = "accuracy";
  r.samples = videos.size();
  r.value = static_cast<double>(correct) / static_cast<double>(videos.size());
  r.mean_loss = nll / static_cast<double>(videos.size());
  r.flops_per_step = flops_estimate(net.config(), infer_mask, 0.0).total_gflops;
  r.wall_seconds = std::max(1e-9, std::chrono::duration<double>(Clock::now() - t0).count());
  return r;
}

std::vector<std::vector<float>> per_second_features(const TurboNet<float>& net,
                                                    const LongVideo& video, double infer_mask) {
  const std::size_t seconds = video.num_frames() / video.fps;
  if (seconds == 0) throw DataError("video shorter than one second");
  NoGradGuard guard;
  const PatchGeometry geom = net.config().geometry.with_frames(video.fps);
  std::vector<VideoFrames> clips;
  for (std::size_t s = 0; s < seconds; ++s) {
    std::vector<std::size_t> idx(video.fps);
    std::iota(idx.begin(), idx.end(), s * video.fps);
    clips.push_back(video.render(idx));
  }
  const auto plans = eval_plans(seconds, geom.num_tokens(), infer_mask,
                                [&](std::size_t s) { return eval_mask_seed(video.seed, s); });
  Tensor z = cls_features(net, stack_patches(clips, geom), plans);
  if (net.has_projections()) z = net.project_visual(z);
  const std::size_t d = z.dim(1);
  std::vector<std::vector<float>> out(seconds);
  for (std::size_t s = 0; s < seconds; ++s) {
    out[s].assign(z.data().begin() + s * d, z.data().begin() + (s + 1) * d);
  }
  return out;
}

double align_recall_at_1(const std::vector<std::vector<float>>& features,
                         const std::vector<std::vector<float>>& sentence_embeds,
                         const std::vector<Sentence>& sentences) {
  if (sentence_embeds.size() != sentences.size()) {
    throw DimensionError("one embedding per sentence required");
  }
  if (features.empty()) throw DataError("no per-second features");
  std::size_t alignable = 0;
  std::size_t hits = 0;
  for (std::size_t j = 0; j < sentences.size(); ++j) {
    if (!sentences[j].alignable) continue;
    ++alignable;
    const auto& e = sentence_embeds[j];
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < features.size(); ++k) {
      if (features[k].size() != e.size()) throw DimensionError("feature and sentence widths differ");
      double score = 0.0;
      for (std::size_t i = 0; i < e.size(); ++i) score += static_cast<double>(features[k][i]) * e[i];
      if (score > best_score) {
        best_score = score;
        best = k;
      }
    }
    const double centre = static_cast<double>(best) + 0.5;
    if (centre >= static_cast<double>(sentences[j].start_s) &&
        centre <= static_cast<double>(sentences[j].end_s)) {
      ++hits;
    }
  }
  if (alignable == 0) throw DataError("no alignable sentences to score");
  return static_cast<double>(hits) / static_cast<double>(alignable);
}

EvalReport evaluate_alignment(const TurboNet<float>& net, const TextEmbedder& text,
                              std::size_t samples, std::uint64_t seed) {
  if (!net.has_projections()) throw ConfigError("alignment needs a contrastive model");
  if (samples == 0) throw DataError("alignment needs at least one sample");
  NoGradGuard guard;
  const auto t0 = Clock::now();
  double hits = 0.0;
  std::size_t alignable = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const AlignSample sample = gen_align_sample(hash_seed({seed, kEvalTag, i}));
    const auto features = per_second_features(net, sample.video);
    std::vector<const std::vector<std::size_t>*> caps;
    for (const auto& s : sample.sentences) caps.push_back(&s.tokens);
    const Tensor zt = net.project_text(text_batch(text, caps));
    const std::size_t d = zt.dim(1);
    std::vector<std::vector<float>> embeds;
    for (std::size_t j = 0; j < caps.size(); ++j) {
      embeds.emplace_back(zt.data().begin() + j * d, zt.data().begin() + (j + 1) * d);
    }
    const std::size_t count = static_cast<std::size_t>(std::count_if(
        sample.sentences.begin(), sample.sentences.end(), [](const auto& s) { return s.alignable; }));
    hits += align_recall_at_1(features, embeds, sample.sentences) * static_cast<double>(count);
    alignable += count;
  }
  EvalReport r;
  r.task = Task::contrast;
  r.metric_name = "align_recall_at_1";
  r.samples = alignable;
  r.value = hits / static_cast<double>(alignable);
  r.wall_seconds = std::max(1e-9, std::chrono::duration<double>(Clock::now() - t0).count());
  return r;
}

}  // namespace turbo
