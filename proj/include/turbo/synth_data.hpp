// SPDX-License-Identifier: Apache-2.0
//
// Seed-addressed synthetic video data.
//
// Shapes clips: one of 4 shapes translating in one of 4 directions over 8
// frames of 32x32 RGB. The class (shape x direction) needs both appearance
// and motion to recover.
//
// Long videos: 60 s at 4 fps built from an activity recipe of 4 shape-motion
// sub-actions separated by noise-only background. Each primitive appears in
// two recipes, so a short window never pins down the activity on its own.
//
// Every generator is a pure function of its arguments.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "turbo/patch_tokens.hpp"
#include "turbo/rng.hpp"

namespace turbo {

inline constexpr std::size_t kNumShapes = 4;
inline constexpr std::size_t kNumDirections = 4;
inline constexpr std::size_t kNumShapeClasses = kNumShapes * kNumDirections;
inline constexpr std::size_t kNumActivities = 8;
inline constexpr std::size_t kRecipeLength = 4;

enum class ShapeKind : std::uint8_t { square, circle, triangle, cross };
enum class Direction : std::uint8_t { right, left, down, up };

inline ShapeKind class_shape(std::size_t class_id) {
  return static_cast<ShapeKind>(class_id / kNumDirections);
}
inline Direction class_direction(std::size_t class_id) {
  return static_cast<Direction>(class_id % kNumDirections);
}

struct ClipMeta {
  std::uint64_t seed = 0;
  double start_x = 0.0;  // shape centre in pixels at frame 0
  double start_y = 0.0;
  double velocity = 0.0;  // pixels per frame along the direction
  double intensity = 0.0;
};

struct VideoClip {
  VideoFrames frames;
  std::size_t label = 0;
  std::vector<std::size_t> caption;  // token ids; empty for plain clips
  ClipMeta meta;
};

/// 8 frames, 32x32x3, additive uniform noise of amplitude 0.05.
VideoClip gen_shapes_clip(std::size_t class_id, std::uint64_t seed);

/// Centroid (x, y) of the pixels brighter than the background in one frame.
std::array<double, 2> frame_centroid(const VideoFrames& video, std::size_t frame);

// ---------------------------------------------------------------------------
// Captions and the frozen text embedder

const std::vector<std::string>& caption_vocabulary();
std::string caption_text(const std::vector<std::size_t>& tokens);

/// "<article> <shape synonym> <verb> <direction synonym>" for the class, with
/// synonyms drawn from `seed`.
std::vector<std::size_t> gen_caption(std::size_t class_id, std::uint64_t seed);

/// Frozen bag-of-tokens embedding: a fixed random projection of the token
/// counts. Synonyms share a concept direction plus a small private offset, so
/// captions of one class land close together. Never trained.
class TextEmbedder {
 public:
  explicit TextEmbedder(std::uint64_t seed, std::size_t dim = 64);
  std::size_t dim() const { return dim_; }
  /// Mean of the token vectors.
  std::vector<float> embed(const std::vector<std::size_t>& tokens) const;
  const std::vector<float>& table() const { return table_; }

 private:
  std::size_t dim_;
  std::vector<float> table_;  // [vocab, dim]
};

// ---------------------------------------------------------------------------
// Long videos

struct Segment {
  std::size_t primitive = 0;  // shape-motion class id
  std::size_t start_s = 0;    // inclusive, whole seconds
  std::size_t end_s = 0;      // exclusive
  bool operator==(const Segment&) const = default;
};

using Recipe = std::array<std::size_t, kRecipeLength>;
const std::array<Recipe, kNumActivities>& activity_recipes();

struct LongVideo {
  std::size_t activity = 0;
  std::vector<Segment> segments;
  std::size_t fps = 4;
  std::size_t duration_s = 60;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  std::uint64_t seed = 0;

  std::size_t num_frames() const { return fps * duration_s; }
  /// Frames are rendered on demand; the same index always renders the same
  /// pixels.
  VideoFrames render(const std::vector<std::size_t>& frame_indices) const;
  VideoFrames render_all() const;
  /// Primitive shown at a frame, or -1 for background.
  int primitive_at(std::size_t frame) const;
};

LongVideo gen_long_video(std::size_t activity_id, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Frame sampling

/// Contiguous window of `n_frames`: random start in train mode, centred in
/// eval mode. Videos shorter than the window repeat their last frame.
std::vector<std::size_t> sample_short_clip(std::size_t video_frames, std::size_t n_frames,
                                           bool train_mode, Rng& rng);

/// Start drawn in the first 20% and end in the last 20% of the video, then n
/// indices spread uniformly in between (rounded, strictly increasing).
std::vector<std::size_t> sample_long_video_frames(std::size_t duration_frames, std::size_t n,
                                                  Rng& rng);

// ---------------------------------------------------------------------------
// Alignment samples

struct Sentence {
  std::vector<std::size_t> tokens;
  std::size_t primitive = 0;
  bool alignable = false;
  std::size_t start_s = 0;
  std::size_t end_s = 0;
};

struct AlignSample {
  LongVideo video;
  std::vector<Sentence> sentences;
};

/// One caption per sub-action with its segment, plus one caption for a
/// primitive absent from the video (unalignable).
AlignSample gen_align_sample(std::uint64_t seed);

// ---------------------------------------------------------------------------
// Datasets

/// Sample ids form contiguous ranges per split (train, then val, then test),
/// so the splits are disjoint by construction. Sample id i has label
/// i mod num_classes and seed hash(dataset_seed, i).
struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  /// 70/10/20 split of a total.
  static SplitSizes from_total(std::size_t total);
};

std::uint64_t sample_seed(std::uint64_t dataset_seed, std::size_t sample_id);

struct ClipDataset {
  std::vector<VideoClip> train;
  std::vector<VideoClip> val;
  std::vector<VideoClip> test;
};

ClipDataset make_shapes_dataset(const SplitSizes& sizes, std::uint64_t dataset_seed,
                                bool with_captions);

struct LongVideoDataset {
  std::vector<LongVideo> train;
  std::vector<LongVideo> val;
  std::vector<LongVideo> test;
};

LongVideoDataset make_long_dataset(const SplitSizes& sizes, std::uint64_t dataset_seed);

// ---------------------------------------------------------------------------
// On-disk cache: a JSON header line, then raw little-endian float32 frames.

void write_clip_cache(const std::filesystem::path& path, const VideoClip& clip);
VideoClip read_clip_cache(const std::filesystem::path& path);

}  // namespace turbo
