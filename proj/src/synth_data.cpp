// SPDX-License-Identifier: Apache-2.0
#include "turbo/synth_data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "turbo/errors.hpp"

namespace turbo {

namespace {

constexpr std::size_t kClipFrames = 8;
constexpr std::size_t kSide = 32;
constexpr std::size_t kChannels = 3;
constexpr double kHalfExtent = 6.0;
constexpr double kVelocity = 1.0;
constexpr double kBackground = 0.1;
constexpr double kNoise = 0.05;
constexpr std::size_t kSegmentSeconds = 4;

bool inside_shape(ShapeKind shape, double dx, double dy, double half) {
  switch (shape) {
    case ShapeKind::square:
      return std::abs(dx) <= half && std::abs(dy) <= half;
    case ShapeKind::circle:
      return dx * dx + dy * dy <= half * half;
    case ShapeKind::triangle:
      // Apex up, base at the bottom.
      return dy >= -half && dy <= half && std::abs(dx) <= (dy + half) * 0.5;
    case ShapeKind::cross: {
      const double arm = half / 3.0;
      return (std::abs(dx) <= arm && std::abs(dy) <= half) ||
             (std::abs(dy) <= arm && std::abs(dx) <= half);
    }
  }
  return false;
}

std::array<double, 2> direction_vector(Direction dir) {
  switch (dir) {
    case Direction::right: return {1.0, 0.0};
    case Direction::left: return {-1.0, 0.0};
    case Direction::down: return {0.0, 1.0};
    case Direction::up: return {0.0, -1.0};
  }
  return {0.0, 0.0};
}

/// Fills one frame with background + optional shape + noise.
void render_frame(VideoFrames& video, std::size_t f, bool has_shape, ShapeKind shape, double cx,
                  double cy, double intensity, Rng& noise) {
  for (std::size_t y = 0; y < video.height; ++y) {
    for (std::size_t x = 0; x < video.width; ++x) {
      const double px = static_cast<double>(x) + 0.5 - cx;
      const double py = static_cast<double>(y) + 0.5 - cy;
      const double base = has_shape && inside_shape(shape, px, py, kHalfExtent) ? intensity
                                                                                : kBackground;
      for (std::size_t c = 0; c < video.channels; ++c) {
        const double v = base + noise.uniform(-kNoise, kNoise);
        video.at(f, y, x, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
}

/// Start position so the whole trajectory of `travel` pixels stays inside the
/// frame.
// The start box is the same for every direction and leaves room to travel
// either way, so frame 0 carries no hint of the motion.
std::array<double, 2> draw_start(double travel, Rng& rng) {
  const double lo = kHalfExtent + travel;
  const double hi = static_cast<double>(kSide) - kHalfExtent - travel;
  const double x = rng.uniform(lo, hi);
  const double y = rng.uniform(lo, hi);
  return {x, y};
}

// Long-video segments last seconds, so they travel further; the start only
// has to keep the whole path on screen.
std::array<double, 2> draw_path_start(Direction dir, double travel, Rng& rng) {
  const double lo = kHalfExtent;
  const double hi = static_cast<double>(kSide) - kHalfExtent;
  const auto v = direction_vector(dir);
  auto along = [&](double component) {
    if (component > 0) return rng.uniform(lo, hi - travel);
    if (component < 0) return rng.uniform(lo + travel, hi);
    return rng.uniform(lo, hi);
  };
  const double x = along(v[0]);
  const double y = along(v[1]);
  return {x, y};
}

}  // namespace

VideoClip gen_shapes_clip(std::size_t class_id, std::uint64_t seed) {
  if (class_id >= kNumShapeClasses) {
    throw DataError("shape class " + std::to_string(class_id) + " out of range");
  }
  Rng rng(hash_seed({seed, 0x636C6970ULL /* "clip" */}));
  const ShapeKind shape = class_shape(class_id);
  const Direction dir = class_direction(class_id);
  const double travel = kVelocity * static_cast<double>(kClipFrames - 1);

  VideoClip clip;
  clip.label = class_id;
  clip.meta.seed = seed;
  const auto start = draw_start(travel, rng);
  clip.meta.start_x = start[0];
  clip.meta.start_y = start[1];
  clip.meta.velocity = kVelocity;
  clip.meta.intensity = rng.uniform(0.7, 1.0);
  clip.frames = VideoFrames(kClipFrames, kSide, kSide, kChannels);
  const auto v = direction_vector(dir);
  for (std::size_t f = 0; f < kClipFrames; ++f) {
    const double t = static_cast<double>(f) * kVelocity;
    render_frame(clip.frames, f, true, shape, start[0] + v[0] * t, start[1] + v[1] * t,
                 clip.meta.intensity, rng);
  }
  return clip;
}

std::array<double, 2> frame_centroid(const VideoFrames& video, std::size_t frame) {
  double sx = 0.0;
  double sy = 0.0;
  double mass = 0.0;
  for (std::size_t y = 0; y < video.height; ++y) {
    for (std::size_t x = 0; x < video.width; ++x) {
      double v = 0.0;
      for (std::size_t c = 0; c < video.channels; ++c) v += video.at(frame, y, x, c);
      v /= static_cast<double>(video.channels);
      if (v > 0.4) {
        sx += static_cast<double>(x) * v;
        sy += static_cast<double>(y) * v;
        mass += v;
      }
    }
  }
  if (mass == 0.0) return {-1.0, -1.0};
  return {sx / mass, sy / mass};
}

// ---------------------------------------------------------------------------
// Captions

namespace {

// Concept groups: each shape, each direction, the verb and the article.
struct VocabEntry {
  const char* word;
  std::size_t concept_id;
};

constexpr std::size_t kConceptVerb = kNumShapes + kNumDirections;
constexpr std::size_t kConceptArticle = kConceptVerb + 1;
constexpr std::size_t kNumConcepts = kConceptArticle + 1;

const std::vector<VocabEntry>& vocab_entries() {
  static const std::vector<VocabEntry> entries = {
      {"square", 0},   {"box", 0},       {"block", 0},
      {"circle", 1},   {"disc", 1},      {"ring", 1},
      {"triangle", 2}, {"wedge", 2},     {"pyramid", 2},
      {"cross", 3},    {"plus", 3},      {"x-mark", 3},
      {"right", 4},    {"rightward", 4}, {"east", 4},
      {"left", 5},     {"leftward", 5},  {"west", 5},
      {"down", 6},     {"downward", 6},  {"south", 6},
      {"up", 7},       {"upward", 7},    {"north", 7},
      {"moving", kConceptVerb},    {"going", kConceptVerb},
      {"a", kConceptArticle},      {"the", kConceptArticle},
  };
  return entries;
}

std::vector<std::size_t> tokens_of_concept(std::size_t concept_id) {
  std::vector<std::size_t> out;
  const auto& entries = vocab_entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].concept_id == concept_id) out.push_back(i);
  }
  return out;
}

}  // namespace

const std::vector<std::string>& caption_vocabulary() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> w;
    for (const auto& e : vocab_entries()) w.emplace_back(e.word);
    return w;
  }();
  return words;
}

std::string caption_text(const std::vector<std::size_t>& tokens) {
  std::string out;
  for (std::size_t t : tokens) {
    if (!out.empty()) out += ' ';
    out += caption_vocabulary().at(t);
  }
  return out;
}

std::vector<std::size_t> gen_caption(std::size_t class_id, std::uint64_t seed) {
  if (class_id >= kNumShapeClasses) {
    throw DataError("caption class " + std::to_string(class_id) + " out of range");
  }
  Rng rng(hash_seed({seed, 0x63617074ULL /* "capt" */}));
  auto choose = [&](std::size_t concept_id) {
    const auto options = tokens_of_concept(concept_id);
    return options[rng.below(options.size())];
  };
  const auto shape_concept = static_cast<std::size_t>(class_shape(class_id));
  const auto dir_concept = kNumShapes + static_cast<std::size_t>(class_direction(class_id));
  return {choose(kConceptArticle), choose(shape_concept), choose(kConceptVerb),
          choose(dir_concept)};
}

TextEmbedder::TextEmbedder(std::uint64_t seed, std::size_t dim) : dim_(dim) {
  Rng rng(hash_seed({seed, 0x74657874ULL /* "text" */}));
  const double unit = 1.0 / std::sqrt(static_cast<double>(dim));
  std::vector<double> concepts(kNumConcepts * dim);
  for (double& c : concepts) c = rng.normal() * unit;
  const auto& entries = vocab_entries();
  table_.resize(entries.size() * dim);
  for (std::size_t t = 0; t < entries.size(); ++t) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double offset = 0.3 * rng.normal() * unit;
      table_[t * dim + i] = static_cast<float>(concepts[entries[t].concept_id * dim + i] + offset);
    }
  }
}

std::vector<float> TextEmbedder::embed(const std::vector<std::size_t>& tokens) const {
  std::vector<float> out(dim_, 0.0f);
  if (tokens.empty()) return out;
  const std::size_t vocab = table_.size() / dim_;
  for (std::size_t t : tokens) {
    if (t >= vocab) throw DataError("token id " + std::to_string(t) + " out of vocabulary");
    for (std::size_t i = 0; i < dim_; ++i) out[i] += table_[t * dim_ + i];
  }
  const float inv = 1.0f / static_cast<float>(tokens.size());
  for (float& v : out) v *= inv;
  return out;
}

// ---------------------------------------------------------------------------
// Long videos

const std::array<Recipe, kNumActivities>& activity_recipes() {
  // Rows of a 4x4 grid of primitives, then its columns: every primitive is in
  // exactly two recipes, and any two recipes differ in at least 3 positions.
  static const std::array<Recipe, kNumActivities> recipes = {{
      {0, 1, 2, 3},
      {4, 5, 6, 7},
      {8, 9, 10, 11},
      {12, 13, 14, 15},
      {0, 4, 8, 12},
      {1, 5, 9, 13},
      {2, 6, 10, 14},
      {3, 7, 11, 15},
  }};
  return recipes;
}

LongVideo gen_long_video(std::size_t activity_id, std::uint64_t seed) {
  if (activity_id >= kNumActivities) {
    throw DataError("activity " + std::to_string(activity_id) + " out of range");
  }
  Rng rng(hash_seed({seed, 0x6C6F6E67ULL /* "long" */}));
  LongVideo video;
  video.activity = activity_id;
  video.seed = seed;
  // Each sub-action lasts 4 s (16 frames). A 16-frame sampling strides 9.6
  // to 16 frames, so it usually lands once per segment and reads the shape
  // but not the direction; a 32-frame sampling lands two or three times.
  // Inner gaps of 3-5 s keep any 2 s window on at most one sub-action, and
  // everything sits in the middle 60% of the minute, which every long-video
  // sampling covers.
  std::array<std::size_t, kRecipeLength> lengths{};
  std::array<std::size_t, kRecipeLength - 1> gaps{};
  std::size_t used = 0;
  for (auto& l : lengths) used += (l = kSegmentSeconds);
  for (auto& g : gaps) used += (g = 3 + rng.below(3));
  const std::size_t window_start = video.duration_s / 5;
  const std::size_t window = video.duration_s - 2 * window_start;
  const std::size_t lead = window_start + rng.below(window - used + 1);
  std::size_t t = lead;
  const Recipe& recipe = activity_recipes()[activity_id];
  for (std::size_t i = 0; i < kRecipeLength; ++i) {
    video.segments.push_back({recipe[i], t, t + lengths[i]});
    t += lengths[i] + (i + 1 < kRecipeLength ? gaps[i] : 0);
  }
  return video;
}

int LongVideo::primitive_at(std::size_t frame) const {
  for (const auto& s : segments) {
    if (frame >= s.start_s * fps && frame < s.end_s * fps) return static_cast<int>(s.primitive);
  }
  return -1;
}

VideoFrames LongVideo::render(const std::vector<std::size_t>& frame_indices) const {
  VideoFrames out(frame_indices.size(), height, width, channels);
  for (std::size_t k = 0; k < frame_indices.size(); ++k) {
    const std::size_t frame = frame_indices[k];
    if (frame >= num_frames()) {
      throw IndexError("frame " + std::to_string(frame) + " beyond video length " +
                       std::to_string(num_frames()));
    }
    Rng noise(hash_seed({seed, 0x6E6F6973ULL /* "nois" */, frame}));
    bool has_shape = false;
    ShapeKind shape = ShapeKind::square;
    double cx = 0.0;
    double cy = 0.0;
    double intensity = 0.0;
    for (std::size_t si = 0; si < segments.size(); ++si) {
      const Segment& s = segments[si];
      const std::size_t first = s.start_s * fps;
      const std::size_t last = s.end_s * fps;
      if (frame < first || frame >= last) continue;
      Rng motion(hash_seed({seed, 0x73656721ULL /* "seg!" */, si}));
      const Direction dir = class_direction(s.primitive);
      const double travel = 14.0;
      const auto start = draw_path_start(dir, travel, motion);
      intensity = motion.uniform(0.7, 1.0);
      const double progress =
          static_cast<double>(frame - first) / static_cast<double>(std::max<std::size_t>(1, last - first - 1));
      const auto v = direction_vector(dir);
      cx = start[0] + v[0] * travel * progress;
      cy = start[1] + v[1] * travel * progress;
      shape = class_shape(s.primitive);
      has_shape = true;
    }
    render_frame(out, k, has_shape, shape, cx, cy, intensity, noise);
  }
  return out;
}

VideoFrames LongVideo::render_all() const {
  std::vector<std::size_t> all(num_frames());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return render(all);
}

// ---------------------------------------------------------------------------
// Sampling

std::vector<std::size_t> sample_short_clip(std::size_t video_frames, std::size_t n_frames,
                                           bool train_mode, Rng& rng) {
  if (video_frames == 0 || n_frames == 0) throw DataError("empty video or window");
  std::vector<std::size_t> out(n_frames);
  if (video_frames < n_frames) {
    for (std::size_t i = 0; i < n_frames; ++i) out[i] = std::min(i, video_frames - 1);
    return out;
  }
  const std::size_t slack = video_frames - n_frames;
  const std::size_t start = train_mode ? static_cast<std::size_t>(rng.below(slack + 1)) : slack / 2;
  std::iota(out.begin(), out.end(), start);
  return out;
}

std::vector<std::size_t> sample_long_video_frames(std::size_t duration_frames, std::size_t n,
                                                  Rng& rng) {
  if (n < 2) throw DataError("long-video sampling needs n >= 2");
  if (n > duration_frames) {
    throw DataError("cannot take " + std::to_string(n) + " distinct frames from " +
                    std::to_string(duration_frames));
  }
  const double dur = static_cast<double>(duration_frames);
  const double start = rng.uniform(0.0, 0.2 * dur);        // [0, 0.2 dur)
  const double end = dur - rng.uniform(0.0, 0.2 * dur);    // (0.8 dur, dur]
  const double last = static_cast<double>(duration_frames - 1);
  const double first_idx = std::floor(start);
  const double last_idx = std::min(std::ceil(end), last);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double step = (last_idx - first_idx) * static_cast<double>(i) / static_cast<double>(n - 1);
    idx[i] = static_cast<std::size_t>(first_idx + std::round(step));
  }
  // Push duplicates apart: forward pass keeps order, backward pass keeps the
  // tail inside the video.
  for (std::size_t i = 1; i < n; ++i) idx[i] = std::max(idx[i], idx[i - 1] + 1);
  if (idx[n - 1] > duration_frames - 1) {
    idx[n - 1] = duration_frames - 1;
    for (std::size_t i = n - 1; i-- > 0;) idx[i] = std::min(idx[i], idx[i + 1] - 1);
  }
  return idx;
}

// ---------------------------------------------------------------------------
// Alignment

AlignSample gen_align_sample(std::uint64_t seed) {
  Rng rng(hash_seed({seed, 0x616C676EULL /* "algn" */}));
  AlignSample sample;
  const std::size_t activity = static_cast<std::size_t>(rng.below(kNumActivities));
  sample.video = gen_long_video(activity, hash_seed({seed, 1}));
  std::set<std::size_t> present;
  for (std::size_t i = 0; i < sample.video.segments.size(); ++i) {
    const Segment& s = sample.video.segments[i];
    present.insert(s.primitive);
    Sentence sentence;
    sentence.tokens = gen_caption(s.primitive, hash_seed({seed, 2, i}));
    sentence.primitive = s.primitive;
    sentence.alignable = true;
    sentence.start_s = s.start_s;
    sentence.end_s = s.end_s;
    sample.sentences.push_back(std::move(sentence));
  }
  std::size_t distractor = static_cast<std::size_t>(rng.below(kNumShapeClasses));
  while (present.count(distractor)) distractor = (distractor + 1) % kNumShapeClasses;
  Sentence extra;
  extra.tokens = gen_caption(distractor, hash_seed({seed, 3}));
  extra.primitive = distractor;
  extra.alignable = false;
  sample.sentences.push_back(std::move(extra));
  return sample;
}

// ---------------------------------------------------------------------------
// Datasets

SplitSizes SplitSizes::from_total(std::size_t total) {
  SplitSizes s;
  s.train = total * 7 / 10;
  s.val = total / 10;
  s.test = total - s.train - s.val;
  return s;
}

std::uint64_t sample_seed(std::uint64_t dataset_seed, std::size_t sample_id) {
  return hash_seed({dataset_seed, 0x64617461ULL /* "data" */, sample_id});
}

ClipDataset make_shapes_dataset(const SplitSizes& sizes, std::uint64_t dataset_seed,
                                bool with_captions) {
  ClipDataset ds;
  std::size_t id = 0;
  auto fill = [&](std::vector<VideoClip>& split, std::size_t count) {
    split.reserve(count);
    for (std::size_t i = 0; i < count; ++i, ++id) {
      const std::uint64_t s = sample_seed(dataset_seed, id);
      VideoClip clip = gen_shapes_clip(id % kNumShapeClasses, s);
      if (with_captions) clip.caption = gen_caption(clip.label, s);
      split.push_back(std::move(clip));
    }
  };
  fill(ds.train, sizes.train);
  fill(ds.val, sizes.val);
  fill(ds.test, sizes.test);
  return ds;
}

LongVideoDataset make_long_dataset(const SplitSizes& sizes, std::uint64_t dataset_seed) {
  LongVideoDataset ds;
  std::size_t id = 0;
  auto fill = [&](std::vector<LongVideo>& split, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i, ++id) {
      split.push_back(gen_long_video(id % kNumActivities, sample_seed(dataset_seed, id)));
    }
  };
  fill(ds.train, sizes.train);
  fill(ds.val, sizes.val);
  fill(ds.test, sizes.test);
  return ds;
}

// ---------------------------------------------------------------------------
// Cache files

void write_clip_cache(const std::filesystem::path& path, const VideoClip& clip) {
  nlohmann::json header;
  const auto& f = clip.frames;
  header["shape"] = {f.frames, f.height, f.width, f.channels};
  header["dtype"] = "f32";
  header["seed"] = clip.meta.seed;
  header["label"] = clip.label;
  header["caption"] = clip.caption;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << header.dump() << '\n';
  for (float v : f.pixels) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    char bytes[4];
    std::memcpy(bytes, &bits, 4);
    out.write(bytes, 4);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

VideoClip read_clip_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad cache header in " + path.string() + ": " + e.what());
  }
  if (header.value("dtype", "") != "f32") throw DataError("unsupported cache dtype");
  const auto shape = header.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 4) throw DataError("cache shape must have 4 extents");
  VideoClip clip;
  clip.frames = VideoFrames(shape[0], shape[1], shape[2], shape[3]);
  clip.label = header.at("label").get<std::size_t>();
  clip.meta.seed = header.at("seed").get<std::uint64_t>();
  clip.caption = header.value("caption", std::vector<std::size_t>{});
  for (float& v : clip.frames.pixels) {
    char bytes[4];
    if (!in.read(bytes, 4)) throw DataError("truncated cache file " + path.string());
    std::uint32_t bits = 0;
    std::memcpy(&bits, bytes, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    v = std::bit_cast<float>(bits);
  }
  return clip;
}

}  // namespace turbo
