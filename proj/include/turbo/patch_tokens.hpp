// SPDX-License-Identifier: Apache-2.0
//
// Video -> spatio-temporal patch rows -> embedded token sequence.
//
// Patch rows are ordered time-major, then height, then width. Inside a row
// values are flattened as (frame, row, column, channel).
#pragma once

#include <cstddef>
#include <vector>

#include "turbo/tensor.hpp"

namespace turbo {

/// Frames in [0, 1], stored (frame, row, column, channel) row-major.
struct VideoFrames {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<float> pixels;

  VideoFrames() = default;
  VideoFrames(std::size_t t, std::size_t h, std::size_t w, std::size_t c)
      : frames(t), height(h), width(w), channels(c), pixels(t * h * w * c, 0.0f) {}

  std::size_t index(std::size_t f, std::size_t y, std::size_t x, std::size_t c) const {
    return ((f * height + y) * width + x) * channels + c;
  }
  float& at(std::size_t f, std::size_t y, std::size_t x, std::size_t c) {
    return pixels[index(f, y, x, c)];
  }
  float at(std::size_t f, std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[index(f, y, x, c)];
  }
  std::size_t frame_size() const { return height * width * channels; }

  /// New clip made of the listed frames, in order.
  VideoFrames select_frames(const std::vector<std::size_t>& indices) const;

  bool operator==(const VideoFrames&) const = default;
};

struct TokenCounts {
  std::size_t n_t = 0;
  std::size_t n_h = 0;
  std::size_t n_w = 0;
  std::size_t n = 0;
  bool operator==(const TokenCounts&) const = default;
};

/// Floor-divided token counts; throws GeometryError when a patch extent is
/// zero or exceeds the volume.
TokenCounts count_tokens(std::size_t frames, std::size_t height, std::size_t width,
                         std::size_t patch_t, std::size_t patch_h, std::size_t patch_w);

struct PatchGeometry {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::size_t patch_t = 1;
  std::size_t patch_h = 1;
  std::size_t patch_w = 1;
  TokenCounts counts;

  static PatchGeometry make(std::size_t frames, std::size_t height, std::size_t width,
                            std::size_t patch_t, std::size_t patch_h, std::size_t patch_w,
                            std::size_t channels = 3);

  std::size_t num_tokens() const { return counts.n; }
  std::size_t patch_dim() const { return patch_t * patch_h * patch_w * channels; }
  /// Same patch shape applied to a clip with a different frame count.
  PatchGeometry with_frames(std::size_t new_frames) const;

  bool operator==(const PatchGeometry&) const = default;
};

/// Returns [n, patch_dim]. Remainder frames/pixels beyond the covered region
/// are dropped.
Tensor patchify(const VideoFrames& video, const PatchGeometry& geom);

/// Inverse of patchify; the result covers n_t*t x n_h*h x n_w*w.
VideoFrames unpatchify(const Tensor& rows, const PatchGeometry& geom);

/// Interleaved sine/cosine table over flat token index: entry (p, 2k) is
/// sin(p / 10000^(2k/D)) and (p, 2k+1) the matching cosine. Shape [positions, dim].
template <typename T>
BasicTensor<T> sinusoidal_pe(std::size_t positions, std::size_t dim);

template <typename T>
struct TokenBatch {
  BasicTensor<T> embeddings;  // [B, n + 1, D], CLS at index 0
  PatchGeometry geometry;
};

/// Embeds every patch of a batch: row 0 is cls + PE(0), row i is
/// patches[i-1] * weight + bias + PE(i).
///
/// patches: [B, n, P]; weight: [P, D]; bias: [D]; cls: [1, D].
template <typename T>
TokenBatch<T> embed(const BasicTensor<T>& patches, const BasicTensor<T>& weight,
                    const BasicTensor<T>& bias, const BasicTensor<T>& cls,
                    const PatchGeometry& geom);

}  // namespace turbo
