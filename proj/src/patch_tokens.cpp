// SPDX-License-Identifier: Apache-2.0
#include "turbo/patch_tokens.hpp"

#include <cmath>
#include <string>

#include "turbo/errors.hpp"

namespace turbo {

VideoFrames VideoFrames::select_frames(const std::vector<std::size_t>& indices) const {
  VideoFrames out(indices.size(), height, width, channels);
  const std::size_t fs = frame_size();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= frames) {
      throw IndexError("frame index " + std::to_string(indices[k]) + " out of range");
    }
    std::copy_n(pixels.begin() + static_cast<std::ptrdiff_t>(indices[k] * fs), fs,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(k * fs));
  }
  return out;
}

TokenCounts count_tokens(std::size_t frames, std::size_t height, std::size_t width,
                         std::size_t patch_t, std::size_t patch_h, std::size_t patch_w) {
  if (patch_t == 0 || patch_h == 0 || patch_w == 0) {
    throw GeometryError("patch extents must be >= 1");
  }
  if (patch_t > frames || patch_h > height || patch_w > width) {
    throw GeometryError("patch " + std::to_string(patch_t) + "x" + std::to_string(patch_h) + "x" +
                        std::to_string(patch_w) + " larger than volume " +
                        std::to_string(frames) + "x" + std::to_string(height) + "x" +
                        std::to_string(width));
  }
  TokenCounts c;
  c.n_t = frames / patch_t;
  c.n_h = height / patch_h;
  c.n_w = width / patch_w;
  c.n = c.n_t * c.n_h * c.n_w;
  return c;
}

PatchGeometry PatchGeometry::make(std::size_t frames, std::size_t height, std::size_t width,
                                  std::size_t patch_t, std::size_t patch_h, std::size_t patch_w,
                                  std::size_t channels) {
  if (channels == 0) throw GeometryError("channel count must be >= 1");
  PatchGeometry g;
  g.frames = frames;
  g.height = height;
  g.width = width;
  g.channels = channels;
  g.patch_t = patch_t;
  g.patch_h = patch_h;
  g.patch_w = patch_w;
  g.counts = count_tokens(frames, height, width, patch_t, patch_h, patch_w);
  return g;
}

PatchGeometry PatchGeometry::with_frames(std::size_t new_frames) const {
  return make(new_frames, height, width, patch_t, patch_h, patch_w, channels);
}

Tensor patchify(const VideoFrames& video, const PatchGeometry& geom) {
  if (video.channels != geom.channels) {
    throw GeometryError("video has " + std::to_string(video.channels) +
                        " channels, geometry expects " + std::to_string(geom.channels));
  }
  if (video.frames < geom.frames || video.height < geom.height || video.width < geom.width) {
    throw GeometryError("video smaller than patch geometry");
  }
  const TokenCounts& c = geom.counts;
  const std::size_t p = geom.patch_dim();
  std::vector<float> rows(c.n * p);
  std::size_t row = 0;
  for (std::size_t it = 0; it < c.n_t; ++it) {
    for (std::size_t ih = 0; ih < c.n_h; ++ih) {
      for (std::size_t iw = 0; iw < c.n_w; ++iw, ++row) {
        float* dst = rows.data() + row * p;
        for (std::size_t f = 0; f < geom.patch_t; ++f) {
          for (std::size_t y = 0; y < geom.patch_h; ++y) {
            const std::size_t src = video.index(it * geom.patch_t + f, ih * geom.patch_h + y,
                                                iw * geom.patch_w, 0);
            const std::size_t len = geom.patch_w * geom.channels;
            std::copy_n(video.pixels.data() + src, len, dst);
            dst += len;
          }
        }
      }
    }
  }
  return Tensor::from({c.n, p}, std::move(rows));
}

VideoFrames unpatchify(const Tensor& rows, const PatchGeometry& geom) {
  const TokenCounts& c = geom.counts;
  const std::size_t p = geom.patch_dim();
  if (rows.rank() != 2 || rows.dim(0) != c.n || rows.dim(1) != p) {
    throw GeometryError("unpatchify expects [" + std::to_string(c.n) + ", " + std::to_string(p) +
                        "], got " + shape_str(rows.shape()));
  }
  VideoFrames video(c.n_t * geom.patch_t, c.n_h * geom.patch_h, c.n_w * geom.patch_w,
                    geom.channels);
  std::size_t row = 0;
  for (std::size_t it = 0; it < c.n_t; ++it) {
    for (std::size_t ih = 0; ih < c.n_h; ++ih) {
      for (std::size_t iw = 0; iw < c.n_w; ++iw, ++row) {
        const float* src = rows.data().data() + row * p;
        for (std::size_t f = 0; f < geom.patch_t; ++f) {
          for (std::size_t y = 0; y < geom.patch_h; ++y) {
            const std::size_t dst = video.index(it * geom.patch_t + f, ih * geom.patch_h + y,
                                                iw * geom.patch_w, 0);
            const std::size_t len = geom.patch_w * geom.channels;
            std::copy_n(src, len, video.pixels.data() + dst);
            src += len;
          }
        }
      }
    }
  }
  return video;
}

template <typename T>
BasicTensor<T> sinusoidal_pe(std::size_t positions, std::size_t dim) {
  std::vector<T> table(positions * dim);
  for (std::size_t pos = 0; pos < positions; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double pair = static_cast<double>(i - i % 2);
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, pair / static_cast<double>(dim));
      table[pos * dim + i] = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return BasicTensor<T>::from({positions, dim}, std::move(table));
}

template <typename T>
TokenBatch<T> embed(const BasicTensor<T>& patches, const BasicTensor<T>& weight,
                    const BasicTensor<T>& bias, const BasicTensor<T>& cls,
                    const PatchGeometry& geom) {
  if (patches.rank() != 3 || patches.dim(1) != geom.num_tokens() ||
      patches.dim(2) != geom.patch_dim()) {
    throw GeometryError("embed expects [B, " + std::to_string(geom.num_tokens()) + ", " +
                        std::to_string(geom.patch_dim()) + "], got " +
                        shape_str(patches.shape()));
  }
  if (weight.rank() != 2 || weight.dim(0) != geom.patch_dim()) {
    throw DimensionError("embed weight " + shape_str(weight.shape()) + " does not map " +
                         std::to_string(geom.patch_dim()) + " -> D");
  }
  const std::size_t batch = patches.dim(0);
  const std::size_t d = weight.dim(1);
  const auto pe = sinusoidal_pe<T>(geom.num_tokens() + 1, d);
  auto tokens = add(matmul(patches, weight), bias);
  auto cls_rows = add(BasicTensor<T>::zeros({batch, 1, d}), cls);
  auto seq = concat<T>({cls_rows, tokens}, 1);
  return {add(seq, pe), geom};
}

template BasicTensor<float> sinusoidal_pe<float>(std::size_t, std::size_t);
template BasicTensor<double> sinusoidal_pe<double>(std::size_t, std::size_t);
template TokenBatch<float> embed(const Tensor&, const Tensor&, const Tensor&, const Tensor&,
                                 const PatchGeometry&);
template TokenBatch<double> embed(const Tensor64&, const Tensor64&, const Tensor64&,
                                  const Tensor64&, const PatchGeometry&);

}  // namespace turbo
