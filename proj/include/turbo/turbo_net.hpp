// SPDX-License-Identifier: Apache-2.0
//
// Video transformer used for turbo training: encoder over the visible tokens,
// a light decoder over (visible + reconstruction slots), a linear classifier
// on the final CLS feature, and two 2-layer projection heads for contrastive
// video-text training.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "turbo/config.hpp"
#include "turbo/partition.hpp"
#include "turbo/rng.hpp"
#include "turbo/tensor.hpp"

namespace turbo {

template <typename T>
struct NamedParam {
  std::string name;
  BasicTensor<T> tensor;
};

template <typename T>
struct Linear {
  BasicTensor<T> weight;  // [in, out]
  BasicTensor<T> bias;    // [out]
  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return add(matmul(x, weight), bias); }
};

template <typename T>
struct LayerNorm {
  BasicTensor<T> gain;
  BasicTensor<T> bias;
  BasicTensor<T> operator()(const BasicTensor<T>& x) const {
    return layernorm(x, gain, bias, T(1e-6));
  }
};

/// Pre-norm transformer block: x + MHSA(LN(x)), then x + MLP(LN(x)) with a
/// 4x GELU hidden layer.
template <typename T>
struct Block {
  LayerNorm<T> norm1;
  Linear<T> qkv;
  Linear<T> proj;
  LayerNorm<T> norm2;
  Linear<T> fc1;
  Linear<T> fc2;
  std::size_t heads = 1;

  BasicTensor<T> attention(const BasicTensor<T>& x) const;
  BasicTensor<T> operator()(const BasicTensor<T>& x) const;
};

template <typename T>
struct Mlp2 {
  Linear<T> fc1;
  Linear<T> fc2;
  BasicTensor<T> operator()(const BasicTensor<T>& x) const { return fc2(gelu(fc1(x))); }
};

template <typename T>
struct TurboOutput {
  BasicTensor<T> encoded;    // [B, N_i + 1, D]
  BasicTensor<T> z_cls;      // [B, D], after the final norm
  BasicTensor<T> predicted;  // [B, N_r, P]; undefined when N_r = 0
  BasicTensor<T> targets;    // [B, N_r, P] raw rows; undefined when N_r = 0
};

template <typename T>
class TurboNet {
 public:
  /// Weights are drawn from a truncated normal (std 0.02), biases and norm
  /// shifts start at zero, norm gains at one.
  TurboNet(const TurboConfig& config, std::uint64_t init_seed);

  const TurboConfig& config() const { return config_; }

  /// Every trainable tensor under a stable dotted name, in creation order.
  const std::vector<NamedParam<T>>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  BasicTensor<T> parameter(const std::string& name) const;
  void zero_grad();

  /// Embeds the visible patches of each plan and prepends CLS.
  /// patches: [B, n, P] raw rows. Result: [B, N_i + 1, D].
  BasicTensor<T> embed_visible(const BasicTensor<T>& patches,
                               const std::vector<PartitionPlan>& plans) const;

  /// Encoder blocks plus final norm; any sequence length >= 1.
  BasicTensor<T> encoder_forward(const BasicTensor<T>& tokens) const;

  /// Decoder over projected visible tokens plus one mask slot per
  /// reconstruction target. Output rows follow each plan's recon order.
  BasicTensor<T> decoder_forward(const BasicTensor<T>& encoded,
                                 const std::vector<PartitionPlan>& plans) const;

  /// Decoder input sequence (before the blocks); exposed for inspection.
  BasicTensor<T> decoder_input(const BasicTensor<T>& encoded,
                               const std::vector<PartitionPlan>& plans) const;

  BasicTensor<T> classify_head(const BasicTensor<T>& z_cls) const;
  BasicTensor<T> project_visual(const BasicTensor<T>& z_cls) const;
  BasicTensor<T> project_text(const BasicTensor<T>& text_feat) const;

  /// Full turbo forward: visible tokens -> encoder -> (decoder when N_r > 0).
  TurboOutput<T> forward(const BasicTensor<T>& patches,
                         const std::vector<PartitionPlan>& plans) const;

  bool has_classifier() const { return head_.weight.defined(); }
  bool has_projections() const { return visual_proj_.fc1.weight.defined(); }

 private:
  BasicTensor<T> make_param(const std::string& name, Shape shape, double std_or_fill,
                            bool random);
  Linear<T> make_linear(const std::string& name, std::size_t in, std::size_t out);
  LayerNorm<T> make_norm(const std::string& name, std::size_t dim);
  Block<T> make_block(const std::string& name, std::size_t dim, std::size_t heads);

  TurboConfig config_;
  Rng* init_rng_ = nullptr;
  std::vector<NamedParam<T>> params_;

  Linear<T> patch_embed_;
  BasicTensor<T> cls_token_;  // [1, D]
  std::vector<Block<T>> encoder_;
  LayerNorm<T> encoder_norm_;

  Linear<T> decoder_embed_;
  BasicTensor<T> mask_token_;  // [1, D_dec]
  std::vector<Block<T>> decoder_;
  LayerNorm<T> decoder_norm_;
  Linear<T> decoder_pred_;

  Linear<T> head_;
  Mlp2<T> visual_proj_;
  Mlp2<T> text_proj_;
};

extern template class TurboNet<float>;
extern template class TurboNet<double>;

}  // namespace turbo
