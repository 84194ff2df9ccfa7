// SPDX-License-Identifier: Apache-2.0
//
// Training objectives: masked-patch regression, classification cross-entropy,
// bidirectional InfoNCE, and the loss weights that balance each downstream
// loss against the reconstruction loss.
#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "turbo/config.hpp"
#include "turbo/tensor.hpp"

namespace turbo {

/// Standardizes every last-axis row with its own mean and variance.
template <typename T>
BasicTensor<T> normalize_patch_rows(const BasicTensor<T>& rows, T eps = T(1e-6));

/// Mean squared error over all elements of [B, N_r, P]. With `normalize_target`
/// the targets are per-patch standardized first. Exactly 0 when N_r = 0.
template <typename T>
BasicTensor<T> pmae_loss(const BasicTensor<T>& predicted, const BasicTensor<T>& target_rows,
                         bool normalize_target = true);

/// Softmax cross-entropy averaged over the batch.
template <typename T>
BasicTensor<T> ce_loss(const BasicTensor<T>& logits, std::span<const std::size_t> labels);

/// Symmetric InfoNCE with in-batch negatives over S = z_v z_t^T / temperature:
/// -1/2 mean_i [log softmax_row(S)_ii + log softmax_col(S)_ii].
template <typename T>
BasicTensor<T> info_nce(const BasicTensor<T>& z_v, const BasicTensor<T>& z_t,
                        T temperature = T(1));

double log_in_base(double x, LogBase base);
/// 1 / log(num_classes).
double lambda_ce(std::size_t num_classes, LogBase base = LogBase::e);
/// 1 / log(batch_size).
double lambda_nce(std::size_t batch_size, LogBase base = LogBase::e);

template <typename T>
struct LossParts {
  std::optional<BasicTensor<T>> pmae;
  std::optional<BasicTensor<T>> ce;
  std::optional<BasicTensor<T>> nce;
};

struct LossWeights {
  double lambda_ce = 0.0;
  double lambda_nce = 0.0;
};

template <typename T>
struct LossBundle {
  BasicTensor<T> total;
  double pmae = 0.0;
  double ce = 0.0;
  double nce = 0.0;
  LossWeights weights;
};

/// classify / long_classify: total = lambda_ce * ce + pmae.
/// contrast:                 total = lambda_nce * nce + pmae.
/// A missing pmae part counts as 0; a missing downstream part is a
/// ContractError.
template <typename T>
LossBundle<T> combine(Task task, const LossParts<T>& parts, const LossWeights& weights);

}  // namespace turbo
