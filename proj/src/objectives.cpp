// SPDX-License-Identifier: Apache-2.0
#include "turbo/objectives.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "turbo/errors.hpp"

namespace turbo {

template <typename T>
BasicTensor<T> normalize_patch_rows(const BasicTensor<T>& rows, T eps) {
  const std::size_t d = rows.rank() == 0 ? 1 : rows.shape().back();
  std::vector<T> out(rows.numel());
  const T* in = rows.data().data();
  for (std::size_t r = 0; d > 0 && r < rows.numel() / d; ++r) {
    T mu = 0;
    for (std::size_t i = 0; i < d; ++i) mu += in[r * d + i];
    mu /= T(d);
    T var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (in[r * d + i] - mu) * (in[r * d + i] - mu);
    var /= T(d);
    const T inv = T(1) / std::sqrt(var + eps);
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] = (in[r * d + i] - mu) * inv;
  }
  return BasicTensor<T>::from(rows.shape(), std::move(out));
}

template <typename T>
BasicTensor<T> pmae_loss(const BasicTensor<T>& predicted, const BasicTensor<T>& target_rows,
                         bool normalize_target) {
  // No decoder output at all (r = 0) counts like an empty target set.
  if (!predicted.defined() && !target_rows.defined()) return BasicTensor<T>::scalar(T(0));
  if (predicted.shape() != target_rows.shape()) {
    throw DimensionError("pmae_loss: prediction " + shape_str(predicted.shape()) +
                         " vs target " + shape_str(target_rows.shape()));
  }
  if (predicted.numel() == 0) return BasicTensor<T>::scalar(T(0));
  const auto target = normalize_target ? normalize_patch_rows(target_rows) : target_rows.detach();
  const auto diff = sub(predicted, target);
  return mean(mul(diff, diff));
}

template <typename T>
BasicTensor<T> ce_loss(const BasicTensor<T>& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2) throw DimensionError("ce_loss expects [B, C] logits");
  for (std::size_t l : labels) {
    if (l >= logits.dim(1)) {
      throw DataError("label " + std::to_string(l) + " out of range for " +
                      std::to_string(logits.dim(1)) + " classes");
    }
  }
  return neg(mean(pick(log_softmax(logits, 1), labels)));
}

template <typename T>
BasicTensor<T> info_nce(const BasicTensor<T>& z_v, const BasicTensor<T>& z_t, T temperature) {
  if (z_v.rank() != 2 || z_v.shape() != z_t.shape()) {
    throw DimensionError("info_nce expects matching [B, P] embeddings, got " +
                         shape_str(z_v.shape()) + " and " + shape_str(z_t.shape()));
  }
  const std::size_t batch = z_v.dim(0);
  if (batch < 2) throw ConfigError("info_nce needs batch size >= 2 for in-batch negatives");
  if (!(temperature > T(0))) throw ConfigError("info_nce temperature must be positive");
  std::vector<std::size_t> diag(batch);
  std::iota(diag.begin(), diag.end(), std::size_t{0});
  const auto sim = scale(matmul(z_v, transpose(z_t)), T(1) / temperature);
  // Row i: video i against every caption. Column j: caption j against every
  // video; after the column softmax the diagonal is picked through the
  // transpose.
  const auto v2t = mean(pick(log_softmax(sim, 1), diag));
  const auto t2v = mean(pick(transpose(log_softmax(sim, 0)), diag));
  return scale(add(v2t, t2v), T(-0.5));
}

double log_in_base(double x, LogBase base) {
  switch (base) {
    case LogBase::e: return std::log(x);
    case LogBase::two: return std::log2(x);
    case LogBase::ten: return std::log10(x);
  }
  return std::log(x);
}

double lambda_ce(std::size_t num_classes, LogBase base) {
  if (num_classes < 2) throw ConfigError("lambda_ce needs num_classes >= 2");
  return 1.0 / log_in_base(static_cast<double>(num_classes), base);
}

double lambda_nce(std::size_t batch_size, LogBase base) {
  if (batch_size < 2) throw ConfigError("lambda_nce needs batch_size >= 2");
  return 1.0 / log_in_base(static_cast<double>(batch_size), base);
}

template <typename T>
LossBundle<T> combine(Task task, const LossParts<T>& parts, const LossWeights& weights) {
  LossBundle<T> out;
  out.weights = weights;
  const bool contrast = task == Task::contrast;
  const auto& downstream = contrast ? parts.nce : parts.ce;
  if (!downstream) {
    throw ContractError(std::string("combine: task ") + std::string(to_string(task)) +
                        " needs the " + (contrast ? "nce" : "ce") + " part");
  }
  const double lambda = contrast ? weights.lambda_nce : weights.lambda_ce;
  auto total = scale(*downstream, static_cast<T>(lambda));
  if (parts.pmae) total = add(total, *parts.pmae);
  out.total = total;
  if (parts.pmae) out.pmae = static_cast<double>(parts.pmae->item());
  if (parts.ce) out.ce = static_cast<double>(parts.ce->item());
  if (parts.nce) out.nce = static_cast<double>(parts.nce->item());
  return out;
}

#define TURBO_INSTANTIATE(T)                                                                 \
  template BasicTensor<T> normalize_patch_rows(const BasicTensor<T>&, T);                    \
  template BasicTensor<T> pmae_loss(const BasicTensor<T>&, const BasicTensor<T>&, bool);     \
  template BasicTensor<T> ce_loss(const BasicTensor<T>&, std::span<const std::size_t>);      \
  template BasicTensor<T> info_nce(const BasicTensor<T>&, const BasicTensor<T>&, T);         \
  template LossBundle<T> combine(Task, const LossParts<T>&, const LossWeights&);

TURBO_INSTANTIATE(float)
TURBO_INSTANTIATE(double)

#undef TURBO_INSTANTIATE

}  // namespace turbo
