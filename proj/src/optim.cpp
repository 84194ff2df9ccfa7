// SPDX-License-Identifier: Apache-2.0
#include "turbo/optim.hpp"

#include <cmath>

#include "turbo/errors.hpp"

namespace turbo {

OptimState OptimState::for_params(const std::vector<NamedParam<float>>& params,
                                  const AdamWConfig& hyper) {
  OptimState s;
  s.hyper = hyper;
  for (const auto& p : params) {
    s.names.push_back(p.name);
    s.m.emplace_back(p.tensor.numel(), 0.0f);
    s.v.emplace_back(p.tensor.numel(), 0.0f);
  }
  return s;
}

bool decays(const std::string& param_name) {
  const std::string suffix = ".weight";
  return param_name.size() >= suffix.size() &&
         param_name.compare(param_name.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void adamw_step(const std::vector<NamedParam<float>>& params, OptimState& state, double lr) {
  if (state.names.size() != params.size()) {
    throw ContractError("optimizer state has " + std::to_string(state.names.size()) +
                        " entries for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k].tensor;
    if (!p.has_grad()) continue;
    for (float g : p.grad()) {
      if (!std::isfinite(g)) {
        throw NumericalError("non-finite gradient in '" + params[k].name + "' at step " +
                             std::to_string(state.step + 1));
      }
    }
  }
  ++state.step;
  const AdamWConfig& h = state.hyper;
  const double bias1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].tensor;
    if (state.names[k] != params[k].name || state.m[k].size() != p.numel()) {
      throw ContractError("optimizer state does not match parameter '" + params[k].name + "'");
    }
    if (!p.has_grad()) continue;
    const double decay = decays(params[k].name) ? lr * h.weight_decay : 0.0;
    auto w = p.mutable_data();
    auto g = p.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      m[i] = static_cast<float>(h.beta1 * m[i] + (1.0 - h.beta1) * gi);
      v[i] = static_cast<float>(h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi);
      const double mhat = m[i] / bias1;
      const double vhat = v[i] / bias2;
      double wi = w[i];
      wi -= decay * wi;
      wi -= lr * mhat / (std::sqrt(vhat) + h.eps);
      w[i] = static_cast<float>(wi);
    }
  }
}

double clip_grad_norm(const std::vector<NamedParam<float>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const float factor = static_cast<float>(max_norm / (norm + 1e-6));
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      auto t = p.tensor;
      for (float& g : t.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

std::size_t Schedule::warmup_steps() const {
  return static_cast<std::size_t>(std::llround(warmup_epochs * static_cast<double>(steps_per_epoch)));
}

std::size_t Schedule::total_steps() const {
  return static_cast<std::size_t>(std::llround(total_epochs * static_cast<double>(steps_per_epoch)));
}

double lr_at(const Schedule& s, std::size_t step) {
  const std::size_t warm = s.warmup_steps();
  const std::size_t total = s.total_steps();
  if (step < warm) {
    return s.base_lr * static_cast<double>(step) / static_cast<double>(warm);
  }
  // The last step index is total - 1.
  const std::size_t last = total > 0 ? total - 1 : 0;
  if (step >= last) return last <= warm ? (step == warm ? s.base_lr : s.min_lr) : s.min_lr;
  const double progress =
      static_cast<double>(step - warm) / static_cast<double>(last - warm);
  const double cosine = 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
  return s.min_lr + (s.base_lr - s.min_lr) * cosine;
}

}  // namespace turbo
