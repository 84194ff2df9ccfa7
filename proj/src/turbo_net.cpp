// SPDX-License-Identifier: Apache-2.0
#include "turbo/turbo_net.hpp"

#include <cmath>

#include "turbo/errors.hpp"

namespace turbo {

// ---------------------------------------------------------------------------
// Block

template <typename T>
BasicTensor<T> Block<T>::attention(const BasicTensor<T>& x) const {
  const std::size_t batch = x.dim(0);
  const std::size_t len = x.dim(1);
  const std::size_t dim = x.dim(2);
  const std::size_t head_dim = dim / heads;
  // [B, L, 3D] -> [3, B, H, L, dh]
  auto qkv_rows = reshape(qkv(x), {batch, len, 3, heads, head_dim});
  auto split = permute(qkv_rows, {2, 0, 3, 1, 4});
  const Shape head_shape{batch, heads, len, head_dim};
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(head_dim));
  // Scaling q rather than the scores touches L*dh values instead of L*L.
  auto q = scale(reshape(narrow(split, 0, 0, 1), head_shape), inv_scale);
  auto k = reshape(narrow(split, 0, 1, 1), head_shape);
  auto v = reshape(narrow(split, 0, 2, 1), head_shape);
  auto weights = softmax(matmul(q, transpose(k)), 3);
  auto mixed = permute(matmul(weights, v), {0, 2, 1, 3});
  return proj(reshape(mixed, {batch, len, dim}));
}

template <typename T>
BasicTensor<T> Block<T>::operator()(const BasicTensor<T>& x) const {
  auto h = add(x, attention(norm1(x)));
  return add(h, fc2(gelu(fc1(norm2(h)))));
}

// ---------------------------------------------------------------------------
// Construction

template <typename T>
TurboNet<T>::TurboNet(const TurboConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  Rng rng(hash_seed({init_seed, 0x696E6974ULL /* "init" */}));
  init_rng_ = &rng;
  const std::size_t d = config_.enc_dim;
  const std::size_t dd = config_.dec_dim;
  const std::size_t p = config_.geometry.patch_dim();

  patch_embed_ = make_linear("patch_embed", p, d);
  cls_token_ = make_param("cls_token", {1, d}, 0.02, true);
  for (std::size_t i = 0; i < config_.enc_depth; ++i) {
    encoder_.push_back(make_block("encoder.blocks." + std::to_string(i), d, config_.enc_heads));
  }
  encoder_norm_ = make_norm("encoder.norm", d);

  decoder_embed_ = make_linear("decoder.embed", d, dd);
  mask_token_ = make_param("decoder.mask_token", {1, dd}, 0.02, true);
  for (std::size_t i = 0; i < config_.dec_depth; ++i) {
    decoder_.push_back(make_block("decoder.blocks." + std::to_string(i), dd, config_.dec_heads));
  }
  decoder_norm_ = make_norm("decoder.norm", dd);
  decoder_pred_ = make_linear("decoder.pred", dd, p);

  if (config_.task == Task::contrast) {
    const std::size_t pd = config_.proj_dim;
    visual_proj_ = {make_linear("visual_proj.fc1", d, pd), make_linear("visual_proj.fc2", pd, pd)};
    text_proj_ = {make_linear("text_proj.fc1", config_.text_dim, pd),
                  make_linear("text_proj.fc2", pd, pd)};
  } else {
    head_ = make_linear("head", d, config_.num_classes);
  }
  init_rng_ = nullptr;
}

template <typename T>
BasicTensor<T> TurboNet<T>::make_param(const std::string& name, Shape shape, double std_or_fill,
                                       bool random) {
  std::vector<T> values(shape_numel(shape));
  for (T& v : values) {
    v = static_cast<T>(random ? init_rng_->truncated_normal(std_or_fill) : std_or_fill);
  }
  auto t = BasicTensor<T>::from(std::move(shape), std::move(values), true);
  params_.push_back({name, t});
  return t;
}

template <typename T>
Linear<T> TurboNet<T>::make_linear(const std::string& name, std::size_t in, std::size_t out) {
  Linear<T> l;
  l.weight = make_param(name + ".weight", {in, out}, 0.02, true);
  l.bias = make_param(name + ".bias", {out}, 0.0, false);
  return l;
}

template <typename T>
LayerNorm<T> TurboNet<T>::make_norm(const std::string& name, std::size_t dim) {
  LayerNorm<T> n;
  n.gain = make_param(name + ".gain", {dim}, 1.0, false);
  n.bias = make_param(name + ".bias", {dim}, 0.0, false);
  return n;
}

template <typename T>
Block<T> TurboNet<T>::make_block(const std::string& name, std::size_t dim, std::size_t heads) {
  Block<T> b;
  b.heads = heads;
  b.norm1 = make_norm(name + ".norm1", dim);
  b.qkv = make_linear(name + ".attn.qkv", dim, 3 * dim);
  b.proj = make_linear(name + ".attn.proj", dim, dim);
  b.norm2 = make_norm(name + ".norm2", dim);
  b.fc1 = make_linear(name + ".mlp.fc1", dim, 4 * dim);
  b.fc2 = make_linear(name + ".mlp.fc2", 4 * dim, dim);
  return b;
}

template <typename T>
std::size_t TurboNet<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p.tensor.numel();
  return total;
}

template <typename T>
BasicTensor<T> TurboNet<T>::parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ContractError("no parameter named '" + name + "'");
}

template <typename T>
void TurboNet<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

// ---------------------------------------------------------------------------
// Forward pieces

namespace {

/// Copies rows of a PE table into a constant [B, K, D] tensor; row index is
/// token index + 1 because CLS holds position 0.
template <typename T>
BasicTensor<T> gather_pe(const BasicTensor<T>& table,
                         const std::vector<std::vector<std::size_t>>& token_idx) {
  const std::size_t d = table.dim(1);
  const std::size_t k = token_idx.empty() ? 0 : token_idx[0].size();
  std::vector<T> out(token_idx.size() * k * d);
  for (std::size_t b = 0; b < token_idx.size(); ++b) {
    for (std::size_t j = 0; j < k; ++j) {
      const T* src = table.data().data() + (token_idx[b][j] + 1) * d;
      std::copy_n(src, d, out.data() + (b * k + j) * d);
    }
  }
  return BasicTensor<T>::from({token_idx.size(), k, d}, std::move(out));
}

template <typename T>
std::vector<std::vector<std::size_t>> visible_lists(const std::vector<PartitionPlan>& plans) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(plans.size());
  for (const auto& p : plans) out.push_back(p.visible_idx);
  return out;
}

std::vector<std::vector<std::size_t>> recon_lists(const std::vector<PartitionPlan>& plans) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(plans.size());
  for (const auto& p : plans) out.push_back(p.recon_idx);
  return out;
}

}  // namespace

template <typename T>
BasicTensor<T> TurboNet<T>::embed_visible(const BasicTensor<T>& patches,
                                          const std::vector<PartitionPlan>& plans) const {
  if (patches.rank() != 3 || patches.dim(0) != plans.size() ||
      patches.dim(2) != config_.geometry.patch_dim()) {
    throw GeometryError("patches " + shape_str(patches.shape()) + " do not match " +
                        std::to_string(plans.size()) + " plans with patch dim " +
                        std::to_string(config_.geometry.patch_dim()));
  }
  const std::size_t n = patches.dim(1);
  check_uniform_plans(plans, n);
  const std::size_t batch = plans.size();
  const std::size_t d = config_.enc_dim;
  const auto pe = sinusoidal_pe<T>(n + 1, d);
  const auto vis = visible_lists<T>(plans);

  BasicTensor<T> visible_rows;
  {
    NoGradGuard guard;
    visible_rows = gather_rows(patches, vis);
  }
  auto tokens = add(add(matmul(visible_rows, patch_embed_.weight), patch_embed_.bias),
                    gather_pe(pe, vis));
  auto cls_pe = add(cls_token_, narrow(pe, 0, 0, 1));
  auto cls_rows = add(BasicTensor<T>::zeros({batch, 1, d}), cls_pe);
  return concat<T>({cls_rows, tokens}, 1);
}

template <typename T>
BasicTensor<T> TurboNet<T>::encoder_forward(const BasicTensor<T>& tokens) const {
  if (tokens.rank() != 3 || tokens.dim(2) != config_.enc_dim || tokens.dim(1) == 0) {
    throw ConfigError("encoder expects [B, L >= 1, " + std::to_string(config_.enc_dim) +
                      "], got " + shape_str(tokens.shape()));
  }
  auto x = tokens;
  for (const auto& block : encoder_) x = block(x);
  return encoder_norm_(x);
}

template <typename T>
BasicTensor<T> TurboNet<T>::decoder_input(const BasicTensor<T>& encoded,
                                          const std::vector<PartitionPlan>& plans) const {
  if (plans.empty()) throw GeometryError("decoder needs at least one plan");
  const std::size_t n = plans[0].n;
  check_uniform_plans(plans, n);
  const std::size_t visible = plans[0].visible_idx.size();
  if (encoded.rank() != 3 || encoded.dim(0) != plans.size() || encoded.dim(1) != visible + 1 ||
      encoded.dim(2) != config_.enc_dim) {
    throw GeometryError("encoded tokens " + shape_str(encoded.shape()) +
                        " do not match the partition plans");
  }
  const auto pe = sinusoidal_pe<T>(n + 1, config_.dec_dim);
  auto vis = decoder_embed_(narrow(encoded, 1, 1, visible));
  vis = add(vis, gather_pe(pe, visible_lists<T>(plans)));
  auto slots = add(gather_pe(pe, recon_lists(plans)), reshape(mask_token_, {config_.dec_dim}));
  return concat<T>({vis, slots}, 1);
}

template <typename T>
BasicTensor<T> TurboNet<T>::decoder_forward(const BasicTensor<T>& encoded,
                                            const std::vector<PartitionPlan>& plans) const {
  if (plans.empty()) throw GeometryError("decoder needs at least one plan");
  const std::size_t visible = plans[0].visible_idx.size();
  const std::size_t recon = plans[0].recon_idx.size();
  if (recon == 0) {
    return BasicTensor<T>::zeros({plans.size(), 0, config_.geometry.patch_dim()});
  }
  auto x = decoder_input(encoded, plans);
  for (const auto& block : decoder_) x = block(x);
  x = decoder_norm_(x);
  return decoder_pred_(narrow(x, 1, visible, recon));
}

template <typename T>
BasicTensor<T> TurboNet<T>::classify_head(const BasicTensor<T>& z_cls) const {
  if (!has_classifier()) throw ConfigError("model was built without a classifier head");
  return head_(z_cls);
}

template <typename T>
BasicTensor<T> TurboNet<T>::project_visual(const BasicTensor<T>& z_cls) const {
  if (!has_projections()) throw ConfigError("model was built without projection heads");
  auto z = visual_proj_(z_cls);
  return config_.normalize_embeddings ? l2_normalize(z) : z;
}

template <typename T>
BasicTensor<T> TurboNet<T>::project_text(const BasicTensor<T>& text_feat) const {
  if (!has_projections()) throw ConfigError("model was built without projection heads");
  auto z = text_proj_(text_feat);
  return config_.normalize_embeddings ? l2_normalize(z) : z;
}

template <typename T>
TurboOutput<T> TurboNet<T>::forward(const BasicTensor<T>& patches,
                                    const std::vector<PartitionPlan>& plans) const {
  TurboOutput<T> out;
  out.encoded = encoder_forward(embed_visible(patches, plans));
  out.z_cls = reshape(narrow(out.encoded, 1, 0, 1), {plans.size(), config_.enc_dim});
  if (!plans[0].recon_idx.empty()) {
    out.predicted = decoder_forward(out.encoded, plans);
    NoGradGuard guard;
    out.targets = gather_rows(patches, recon_lists(plans));
  }
  return out;
}

template struct Block<float>;
template struct Block<double>;
template class TurboNet<float>;
template class TurboNet<double>;

}  // namespace turbo
