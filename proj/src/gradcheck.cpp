// SPDX-License-Identifier: Apache-2.0
#include "turbo/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "turbo/errors.hpp"
#include "turbo/objectives.hpp"
#include "turbo/partition.hpp"
#include "turbo/rng.hpp"
#include "turbo/turbo_net.hpp"

namespace turbo {

bool GradcheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

std::vector<std::string> GradcheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (!e.passed) out.push_back(e.name);
  }
  return out;
}

double max_gradient_error(const LossFn& loss, std::vector<Tensor64> inputs, std::uint64_t seed,
                          std::size_t* coords_checked, const GradcheckOptions& options) {
  for (auto& x : inputs) {
    if (!x.requires_grad()) throw ContractError("gradcheck inputs must require grad");
    x.zero_grad();
  }
  {
    Tensor64 l = loss(inputs);
    backward(l);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& x : inputs) {
    analytic.emplace_back(x.has_grad() ? std::vector<double>(x.grad().begin(), x.grad().end())
                                       : std::vector<double>(x.numel(), 0.0));
  }

  // (tensor, element) pairs: one forced per input, the rest sampled.
  Rng rng(hash_seed({seed, 0x6663ULL}));
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    for (std::size_t i = 0; i < inputs[t].numel(); ++i) all.emplace_back(t, i);
  }
  rng.shuffle(std::span(all));
  std::vector<std::pair<std::size_t, std::size_t>> picked;
  std::vector<bool> covered(inputs.size(), false);
  for (const auto& c : all) {
    if (!covered[c.first]) {
      covered[c.first] = true;
      picked.push_back(c);
    }
  }
  for (const auto& c : all) {
    if (picked.size() >= options.min_coords) break;
    if (std::find(picked.begin(), picked.end(), c) == picked.end()) picked.push_back(c);
  }

  NoGradGuard no_grad;
  double worst = 0.0;
  for (const auto& [t, i] : picked) {
    auto values = inputs[t].mutable_data();
    const double x0 = values[i];
    const double h = options.step_scale * std::max(1.0, std::abs(x0));
    values[i] = x0 + h;
    const double up = loss(inputs).item();
    values[i] = x0 - h;
    const double down = loss(inputs).item();
    values[i] = x0;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[t][i];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  if (coords_checked) *coords_checked = picked.size();
  return worst;
}

namespace {

Tensor64 random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor64::from(std::move(shape), std::move(v), true);
}

Tensor64 constant_like(Rng& rng, const Shape& shape) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor64::from(shape, std::move(v), false);
}

/// sum(y * w) with fixed random w, so the upstream gradient of y is not
/// uniform (a plain sum hides errors in softmax-like rules).
struct Probe {
  Tensor64 w;
  Tensor64 operator()(const Tensor64& y) const { return sum(mul(y, w)); }
};

Probe probe_for(Rng& rng, const Shape& out_shape) { return {constant_like(rng, out_shape)}; }

TurboConfig tiny_config(Task task) {
  TurboConfig c = toy_preset(task);
  c.geometry = PatchGeometry::make(4, 16, 16, 2, 8, 8);
  c.enc_depth = 1;
  c.enc_dim = 16;
  c.enc_heads = 2;
  c.dec_depth = 1;
  c.dec_dim = 8;
  c.dec_heads = 2;
  c.num_classes = 5;
  c.proj_dim = 8;
  c.text_dim = 12;
  c.batch_size = 3;
  c.mask_ratio = 0.5;
  c.recon_ratio = 0.25;
  return c;
}

/// Loss of a full forward pass of a tiny model, as a function of its
/// parameters (the model tensors are passed in as the gradcheck inputs).
GradcheckEntry model_entry(const std::string& name, Task task, std::uint64_t seed,
                           double tolerance) {
  const TurboConfig config = tiny_config(task);
  TurboNet<double> net(config, seed);
  Rng rng(hash_seed({seed, 0x6D6FULL}));
  const std::size_t b = config.batch_size;
  const std::size_t n = config.geometry.num_tokens();
  const std::size_t p = config.geometry.patch_dim();
  Tensor64 patches = constant_like(rng, {b, n, p});
  std::vector<PartitionPlan> plans;
  for (std::size_t i = 0; i < b; ++i) {
    plans.push_back(make_partition(n, config.mask_ratio, config.recon_ratio,
                                   partition_seed(seed, 0, i)));
  }
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < b; ++i) labels.push_back(rng.below(config.num_classes));
  Tensor64 text = constant_like(rng, {b, config.text_dim});

  // Away from the 0.02-std init, so that gradients are not vanishingly small
  // next to the finite-difference rounding noise.
  std::vector<Tensor64> params;
  for (const auto& np : net.parameters()) {
    auto t = np.tensor;
    for (double& v : t.mutable_data()) v += rng.uniform(-0.3, 0.3);
    params.push_back(t);
  }

  // The closure ignores its argument: the model reads the same tensors.
  LossFn loss = [&](const std::vector<Tensor64>&) {
    auto out = net.forward(patches, plans);
    LossParts<double> parts;
    parts.pmae = pmae_loss(out.predicted, out.targets, config.norm_pix_loss);
    if (task == Task::contrast) {
      parts.nce = info_nce(net.project_visual(out.z_cls), net.project_text(text), 0.5);
    } else {
      parts.ce = ce_loss(net.classify_head(out.z_cls), labels);
    }
    LossWeights weights{lambda_ce(config.num_classes), lambda_nce(b)};
    return combine(task, parts, weights).total;
  };
  GradcheckOptions options;
  // Spread the sample over the parameter list: several coordinates each.
  options.min_coords = std::max<std::size_t>(64, params.size() * 2);
  GradcheckEntry e{name, 0, 0.0, false};
  e.max_rel_err = max_gradient_error(loss, params, seed, &e.coords, options);
  e.passed = e.max_rel_err <= tolerance;
  return e;
}

}  // namespace

GradcheckReport run_gradcheck_suite(std::uint64_t seed, double tolerance) {
  GradcheckReport report;
  report.tolerance = tolerance;
  Rng rng(hash_seed({seed, 0x7375ULL}));

  auto check = [&](const std::string& name, std::vector<Tensor64> inputs, const LossFn& fn) {
    GradcheckEntry e{name, 0, 0.0, false};
    e.max_rel_err = max_gradient_error(fn, std::move(inputs), hash_seed({seed, report.entries.size()}),
                                       &e.coords);
    e.passed = e.max_rel_err <= tolerance;
    report.entries.push_back(e);
  };

  const Shape s3{4, 5, 4};  // 80 elements
  {
    auto a = random_tensor(rng, s3), b = random_tensor(rng, s3);
    auto bias = random_tensor(rng, {4});
    auto pr = probe_for(rng, s3);
    check("add", {a, b, bias}, [pr](const auto& in) { return pr(add(add(in[0], in[1]), in[2])); });
  }
  {
    auto a = random_tensor(rng, s3), b = random_tensor(rng, s3);
    auto pr = probe_for(rng, s3);
    check("sub", {a, b}, [pr](const auto& in) { return pr(sub(in[0], in[1])); });
  }
  {
    auto a = random_tensor(rng, s3), b = random_tensor(rng, s3);
    auto row = random_tensor(rng, {5, 4});
    auto pr = probe_for(rng, s3);
    check("mul", {a, b, row}, [pr](const auto& in) { return pr(mul(mul(in[0], in[1]), in[2])); });
  }
  {
    auto a = random_tensor(rng, s3);
    auto pr = probe_for(rng, s3);
    check("scale", {a}, [pr](const auto& in) { return pr(scale(in[0], -1.7)); });
    auto b = random_tensor(rng, s3);
    check("neg", {b}, [pr](const auto& in) { return pr(neg(in[0])); });
  }
  {
    auto a = random_tensor(rng, s3, -3.0, 3.0);
    auto pr = probe_for(rng, s3);
    check("gelu", {a}, [pr](const auto& in) { return pr(gelu(in[0])); });
    auto b = random_tensor(rng, s3, -2.0, 2.0);
    check("exp", {b}, [pr](const auto& in) { return pr(exp(in[0])); });
    auto c = random_tensor(rng, s3, 0.5, 3.0);
    check("log", {c}, [pr](const auto& in) { return pr(log(in[0])); });
    auto d = random_tensor(rng, s3, 0.5, 3.0);
    check("sqrt", {d}, [pr](const auto& in) { return pr(sqrt(in[0])); });
  }
  {
    auto a = random_tensor(rng, {2, 5, 4}), b = random_tensor(rng, {4, 3});
    auto c = random_tensor(rng, {2, 4, 3});
    auto pr = probe_for(rng, {2, 5, 3});
    check("matmul", {a, b, c},
          [pr](const auto& in) { return pr(add(matmul(in[0], in[1]), matmul(in[0], in[2]))); });
  }
  {
    auto a = random_tensor(rng, s3, -2.0, 2.0);
    auto pr = probe_for(rng, s3);
    check("softmax", {a}, [pr](const auto& in) {
      return pr(add(softmax(in[0], 1), softmax(in[0], 2)));
    });
    auto b = random_tensor(rng, s3, -2.0, 2.0);
    check("log_softmax", {b}, [pr](const auto& in) {
      return pr(add(log_softmax(in[0], 0), log_softmax(in[0], 2)));
    });
  }
  {
    auto x = random_tensor(rng, {4, 5, 6}, -2.0, 2.0);
    auto g = random_tensor(rng, {6}, 0.5, 1.5), b = random_tensor(rng, {6});
    auto pr = probe_for(rng, {4, 5, 6});
    check("layernorm", {x, g, b},
          [pr](const auto& in) { return pr(layernorm(in[0], in[1], in[2], 1e-6)); });
  }
  {
    auto x = random_tensor(rng, {10, 8});
    const std::vector<std::size_t> idx{3, 0, 7, 3, 9};
    auto pr = probe_for(rng, {5, 8});
    auto xb = random_tensor(rng, {2, 6, 7});
    const std::vector<std::vector<std::size_t>> bidx{{5, 1, 2}, {0, 0, 4}};
    auto prb = probe_for(rng, {2, 3, 7});
    check("gather_rows", {x, xb}, [pr, prb, idx, bidx](const auto& in) {
      return add(pr(gather_rows(in[0], std::span<const std::size_t>(idx))),
                 prb(gather_rows(in[1], bidx)));
    });
  }
  {
    auto x = random_tensor(rng, s3);
    auto pr = probe_for(rng, {10, 8});
    check("reshape", {x}, [pr](const auto& in) { return pr(reshape(in[0], {10, 8})); });
    auto y = random_tensor(rng, {2, 3, 4, 5});
    auto prp = probe_for(rng, {4, 2, 5, 3});
    check("permute", {y}, [prp](const auto& in) { return prp(permute(in[0], {2, 0, 3, 1})); });
  }
  {
    auto a = random_tensor(rng, {3, 2, 5}), b = random_tensor(rng, {3, 4, 5});
    auto pr = probe_for(rng, {3, 6, 5});
    check("concat", {a, b}, [pr](const auto& in) { return pr(concat<double>({in[0], in[1]}, 1)); });
    auto c = random_tensor(rng, {4, 6, 4});
    auto prn = probe_for(rng, {4, 3, 4});
    check("narrow", {c}, [prn](const auto& in) { return prn(narrow(in[0], 1, 2, 3)); });
  }
  {
    auto a = random_tensor(rng, s3);
    check("sum", {a}, [](const auto& in) { return mul(sum(in[0]), sum(in[0])); });
    auto b = random_tensor(rng, s3);
    check("mean", {b}, [](const auto& in) { return mul(mean(in[0]), mean(in[0])); });
  }
  {
    auto x = random_tensor(rng, {8, 10});
    const std::vector<std::size_t> labels{0, 9, 3, 3, 1, 7, 2, 5};
    auto pr = probe_for(rng, {8});
    check("pick", {x}, [pr, labels](const auto& in) { return pr(pick(in[0], labels)); });
    auto y = random_tensor(rng, {8, 10});
    auto prl = probe_for(rng, {8, 10});
    check("l2_normalize", {y}, [prl](const auto& in) { return prl(l2_normalize(in[0])); });
  }

  // Whole encoder block.
  {
    TurboConfig c = tiny_config(Task::classify);
    TurboNet<double> net(c, seed);
    std::vector<Tensor64> params;
    for (const auto& np : net.parameters()) {
      if (np.name.rfind("encoder.blocks.0.", 0) != 0) continue;
      auto t = np.tensor;
      for (double& v : t.mutable_data()) v += rng.uniform(-0.3, 0.3);
      params.push_back(t);
    }
    auto x = random_tensor(rng, {2, 5, c.enc_dim});
    x.set_requires_grad(false);
    auto pr = probe_for(rng, {2, 5, c.enc_dim});
    Block<double> block{
        {net.parameter("encoder.blocks.0.norm1.gain"), net.parameter("encoder.blocks.0.norm1.bias")},
        {net.parameter("encoder.blocks.0.attn.qkv.weight"),
         net.parameter("encoder.blocks.0.attn.qkv.bias")},
        {net.parameter("encoder.blocks.0.attn.proj.weight"),
         net.parameter("encoder.blocks.0.attn.proj.bias")},
        {net.parameter("encoder.blocks.0.norm2.gain"), net.parameter("encoder.blocks.0.norm2.bias")},
        {net.parameter("encoder.blocks.0.mlp.fc1.weight"),
         net.parameter("encoder.blocks.0.mlp.fc1.bias")},
        {net.parameter("encoder.blocks.0.mlp.fc2.weight"),
         net.parameter("encoder.blocks.0.mlp.fc2.bias")},
        c.enc_heads};
    check("encoder_block", params, [pr, x, block](const auto&) { return pr(block(x)); });
  }

  report.entries.push_back(model_entry("model_step_classify", Task::classify, seed, tolerance));
  report.entries.push_back(model_entry("model_step_contrast", Task::contrast, seed, tolerance));
  return report;
}

}  // namespace turbo
