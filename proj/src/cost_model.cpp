// SPDX-License-Identifier: Apache-2.0
#include "turbo/cost_model.hpp"

#include <cstdio>
#include <ostream>
#include <sstream>

#include "turbo/errors.hpp"
#include "turbo/partition.hpp"

namespace turbo {

namespace {

double sq(double x) { return x * x; }

/// Floats a block keeps for backward: block input, qkv, attention matrix,
/// attention output, residual input of the MLP, and the 4x hidden layer.
double block_activation(double len, double dim, double heads) {
  return len * dim * 10.0 + heads * len * len;
}

std::size_t linear_params(std::size_t in, std::size_t out) { return in * out + out; }

std::size_t block_params(std::size_t dim) {
  return 2 * dim                          // norm1
         + linear_params(dim, 3 * dim)    // qkv
         + linear_params(dim, dim)        // proj
         + 2 * dim                        // norm2
         + linear_params(dim, 4 * dim)    // fc1
         + linear_params(4 * dim, dim);   // fc2
}

}  // namespace

double block_flops(std::size_t seq_len, std::size_t dim) {
  const double l = static_cast<double>(seq_len);
  const double d = static_cast<double>(dim);
  return 4.0 * l * d * d + 2.0 * l * l * d + 8.0 * l * d * d;
}

CostReport flops_estimate(const TurboConfig& config, double mask_ratio, double recon_ratio) {
  const std::size_t n = config.geometry.num_tokens();
  const PartitionSizes sizes = partition_sizes(n, mask_ratio, recon_ratio);
  const double p = static_cast<double>(config.geometry.patch_dim());
  const double d = static_cast<double>(config.enc_dim);
  const double dd = static_cast<double>(config.dec_dim);

  CostReport r;
  r.mask_ratio = mask_ratio;
  r.recon_ratio = recon_ratio;
  r.visible_tokens = sizes.visible;
  r.recon_tokens = sizes.recon;
  r.param_count = param_count(config);

  const double embed = static_cast<double>(sizes.visible) * p * d;
  const std::size_t enc_len = sizes.visible + 1;
  double encoder = 0.0;
  for (std::size_t i = 0; i < config.enc_depth; ++i) {
    BlockCost b;
    b.name = "encoder.blocks." + std::to_string(i);
    b.flops = block_flops(enc_len, config.enc_dim);
    b.attention_flops = 2.0 * sq(static_cast<double>(enc_len)) * d;
    b.activation_floats =
        block_activation(static_cast<double>(enc_len), d, static_cast<double>(config.enc_heads));
    b.attention_floats = static_cast<double>(config.enc_heads) * sq(static_cast<double>(enc_len));
    encoder += b.flops;
    r.activation_floats += b.activation_floats;
    r.attention_floats += b.attention_floats;
    r.blocks.push_back(std::move(b));
  }
  r.activation_floats += static_cast<double>(sizes.visible) * p;  // embed input

  double decoder = 0.0;
  if (sizes.recon > 0) {
    const std::size_t dec_len = sizes.visible + sizes.recon;
    const double l = static_cast<double>(dec_len);
    decoder += static_cast<double>(sizes.visible) * d * dd;  // projection of the encoded tokens
    for (std::size_t i = 0; i < config.dec_depth; ++i) {
      BlockCost b;
      b.name = "decoder.blocks." + std::to_string(i);
      b.flops = block_flops(dec_len, config.dec_dim);
      b.attention_flops = 2.0 * sq(l) * dd;
      b.activation_floats = block_activation(l, dd, static_cast<double>(config.dec_heads));
      b.attention_floats = static_cast<double>(config.dec_heads) * sq(l);
      decoder += b.flops;
      r.activation_floats += b.activation_floats;
      r.attention_floats += b.attention_floats;
      r.blocks.push_back(std::move(b));
    }
    decoder += static_cast<double>(sizes.recon) * dd * p;  // prediction on the recon slots only
  }

  double head = 0.0;
  if (config.task == Task::contrast) {
    const double pd = static_cast<double>(config.proj_dim);
    head = d * pd + pd * pd;
  } else {
    head = d * static_cast<double>(config.num_classes);
  }

  r.embed_gflops = embed / 1e9;
  r.encoder_gflops = encoder / 1e9;
  r.decoder_gflops = decoder / 1e9;
  r.head_gflops = head / 1e9;
  r.total_gflops = (embed + encoder + decoder + head) / 1e9;
  return r;
}

std::size_t param_count(const TurboConfig& config) {
  const std::size_t p = config.geometry.patch_dim();
  const std::size_t d = config.enc_dim;
  const std::size_t dd = config.dec_dim;
  std::size_t total = linear_params(p, d) + d;  // patch embed + CLS
  total += config.enc_depth * block_params(d) + 2 * d;
  total += linear_params(d, dd) + dd;  // decoder embed + mask token
  total += config.dec_depth * block_params(dd) + 2 * dd + linear_params(dd, p);
  if (config.task == Task::contrast) {
    const std::size_t pd = config.proj_dim;
    total += linear_params(d, pd) + linear_params(pd, pd);
    total += linear_params(config.text_dim, pd) + linear_params(pd, pd);
  } else {
    total += linear_params(d, config.num_classes);
  }
  return total;
}

double activation_memory(const TurboConfig& config, double mask_ratio, double recon_ratio,
                         std::size_t batch) {
  return flops_estimate(config, mask_ratio, recon_ratio).activation_floats *
         static_cast<double>(batch);
}

std::vector<std::pair<double, double>> default_sweep_pairs() {
  return {{0.0, 0.0}, {0.5, 0.5}, {0.75, 0.75}, {0.75, 0.25}, {0.9, 0.9}, {0.9, 0.1}};
}

std::vector<std::pair<double, double>> parse_sweep(const std::string& text) {
  std::vector<std::pair<double, double>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("sweep entry '" + item + "' is not of the form m:r");
    }
    try {
      std::size_t used_m = 0;
      std::size_t used_r = 0;
      const std::string ms = item.substr(0, colon);
      const std::string rs = item.substr(colon + 1);
      const double m = std::stod(ms, &used_m);
      const double r = std::stod(rs, &used_r);
      if (used_m != ms.size() || used_r != rs.size()) throw std::invalid_argument(item);
      if (!(m >= 0.0 && m <= 1.0) || !(r >= 0.0 && r <= m)) {
        throw ConfigError("sweep entry '" + item + "' needs 0 <= r <= m <= 1");
      }
      out.emplace_back(m, r);
    } catch (const std::logic_error&) {
      throw ConfigError("sweep entry '" + item + "' is not numeric");
    }
  }
  return out;
}

std::vector<CostReport> sweep(const TurboConfig& config,
                              const std::vector<std::pair<double, double>>& pairs) {
  std::vector<CostReport> rows;
  rows.reserve(pairs.size());
  for (const auto& [m, r] : pairs) rows.push_back(flops_estimate(config, m, r));
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<CostReport>& rows) {
  os << "mask_pct,recon_pct,encoder_gflops,decoder_gflops,total_gflops,activation_mb\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%g,%g,%.3f,%.3f,%.3f,%.3f\n", r.mask_ratio * 100.0,
                  r.recon_ratio * 100.0, r.encoder_gflops, r.decoder_gflops, r.total_gflops,
                  r.activation_mb());
    os << line;
  }
}

}  // namespace turbo
