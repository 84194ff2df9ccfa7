// SPDX-License-Identifier: Apache-2.0
#include "turbo/checkpoint.hpp"

#include <bit>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <map>

#include <json.hpp>

#include "turbo/errors.hpp"
#include "turbo/run_config.hpp"

namespace turbo {

using nlohmann::ordered_json;

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void put_floats(std::string& out, const std::vector<float>& data) {
  const std::size_t at = out.size();
  out.resize(at + data.size() * 4);
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(data[i]);
    for (int b = 0; b < 4; ++b) out[at + 4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
  }
}

std::vector<float> get_floats(const unsigned char* p, std::size_t count) {
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 3; b >= 0; --b) bits = (bits << 8) | p[4 * i + b];
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct RawCheckpoint {
  ordered_json header;
  std::string_view blobs;
};

RawCheckpoint split(const std::string& bytes, const std::string& what) {
  const std::size_t magic_len = sizeof(kCheckpointMagic) - 1;
  if (bytes.size() < magic_len + 8 || bytes.compare(0, magic_len, kCheckpointMagic) != 0) {
    throw DataError(what + " is not a checkpoint (bad magic)");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t header_len = get_u64(p + magic_len);
  if (header_len > bytes.size() - magic_len - 8) throw DataError(what + ": truncated header");
  RawCheckpoint raw;
  try {
    raw.header = ordered_json::parse(bytes.substr(magic_len + 8, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(what + ": bad header: " + e.what());
  }
  raw.blobs = std::string_view(bytes).substr(magic_len + 8 + header_len);
  return raw;
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Checkpoint make_checkpoint(const TurboConfig& config, const TurboNet<float>& net,
                           std::size_t step, const OptimState* optim) {
  Checkpoint c;
  c.config = config;
  c.step = step;
  c.created = utc_now();
  for (const auto& p : net.parameters()) {
    c.tensors.push_back({p.name, p.tensor.shape(),
                         std::vector<float>(p.tensor.data().begin(), p.tensor.data().end())});
  }
  if (optim) c.optim = *optim;
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  ordered_json header;
  header["version"] = kCheckpointVersion;
  header["created"] = ckpt.created;
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : config_to_map(ckpt.config)) cfg[k] = v;
  header["config"] = cfg;
  header["step"] = ckpt.step;

  std::string blobs;
  ordered_json manifest = ordered_json::array();
  auto add = [&](const std::string& name, const Shape& shape, const std::vector<float>& data) {
    if (shape_numel(shape) != data.size()) throw ContractError("tensor '" + name + "' size mismatch");
    manifest.push_back({{"name", name},
                        {"shape", shape},
                        {"dtype", "f32"},
                        {"offset", blobs.size()},
                        {"bytes", data.size() * 4}});
    put_floats(blobs, data);
  };
  for (const auto& t : ckpt.tensors) add(t.name, t.shape, t.data);
  if (ckpt.optim) {
    const OptimState& o = *ckpt.optim;
    header["optim"] = {{"step", o.step},
                       {"beta1", o.hyper.beta1},
                       {"beta2", o.hyper.beta2},
                       {"eps", o.hyper.eps},
                       {"weight_decay", o.hyper.weight_decay}};
    for (std::size_t k = 0; k < o.names.size(); ++k) {
      add("optim.m." + o.names[k], {o.m[k].size()}, o.m[k]);
      add("optim.v." + o.names[k], {o.v[k].size()}, o.v[k]);
    }
  }
  header["tensors"] = manifest;

  const std::string header_text = header.dump();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  put_u64(out, header_text.size());
  out += header_text;
  out += blobs;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const RawCheckpoint raw = split(bytes, path.string());
  const auto& h = raw.header;
  Checkpoint c;
  try {
    if (h.at("version").get<int>() != kCheckpointVersion) {
      throw DataError(path.string() + ": unsupported checkpoint version");
    }
    c.created = h.value("created", "");
    c.step = h.at("step").get<std::size_t>();
    std::map<std::string, std::string> cfg;
    for (const auto& [k, v] : h.at("config").items()) cfg[k] = v.get<std::string>();
    c.config = config_from_map(cfg, path.string());

    std::map<std::string, std::vector<float>> optim_buffers;
    std::size_t expected_offset = 0;
    for (const auto& entry : h.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto nbytes = entry.at("bytes").get<std::size_t>();
      if (entry.at("dtype").get<std::string>() != "f32") throw DataError("unsupported dtype for " + name);
      if (nbytes != shape_numel(shape) * 4 || offset != expected_offset ||
          offset + nbytes > raw.blobs.size()) {
        throw DataError(path.string() + ": inconsistent manifest entry '" + name + "'");
      }
      expected_offset += nbytes;
      auto data = get_floats(reinterpret_cast<const unsigned char*>(raw.blobs.data()) + offset,
                             shape_numel(shape));
      if (name.rfind("optim.", 0) == 0) {
        optim_buffers[name] = std::move(data);
      } else {
        c.tensors.push_back({name, shape, std::move(data)});
      }
    }
    if (expected_offset != raw.blobs.size()) throw DataError(path.string() + ": trailing bytes");
    if (h.contains("optim")) {
      OptimState o;
      const auto& oh = h.at("optim");
      o.step = oh.at("step").get<std::uint64_t>();
      o.hyper.beta1 = oh.at("beta1").get<double>();
      o.hyper.beta2 = oh.at("beta2").get<double>();
      o.hyper.eps = oh.at("eps").get<double>();
      o.hyper.weight_decay = oh.at("weight_decay").get<double>();
      for (const auto& t : c.tensors) {
        auto m = optim_buffers.find("optim.m." + t.name);
        auto v = optim_buffers.find("optim.v." + t.name);
        if (m == optim_buffers.end() || v == optim_buffers.end()) {
          throw DataError(path.string() + ": optimizer state missing for " + t.name);
        }
        o.names.push_back(t.name);
        o.m.push_back(std::move(m->second));
        o.v.push_back(std::move(v->second));
      }
      c.optim = std::move(o);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed header: " + e.what());
  }
  return c;
}

void restore_parameters(TurboNet<float>& net, const Checkpoint& ckpt) {
  std::map<std::string, const StoredTensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name[t.name] = &t;
  for (const auto& p : net.parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ConfigError("checkpoint lacks parameter '" + p.name + "'");
    if (it->second->shape != p.tensor.shape()) {
      throw ConfigError("checkpoint parameter '" + p.name + "' has shape " +
                        shape_str(it->second->shape) + ", model expects " +
                        shape_str(p.tensor.shape()));
    }
    auto t = p.tensor;
    std::copy(it->second->data.begin(), it->second->data.end(), t.mutable_data().begin());
  }
  if (by_name.size() != net.parameters().size()) {
    throw ConfigError("checkpoint holds parameters the model does not have");
  }
}

std::string checkpoint_digest(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  RawCheckpoint raw = split(bytes, path.string());
  raw.header.erase("created");
  if (raw.header.contains("config")) raw.header["config"].erase("out_dir");
  std::uint64_t h = fnv1a(raw.header.dump());
  h = fnv1a(raw.blobs, h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace turbo
