// SPDX-License-Identifier: Apache-2.0
#include "turbo/run_config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "turbo/errors.hpp"

namespace turbo {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  errno = 0;
  const unsigned long long x = std::strtoull(v.c_str(), nullptr, 10);
  if (errno == ERANGE) throw ConfigError("key '" + key + "' value out of range: " + v);
  return static_cast<std::size_t>(x);
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE) {
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  }
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "' expects true or false, got '" + v + "'");
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = {
      "task", "dataset", "frames", "image_size", "patch_t", "patch_h", "patch_w",
      "enc_depth", "enc_dim", "enc_heads", "dec_depth", "dec_dim", "dec_heads",
      "num_classes", "proj_dim", "text_dim", "mask_ratio", "recon_ratio",
      "batch_size", "epochs", "base_lr", "min_lr", "warmup_epochs", "weight_decay",
      "clip_grad", "seed", "normalize_embeddings", "norm_pix_loss", "temperature",
      "log_base", "train_size", "val_size", "test_size", "infer_mask", "multicrop",
      "out_dir", "checkpoint_every",
  };
  return keys;
}

void apply_config_key(TurboConfig& c, const std::string& key, const std::string& v) {
  auto geom = [&](std::size_t frames, std::size_t h, std::size_t w, std::size_t pt,
                  std::size_t ph, std::size_t pw) {
    try {
      c.geometry = PatchGeometry::make(frames, h, w, pt, ph, pw);
    } catch (const Error& e) {
      throw ConfigError(std::string("invalid geometry: ") + e.what());
    }
  };
  const PatchGeometry& g = c.geometry;
  if (key == "task") c.task = parse_task(v);
  else if (key == "dataset") c.dataset = parse_dataset(v);
  else if (key == "frames") geom(to_size(key, v), g.height, g.width, g.patch_t, g.patch_h, g.patch_w);
  else if (key == "image_size") {
    const std::size_t s = to_size(key, v);
    geom(g.frames, s, s, g.patch_t, g.patch_h, g.patch_w);
  } else if (key == "patch_t") geom(g.frames, g.height, g.width, to_size(key, v), g.patch_h, g.patch_w);
  else if (key == "patch_h") geom(g.frames, g.height, g.width, g.patch_t, to_size(key, v), g.patch_w);
  else if (key == "patch_w") geom(g.frames, g.height, g.width, g.patch_t, g.patch_h, to_size(key, v));
  else if (key == "enc_depth") c.enc_depth = to_size(key, v);
  else if (key == "enc_dim") c.enc_dim = to_size(key, v);
  else if (key == "enc_heads") c.enc_heads = to_size(key, v);
  else if (key == "dec_depth") c.dec_depth = to_size(key, v);
  else if (key == "dec_dim") c.dec_dim = to_size(key, v);
  else if (key == "dec_heads") c.dec_heads = to_size(key, v);
  else if (key == "num_classes") c.num_classes = to_size(key, v);
  else if (key == "proj_dim") c.proj_dim = to_size(key, v);
  else if (key == "text_dim") c.text_dim = to_size(key, v);
  else if (key == "mask_ratio") c.mask_ratio = to_double(key, v);
  else if (key == "recon_ratio") c.recon_ratio = to_double(key, v);
  else if (key == "batch_size") c.batch_size = to_size(key, v);
  else if (key == "epochs") c.epochs = to_double(key, v);
  else if (key == "base_lr") c.base_lr = to_double(key, v);
  else if (key == "min_lr") c.min_lr = to_double(key, v);
  else if (key == "warmup_epochs") c.warmup_epochs = to_double(key, v);
  else if (key == "weight_decay") c.weight_decay = to_double(key, v);
  else if (key == "clip_grad") c.clip_grad = to_double(key, v);
  else if (key == "seed") c.seed = to_size(key, v);
  else if (key == "normalize_embeddings") c.normalize_embeddings = to_bool(key, v);
  else if (key == "norm_pix_loss") c.norm_pix_loss = to_bool(key, v);
  else if (key == "temperature") c.temperature = to_double(key, v);
  else if (key == "log_base") c.log_base = parse_log_base(v);
  else if (key == "train_size") c.train_size = to_size(key, v);
  else if (key == "val_size") c.val_size = to_size(key, v);
  else if (key == "test_size") c.test_size = to_size(key, v);
  else if (key == "infer_mask") c.infer_mask = to_double(key, v);
  else if (key == "multicrop") c.multicrop = to_size(key, v);
  else if (key == "out_dir") c.out_dir = v;
  else if (key == "checkpoint_every") c.checkpoint_every = to_size(key, v);
  else throw ConfigError("unknown key '" + key + "'");
}

namespace {

struct Entry {
  std::string value;
  std::size_t line = 0;
};

TurboConfig build(const std::map<std::string, Entry>& entries, const std::string& source) {
  auto where = [&](std::size_t line) {
    return line ? source + ":" + std::to_string(line) + ": " : source + ": ";
  };
  const auto task_it = entries.find("task");
  if (task_it == entries.end()) throw ConfigError(source + ": missing required key 'task'");
  TurboConfig c;
  try {
    const Task task = parse_task(task_it->second.value);
    if (task == Task::long_classify) {
      // Long presets are keyed by frame count; fall back to F16.
      std::size_t frames = 16;
      if (auto f = entries.find("frames"); f != entries.end()) {
        const std::size_t want = to_size("frames", f->second.value);
        if (want == 16 || want == 32 || want == 64) frames = want;
      }
      c = long_preset(frames);
    } else {
      c = toy_preset(task);
    }
  } catch (const ConfigError& e) {
    throw ConfigError(where(task_it->second.line) + e.what());
  }
  // Geometry keys in a fixed order so frame/size changes compose.
  for (const auto& key : run_config_keys()) {
    const auto it = entries.find(key);
    if (it == entries.end() || key == "task") continue;
    try {
      apply_config_key(c, key, it->second.value);
    } catch (const ConfigError& e) {
      throw ConfigError(where(it->second.line) + e.what());
    }
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return c;
}

}  // namespace

TurboConfig parse_run_config(const std::string& text, const std::string& source) {
  std::map<std::string, Entry> entries;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  const auto& known = run_config_keys();
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    const std::string at = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(at + "expected key = value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(at + "empty key");
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(at + "unknown key '" + key + "'");
    }
    if (entries.count(key)) {
      throw ConfigError(at + "key '" + key + "' repeated (first on line " +
                        std::to_string(entries[key].line) + ")");
    }
    entries[key] = {value, line_no};
  }
  return build(entries, source);
}

TurboConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

std::map<std::string, std::string> config_to_map(const TurboConfig& c) {
  const PatchGeometry& g = c.geometry;
  if (g.height != g.width) throw ConfigError("config files describe square frames only");
  std::map<std::string, std::string> m;
  m["task"] = std::string(to_string(c.task));
  m["dataset"] = std::string(to_string(c.dataset));
  m["frames"] = std::to_string(g.frames);
  m["image_size"] = std::to_string(g.height);
  m["patch_t"] = std::to_string(g.patch_t);
  m["patch_h"] = std::to_string(g.patch_h);
  m["patch_w"] = std::to_string(g.patch_w);
  m["enc_depth"] = std::to_string(c.enc_depth);
  m["enc_dim"] = std::to_string(c.enc_dim);
  m["enc_heads"] = std::to_string(c.enc_heads);
  m["dec_depth"] = std::to_string(c.dec_depth);
  m["dec_dim"] = std::to_string(c.dec_dim);
  m["dec_heads"] = std::to_string(c.dec_heads);
  m["num_classes"] = std::to_string(c.num_classes);
  m["proj_dim"] = std::to_string(c.proj_dim);
  m["text_dim"] = std::to_string(c.text_dim);
  m["mask_ratio"] = fmt_double(c.mask_ratio);
  m["recon_ratio"] = fmt_double(c.recon_ratio);
  m["batch_size"] = std::to_string(c.batch_size);
  m["epochs"] = fmt_double(c.epochs);
  m["base_lr"] = fmt_double(c.base_lr);
  m["min_lr"] = fmt_double(c.min_lr);
  m["warmup_epochs"] = fmt_double(c.warmup_epochs);
  m["weight_decay"] = fmt_double(c.weight_decay);
  m["clip_grad"] = fmt_double(c.clip_grad);
  m["seed"] = std::to_string(c.seed);
  m["normalize_embeddings"] = fmt_bool(c.normalize_embeddings);
  m["norm_pix_loss"] = fmt_bool(c.norm_pix_loss);
  m["temperature"] = fmt_double(c.temperature);
  m["log_base"] = std::string(to_string(c.log_base));
  m["train_size"] = std::to_string(c.train_size);
  m["val_size"] = std::to_string(c.val_size);
  m["test_size"] = std::to_string(c.test_size);
  m["infer_mask"] = fmt_double(c.infer_mask);
  m["multicrop"] = std::to_string(c.multicrop);
  m["out_dir"] = c.out_dir;
  m["checkpoint_every"] = std::to_string(c.checkpoint_every);
  return m;
}

std::string config_to_text(const TurboConfig& c) {
  const auto m = config_to_map(c);
  std::string out;
  for (const auto& key : run_config_keys()) out += key + " = " + m.at(key) + "\n";
  return out;
}

TurboConfig config_from_map(const std::map<std::string, std::string>& values,
                            const std::string& source) {
  std::map<std::string, Entry> entries;
  const auto& known = run_config_keys();
  for (const auto& [k, v] : values) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw ConfigError(source + ": unknown key '" + k + "'");
    }
    entries[k] = {v, 0};
  }
  return build(entries, source);
}

}  // namespace turbo
