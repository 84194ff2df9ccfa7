// SPDX-License-Identifier: Apache-2.0
//
// turbo: train, eval, flops, gradcheck, gen-data.
// Exit codes: 0 ok, 1 failed check or runtime error, 2 usage or config error.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "turbo/checkpoint.hpp"
#include "turbo/cost_model.hpp"
#include "turbo/errors.hpp"
#include "turbo/gradcheck.hpp"
#include "turbo/metric_log.hpp"
#include "turbo/run_config.hpp"
#include "turbo/synth_data.hpp"
#include "turbo/train.hpp"

namespace fs = std::filesystem;
using namespace turbo;

namespace {

struct Datasets {
  ClipDataset clips;
  LongVideoDataset longs;
};

SplitSizes splits_of(const TurboConfig& c) { return {c.train_size, c.val_size, c.test_size}; }

Datasets build_data(const TurboConfig& c) {
  Datasets d;
  switch (c.dataset) {
    case DatasetKind::shapes: d.clips = make_shapes_dataset(splits_of(c), c.seed, false); break;
    case DatasetKind::pairs: d.clips = make_shapes_dataset(splits_of(c), c.seed, true); break;
    case DatasetKind::longvideo: d.longs = make_long_dataset(splits_of(c), c.seed); break;
  }
  return d;
}

TurboConfig preset_by_name(const std::string& name) {
  if (name == "toy") return toy_preset(Task::classify);
  if (name == "reference") return reference_preset();
  if (name == "calibration") return calibration_preset();
  if (name == "f16") return long_preset(16);
  if (name == "f32") return long_preset(32);
  if (name == "f64") return long_preset(64);
  throw ConfigError("unknown preset '" + name +
                    "' (toy, reference, calibration, f16, f32, f64)");
}

EvalReport run_eval(const TurboNet<float>& net, const TurboConfig& c, const Datasets& data) {
  switch (c.task) {
    case Task::classify: return evaluate_classify(net, data.clips.test, c.infer_mask, c.seed);
    case Task::contrast:
      return evaluate_retrieval(net, data.clips.test, TextEmbedder(c.seed, c.text_dim),
                                c.batch_size, c.seed, c.infer_mask);
    case Task::long_classify:
      return evaluate_long(net, data.longs.test, c.multicrop, c.seed, c.infer_mask);
  }
  throw ConfigError("unsupported task");
}

nlohmann::ordered_json report_json(const EvalReport& r, std::size_t step) {
  nlohmann::ordered_json j;
  j["task"] = std::string(to_string(r.task));
  j["step"] = step;
  j["metric_name"] = r.metric_name;
  j["value"] = r.value;
  j["samples"] = r.samples;
  j["mean_loss"] = r.mean_loss;
  j["flops_per_step"] = r.flops_per_step;
  return j;
}

int cmd_train(const std::string& config_path, const std::optional<std::string>& resume,
              const std::optional<std::uint64_t>& seed, bool with_optim,
              std::size_t stop_at_step, bool quiet) {
  TurboConfig c = load_run_config(config_path);
  if (seed) c.seed = *seed;
  const fs::path out = c.out_dir;
  fs::create_directories(out);

  ModelState state = ModelState::fresh(c);
  if (resume) {
    const Checkpoint ck = load_checkpoint(*resume);
    if (ck.config.task != c.task) throw ConfigError("checkpoint task does not match the config");
    restore_parameters(*state.net, ck);
    state.step = ck.step;
    if (ck.optim) state.optim = *ck.optim;
  }
  MetricLog log(out / "metrics.jsonl", resume.has_value());
  TrainHooks hooks;
  hooks.log = &log;
  hooks.stop_at_step = stop_at_step;
  hooks.progress = !quiet;
  hooks.on_checkpoint = [&](const ModelState& s) {
    const Checkpoint ck = make_checkpoint(s.config, *s.net, s.step, with_optim ? &s.optim : nullptr);
    save_checkpoint(out / ("step_" + std::to_string(s.step) + ".ckpt"), ck);
    save_checkpoint(out / "final.ckpt", ck);
  };

  const Datasets data = build_data(c);
  TrainResult tr;
  switch (c.task) {
    case Task::classify: tr = train_classify(state, data.clips, hooks); break;
    case Task::contrast:
      tr = train_contrast(state, data.clips, TextEmbedder(c.seed, c.text_dim), hooks);
      break;
    case Task::long_classify: tr = train_long(state, data.longs, hooks); break;
  }
  const EvalReport r = run_eval(*state.net, c, data);
  log.write_eval({c.task, state.step, r.metric_name, r.value, r.wall_seconds});
  auto j = report_json(r, state.step);
  j["train_steps"] = tr.steps;
  j["mean_step_ms"] = tr.mean_step_ms;
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::optional<std::string>& task,
             const std::optional<double>& infer_mask, const std::optional<std::size_t>& multicrop,
             const std::optional<std::uint64_t>& seed) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  TurboConfig c = ck.config;
  if (task && parse_task(*task) != c.task) {
    throw ConfigError("checkpoint was trained for task '" + std::string(to_string(c.task)) +
                      "', not '" + *task + "'");
  }
  if (infer_mask) c.infer_mask = *infer_mask;
  if (multicrop) c.multicrop = *multicrop;
  if (seed) c.seed = *seed;
  c.validate();
  TurboNet<float> net(c, c.seed);
  restore_parameters(net, ck);
  const Datasets data = build_data(c);
  auto j = report_json(run_eval(net, c, data), ck.step);
  j["infer_mask"] = c.infer_mask;
  if (c.task == Task::long_classify) j["multicrop"] = c.multicrop;
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_flops(const std::optional<std::string>& config_path, const std::string& preset,
              const std::optional<std::string>& sweep_text) {
  const TurboConfig c = config_path ? load_run_config(*config_path) : preset_by_name(preset);
  const auto pairs = sweep_text ? parse_sweep(*sweep_text) : default_sweep_pairs();
  write_sweep_csv(std::cout, sweep(c, pairs));
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, const std::optional<std::string>& fault) {
  if (fault) {
    const auto op = op_from_name(*fault);
    if (!op) throw ConfigError("unknown op '" + *fault + "' for --inject-fault");
    inject_backward_fault(*op);
  }
  const GradcheckReport report = run_gradcheck_suite(seed);
  inject_backward_fault(std::nullopt);
  std::printf("%-22s %8s %14s  %s\n", "op", "coords", "max_rel_err", "status");
  for (const auto& e : report.entries) {
    std::printf("%-22s %8zu %14.3e  %s\n", e.name.c_str(), e.coords, e.max_rel_err,
                e.passed ? "ok" : "FAIL");
  }
  if (report.passed()) {
    std::printf("gradcheck passed (tolerance %.0e)\n", report.tolerance);
    return 0;
  }
  std::printf("gradcheck FAILED:");
  for (const auto& name : report.failures()) std::printf(" %s", name.c_str());
  std::printf("\n");
  return 1;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 const std::optional<std::uint64_t>& seed) {
  TurboConfig c = load_run_config(config_path);
  if (seed) c.seed = *seed;
  const Datasets data = build_data(c);
  std::size_t written = 0;
  auto dump_clips = [&](const std::string& split, const std::vector<VideoClip>& clips) {
    const fs::path dir = fs::path(out_dir) / split;
    fs::create_directories(dir);
    for (std::size_t i = 0; i < clips.size(); ++i) {
      write_clip_cache(dir / ("clip_" + std::to_string(i) + ".bin"), clips[i]);
      ++written;
    }
  };
  auto dump_longs = [&](const std::string& split, const std::vector<LongVideo>& videos) {
    const fs::path dir = fs::path(out_dir) / split;
    fs::create_directories(dir);
    for (std::size_t i = 0; i < videos.size(); ++i) {
      VideoClip clip;
      clip.frames = videos[i].render_all();
      clip.label = videos[i].activity;
      clip.meta.seed = videos[i].seed;
      write_clip_cache(dir / ("video_" + std::to_string(i) + ".bin"), clip);
      ++written;
    }
  };
  if (c.dataset == DatasetKind::longvideo) {
    dump_longs("train", data.longs.train);
    dump_longs("val", data.longs.val);
    dump_longs("test", data.longs.test);
  } else {
    dump_clips("train", data.clips.train);
    dump_clips("val", data.clips.val);
    dump_clips("test", data.clips.test);
  }
  std::printf("wrote %zu samples to %s\n", written, out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Turbo training for video transformers"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> resume;
  std::optional<std::uint64_t> seed;
  bool with_optim = false;
  bool quiet = false;
  std::size_t stop_at = 0;
  auto* train = app.add_subcommand("train", "Train a model from a key=value config");
  train->add_option("config", config_path, "Run config file")->required();
  train->add_option("--resume", resume, "Checkpoint to resume from");
  train->add_option("--seed", seed, "Override the config seed");
  train->add_flag("--with-optim", with_optim, "Store optimizer state in checkpoints");
  train->add_option("--stop-at-step", stop_at, "Stop at this global step");
  train->add_flag("--quiet", quiet, "No per-epoch progress on stderr");

  std::string ckpt_path;
  std::optional<std::string> task;
  std::optional<double> infer_mask;
  std::optional<std::size_t> multicrop;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("checkpoint", ckpt_path, "Checkpoint file")->required();
  eval->add_option("--task", task, "Expected task; mismatch is an error");
  eval->add_option("--infer-mask", infer_mask, "Inference mask ratio");
  eval->add_option("--multicrop", multicrop, "Repeats for long-video inference");
  eval->add_option("--seed", seed, "Override the seed");

  std::optional<std::string> flops_config;
  std::string preset = "calibration";
  std::optional<std::string> sweep_text;
  auto* flops = app.add_subcommand("flops", "Analytic GFLOPs sweep as CSV");
  flops->add_option("--config", flops_config, "Run config file");
  flops->add_option("--preset", preset, "toy, reference, calibration, f16, f32, f64");
  flops->add_option("--sweep", sweep_text, "Pairs m:r separated by commas");
  flops->add_option("--seed", seed, "Accepted for uniformity; the sweep is deterministic");

  std::uint64_t gc_seed = 0;
  std::optional<std::string> fault;
  auto* gradcheck = app.add_subcommand("gradcheck", "64-bit finite-difference gradient suite");
  gradcheck->add_option("--seed", gc_seed, "Seed for inputs and sampled coordinates");
  gradcheck->add_option("--inject-fault", fault, "Negate the backward rule of this op");

  std::string data_config;
  std::string data_out;
  auto* gen = app.add_subcommand("gen-data", "Write the synthetic dataset to cache files");
  gen->add_option("config", data_config, "Run config file")->required();
  gen->add_option("--out", data_out, "Output directory")->required();
  gen->add_option("--seed", seed, "Override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(config_path, resume, seed, with_optim, stop_at, quiet);
    if (*eval) return cmd_eval(ckpt_path, task, infer_mask, multicrop, seed);
    if (*flops) return cmd_flops(flops_config, preset, sweep_text);
    if (*gradcheck) return cmd_gradcheck(gc_seed, fault);
    if (*gen) return cmd_gen_data(data_config, data_out, seed);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
