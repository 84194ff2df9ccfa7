#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <sys/wait.h>

#include "turbo/checkpoint.hpp"
#include "turbo/errors.hpp"
#include "turbo/metric_log.hpp"
#include "turbo/rng.hpp"
#include "turbo/run_config.hpp"
#include "turbo/synth_data.hpp"
#include "turbo/train.hpp"

using namespace turbo;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("turbo_cli_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code = 0;
  std::string out;
};

Run run_cli(const std::string& args) {
  const std::string cmd = std::string(TURBO_CLI_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

// A config small enough for a few seconds of training.
std::string tiny_config_text(const fs::path& out_dir) {
  return "task = classify\n"
         "enc_depth = 1\n"
         "enc_dim = 32\n"
         "enc_heads = 2\n"
         "dec_depth = 1\n"
         "dec_dim = 16\n"
         "mask_ratio = 0.75\n"
         "recon_ratio = 0.25\n"
         "batch_size = 16\n"
         "epochs = 2\n"
         "warmup_epochs = 1\n"
         "train_size = 64\n"
         "test_size = 32\n"
         "checkpoint_every = 4\n"
         "out_dir = " + out_dir.string() + "\n";
}

}  // namespace

TEST_CASE("run config parsing") {
  const auto c = parse_run_config("# comment\ntask = classify\n\nmask_ratio = 0.75\nrecon_ratio=0.25\n");
  CHECK(c.task == Task::classify);
  CHECK(c.mask_ratio == 0.75);
  CHECK(c.recon_ratio == 0.25);
  CHECK(c.enc_dim == toy_preset().enc_dim);

  const auto l = parse_run_config("task = long_classify\nframes = 32\n");
  CHECK(l.mask_ratio == 0.75);
  CHECK(l.geometry.frames == 32);
}

TEST_CASE("run config diagnostics carry line numbers") {
  auto message = [](const std::string& text) {
    try {
      parse_run_config(text, "cfg");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("mask_ratio = 0.5\n").find("missing required key 'task'") != std::string::npos);
  CHECK(message("task = classify\nmask_ratoi = 0.5\n").find("cfg:2:") != std::string::npos);
  CHECK(message("task = classify\nmask_ratio = 0.5\nmask_ratio = 0.6\n").find("cfg:3:") != std::string::npos);
  CHECK(message("task = classify\nbatch_size = -4\n").find("cfg:2:") != std::string::npos);
  CHECK(message("task = classify\njust text\n").find("cfg:2:") != std::string::npos);
  CHECK(message("task = sorting\n").find("cfg:1:") != std::string::npos);
  CHECK(message("task = classify\nmask_ratio = 0.2\nrecon_ratio = 0.5\n") != "no error");
  CHECK(message("task = classify\nmask_ratio = 1\n") != "no error");
  CHECK(message("task = classify\nnormalize_embeddings = maybe\n").find("cfg:2:") != std::string::npos);
}

TEST_CASE("malformed configs never crash") {
  Rng rng(1);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyz_=# .0123456789\n\t-";
  for (int trial = 0; trial < 2000; ++trial) {
    std::string text = trial % 2 ? "task = classify\n" : "";
    const std::size_t len = rng.below(60);
    for (std::size_t i = 0; i < len; ++i) text += alphabet[rng.below(alphabet.size())];
    try {
      parse_run_config(text);
    } catch (const ConfigError&) {
    }
  }
}

TEST_CASE("config text round trip") {
  auto c = toy_preset(Task::contrast);
  c.mask_ratio = 0.75;
  c.recon_ratio = 0.25;
  c.base_lr = 3.3e-4;
  c.out_dir = "somewhere/else";
  const auto back = parse_run_config(config_to_text(c));
  CHECK(config_to_map(back) == config_to_map(c));
  CHECK(config_to_map(config_from_map(config_to_map(c))) == config_to_map(c));
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto dir = scratch("ckpt");
  TurboConfig c = toy_preset();
  c.seed = 4;
  ModelState s = ModelState::fresh(c);
  for (auto& v : s.optim.m[2]) v = 0.25f;
  s.optim.step = 7;
  const auto ck = make_checkpoint(c, *s.net, 11, &s.optim);
  save_checkpoint(dir / "a.ckpt", ck);
  const auto back = load_checkpoint(dir / "a.ckpt");
  CHECK(back.step == 11);
  REQUIRE(back.tensors.size() == ck.tensors.size());
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    CHECK(back.tensors[i].name == ck.tensors[i].name);
    CHECK(back.tensors[i].shape == ck.tensors[i].shape);
    CHECK(std::memcmp(back.tensors[i].data.data(), ck.tensors[i].data.data(),
                      ck.tensors[i].data.size() * sizeof(float)) == 0);
  }
  REQUIRE(back.optim.has_value());
  CHECK(back.optim->step == 7);
  CHECK(back.optim->m[2] == s.optim.m[2]);
  CHECK(config_to_map(back.config) == config_to_map(c));

  save_checkpoint(dir / "b.ckpt", back);
  CHECK(checkpoint_digest(dir / "a.ckpt") == checkpoint_digest(dir / "b.ckpt"));

  TurboNet<float> other(c, 99);
  restore_parameters(other, back);
  for (std::size_t i = 0; i < other.parameters().size(); ++i) {
    const auto a = other.parameters()[i].tensor.data();
    const auto b = s.net->parameters()[i].tensor.data();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }

  // Without --with-optim no optimizer tensors are written.
  save_checkpoint(dir / "c.ckpt", make_checkpoint(c, *s.net, 11, nullptr));
  CHECK_FALSE(load_checkpoint(dir / "c.ckpt").optim.has_value());
  CHECK(fs::file_size(dir / "c.ckpt") < fs::file_size(dir / "a.ckpt"));
}

TEST_CASE("checkpoint layout") {
  const auto dir = scratch("layout");
  TurboConfig c = toy_preset();
  TurboNet<float> net(c, 0);
  save_checkpoint(dir / "x.ckpt", make_checkpoint(c, net, 3, nullptr));
  const std::string bytes = slurp(dir / "x.ckpt");
  REQUIRE(bytes.substr(0, 7) == "TURBO1\n");
  std::uint64_t len = 0;
  for (int i = 7; i >= 0; --i) len = (len << 8) | static_cast<unsigned char>(bytes[7 + i]);
  const auto header = nlohmann::json::parse(bytes.substr(15, len));
  CHECK(header.at("version") == 1);
  CHECK(header.at("step") == 3);
  std::size_t expect = 0;
  for (const auto& t : header.at("tensors")) {
    CHECK(t.at("dtype") == "f32");
    CHECK(t.at("offset").get<std::size_t>() == expect);
    expect += t.at("bytes").get<std::size_t>();
  }
  CHECK(bytes.size() == 15 + len + expect);
  CHECK(expect == net.parameter_count() * 4);

  // Damaged files are rejected.
  write_file(dir / "bad.ckpt", "TURBO2\nxxxxxxxx");
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), DataError);
  write_file(dir / "trunc.ckpt", bytes.substr(0, bytes.size() - 4));
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), DataError);

  TurboConfig wider = c;
  wider.enc_dim = 128;
  TurboNet<float> mismatch(wider, 0);
  CHECK_THROWS_AS(restore_parameters(mismatch, load_checkpoint(dir / "x.ckpt")), ConfigError);
}

TEST_CASE("metric lines") {
  StepMetrics s;
  s.step = 3;
  s.epoch = 1;
  s.task = Task::classify;
  s.loss_total = 1.5;
  s.loss_ce = 2.0;
  s.loss_pmae = 0.5;
  s.lr = 1e-3;
  s.flops_gf = 0.5;
  s.wall_ms = 12.0;
  s.m = 0.75;
  s.r = 0.25;
  const auto j = nlohmann::json::parse(format_step(s));
  for (const char* key : {"step", "epoch", "task", "loss_total", "loss_ce", "loss_nce", "loss_pmae",
                          "lr", "flops_gf", "wall_ms", "m", "r"})
    CHECK_MESSAGE(j.contains(key), key);
  CHECK(j.at("loss_nce").is_null());
  const auto e = nlohmann::json::parse(format_eval({Task::contrast, 9, "top1", 0.5, 1.0}));
  CHECK(e.at("eval") == true);
  CHECK(e.at("metric_name") == "top1");
  CHECK(e.at("value") == 0.5);
  const auto stripped = without_timing({format_step(s)});
  CHECK_FALSE(nlohmann::json::parse(stripped[0]).contains("wall_ms"));
}

TEST_CASE("CLI exit codes and outputs") {
  const auto dir = scratch("cli");
  SUBCASE("missing task") {
    write_file(dir / "no_task.cfg", "mask_ratio = 0.5\n");
    const auto r = run_cli("train " + (dir / "no_task.cfg").string());
    CHECK(r.code == 2);
    CHECK(r.out.find("task") != std::string::npos);
  }
  SUBCASE("unknown key and bad usage") {
    write_file(dir / "typo.cfg", "task = classify\nepoch = 3\n");
    const auto r = run_cli("train " + (dir / "typo.cfg").string());
    CHECK(r.code == 2);
    CHECK(r.out.find(":2:") != std::string::npos);
    CHECK(run_cli("frobnicate").code == 2);
    CHECK(run_cli("").code == 2);
  }
  SUBCASE("flops") {
    const auto all = run_cli("flops --preset calibration");
    CHECK(all.code == 0);
    std::size_t lines = 0;
    for (char ch : all.out) lines += ch == '\n';
    CHECK(lines == 7);
    const auto one = run_cli("flops --preset reference --sweep 0:0");
    CHECK(one.code == 0);
    const auto row = one.out.substr(one.out.find('\n') + 1);
    double m, r, enc, dec, total;
    REQUIRE(std::sscanf(row.c_str(), "%lf,%lf,%lf,%lf,%lf", &m, &r, &enc, &dec, &total) == 5);
    CHECK(std::abs(total - 180.6) / 180.6 <= 0.03);
    CHECK(run_cli("flops --preset calibration --sweep 0.5:0.5").out.find("50,50") != std::string::npos);
    CHECK(run_cli("flops --preset nope").code == 2);
  }
  SUBCASE("gradcheck fault injection exits 1 and names the op") {
    const auto r = run_cli("gradcheck --inject-fault gelu");
    CHECK(r.code == 1);
    CHECK(r.out.find("FAILED") != std::string::npos);
    CHECK(r.out.find("gelu") != std::string::npos);
    CHECK(run_cli("gradcheck --inject-fault nothing").code == 2);
  }
}

TEST_CASE("CLI train is deterministic, resumable and evaluable") {
  const auto dir = scratch("train");
  write_file(dir / "a.cfg", tiny_config_text(dir / "a"));
  write_file(dir / "b.cfg", tiny_config_text(dir / "b"));
  const auto ra = run_cli("train --quiet " + (dir / "a.cfg").string());
  const auto rb = run_cli("train --quiet " + (dir / "b.cfg").string());
  REQUIRE(ra.code == 0);
  REQUIRE(rb.code == 0);
  CHECK(checkpoint_digest(dir / "a" / "final.ckpt") == checkpoint_digest(dir / "b" / "final.ckpt"));
  auto lines = [](const fs::path& p) {
    std::vector<std::string> out;
    std::ifstream in(p);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return without_timing(out);
  };
  const auto log_a = lines(dir / "a" / "metrics.jsonl");
  CHECK(log_a == lines(dir / "b" / "metrics.jsonl"));
  CHECK(log_a.size() == 9);  // 8 steps + final eval

  // Interrupt at step 4, resume from its checkpoint with optimizer state.
  write_file(dir / "c.cfg", tiny_config_text(dir / "c"));
  REQUIRE(run_cli("train --quiet --with-optim --stop-at-step 4 " + (dir / "c.cfg").string()).code == 0);
  REQUIRE(fs::exists(dir / "c" / "step_4.ckpt"));
  const auto resumed = run_cli("train --quiet --with-optim --resume " + (dir / "c" / "step_4.ckpt").string() +
                               " " + (dir / "c.cfg").string());
  REQUIRE(resumed.code == 0);
  std::vector<std::size_t> steps;
  std::vector<std::string> step_lines;
  for (const auto& l : lines(dir / "c" / "metrics.jsonl")) {
    const auto j = nlohmann::json::parse(l);
    if (j.contains("eval")) continue;
    steps.push_back(j.at("step").get<std::size_t>());
    step_lines.push_back(l);
  }
  REQUIRE(!steps.empty());
  for (std::size_t i = 1; i < steps.size(); ++i) CHECK(steps[i] > steps[i - 1]);
  CHECK(steps.back() == 7);
  // Resuming with optimizer state replays the uninterrupted run exactly.
  CHECK(step_lines == std::vector<std::string>(log_a.begin(), log_a.begin() + 8));

  const auto e1 = run_cli("eval " + (dir / "a" / "final.ckpt").string() + " --infer-mask 0");
  const auto e2 = run_cli("eval " + (dir / "a" / "final.ckpt").string() + " --infer-mask 0");
  CHECK(e1.code == 0);
  CHECK(e1.out == e2.out);
  CHECK(run_cli("eval " + (dir / "a" / "final.ckpt").string() + " --task contrast").code == 2);
  CHECK(run_cli("eval " + (dir / "missing.ckpt").string()).code == 1);
}

TEST_CASE("CLI gen-data writes readable caches") {
  const auto dir = scratch("gen");
  write_file(dir / "g.cfg", "task = contrast\ntrain_size = 5\ntest_size = 3\n");
  const auto r = run_cli("gen-data " + (dir / "g.cfg").string() + " --out " + (dir / "data").string());
  REQUIRE(r.code == 0);
  const auto clip = read_clip_cache(dir / "data" / "test" / "clip_2.bin");
  CHECK(clip.frames.frames == 8);
  CHECK_FALSE(clip.caption.empty());
}
