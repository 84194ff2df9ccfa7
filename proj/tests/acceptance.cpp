// Acceptance run: one PASS/FAIL line per criterion, detail lines indented.
// Usage: acceptance [criterion numbers...]   (default: all ten)

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "turbo/checkpoint.hpp"
#include "turbo/config.hpp"
#include "turbo/cost_model.hpp"
#include "turbo/errors.hpp"
#include "turbo/gradcheck.hpp"
#include "turbo/metric_log.hpp"
#include "turbo/objectives.hpp"
#include "turbo/partition.hpp"
#include "turbo/rng.hpp"
#include "turbo/synth_data.hpp"
#include "turbo/train.hpp"

using namespace turbo;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void detail(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
void detail(const char* fmt, ...) {
  std::fputs("    ", stdout);
  va_list args;
  va_start(args, fmt);
  std::vfprintf(stdout, fmt, args);
  va_end(args);
  std::fputc('\n', stdout);
  std::fflush(stdout);
}

// Small helper so every check both prints and feeds the verdict.
struct Verdict {
  bool ok = true;
  void check(bool cond, const std::string& what) {
    detail("[%s] %s", cond ? "ok" : "FAIL", what.c_str());
    ok = ok && cond;
  }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[192];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// ---------------------------------------------------------------------------

bool criterion_1() {
  Verdict v;
  const auto t0 = Clock::now();
  const auto ref = sweep(reference_preset(), {{0.0, 0.0}});
  const auto cal = sweep(calibration_preset(), default_sweep_pairs());
  std::ostringstream csv;
  write_sweep_csv(csv, cal);
  const double elapsed = seconds_since(t0);
  const double full = ref[0].total_gflops;
  v.check(std::abs(full - 180.6) / 180.6 <= 0.03,
          fmt("reference m=0: %.2f GFLOPs vs 180.6 (%.2f%%, limit 3%%)", full,
              100.0 * std::abs(full - 180.6) / 180.6));
  const double expected[] = {99.3, 57.6, 45.9, 35.2, 18.3};
  std::size_t row = 0;
  for (const auto& r : cal) {
    if (r.mask_ratio == 0.0) continue;
    const double target = expected[row++];
    const double err = std::abs(r.total_gflops - target) / target;
    v.check(err <= 0.10, fmt("calibration (%.2f, %.2f): ", r.mask_ratio, r.recon_ratio) +
                             fmt("%.2f vs %.1f GFLOPs", r.total_gflops, target) +
                             fmt(" (%.2f%%, limit 10%%)", 100.0 * err));
  }
  v.check(row == 5, "five masked rows present");
  v.check(elapsed < 1.0, fmt("runtime %.4f s (limit 1 s)", elapsed));
  return v.ok;
}

bool criterion_2() {
  Verdict v;
  const auto cal = calibration_preset();
  auto total = [&](double m, double r) { return flops_estimate(cal, m, r).total_gflops; };
  const double a = total(0.75, 0.25), b = total(0.75, 0.75);
  const double c = total(0.9, 0.1), d = total(0.9, 0.9);
  v.check(a < b, fmt("(0.75,0.25) %.2f < (0.75,0.75) %.2f", a, b));
  v.check(c < d, fmt("(0.9,0.1) %.2f < (0.9,0.9) %.2f", c, d));
  const double r1 = a / b, r2 = c / d;
  v.check(std::abs(r1 - 45.9 / 57.6) <= 0.10,
          fmt("ratio %.3f vs %.3f (limit 0.10)", r1, 45.9 / 57.6));
  v.check(std::abs(r2 - 18.3 / 35.2) <= 0.10,
          fmt("ratio %.3f vs %.3f (limit 0.10)", r2, 18.3 / 35.2));
  return v.ok;
}

bool criterion_3() {
  Verdict v;
  const auto t0 = Clock::now();
  const GradcheckReport report = run_gradcheck_suite(0, 1e-4);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  std::size_t fewest = static_cast<std::size_t>(-1);
  bool has_step = false;
  for (const auto& e : report.entries) {
    worst = std::max(worst, e.max_rel_err);
    fewest = std::min(fewest, e.coords);
    has_step = has_step || e.name.find("model_step") != std::string::npos;
    if (!e.passed) detail("entry %s failed: %.3e", e.name.c_str(), e.max_rel_err);
  }
  detail("%zu entries, worst rel err %.3e", report.entries.size(), worst);
  v.check(report.passed(), "every entry within 1e-4");
  v.check(fewest >= 64, "at least 64 coordinates per entry (min " + std::to_string(fewest) + ")");
  v.check(has_step, "full toy-model training step included");
  v.check(elapsed < 120.0, fmt("runtime %.1f s (limit 120 s)", elapsed));
  return v.ok;
}

bool criterion_4() {
  Verdict v;
  const auto t0 = Clock::now();
  Rng rng(2024);
  const double masks[] = {0.0, 0.25, 0.5, 0.6, 0.75, 0.875, 0.9, 0.95};
  std::size_t bad_sets = 0, bad_sizes = 0, bad_mae = 0;
  for (std::size_t trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 1 + rng.below(400);
    const double m = masks[rng.below(std::size(masks))];
    // r is either m itself or a random multiple of 1/40 below m.
    double r = rng.below(4) == 0 ? m : std::floor(rng.uniform(0.0, m) * 40.0) / 40.0;
    if (r > m) r = m;
    const auto plan = make_partition(n, m, r, rng.next_u64());
    // Independent size oracle, with slack for values such as 0.6 * 10.
    const auto nv = static_cast<std::size_t>(std::floor(n * (1.0 - m) + 1e-9));
    const auto nr = r == m ? n - nv : static_cast<std::size_t>(std::floor(n * r + 1e-9));
    if (plan.visible_idx.size() != nv || plan.recon_idx.size() != nr ||
        plan.ignored_idx.size() != n - nv - nr) {
      ++bad_sizes;
    }
    std::vector<int> seen(n, 0);
    for (const auto* part : {&plan.visible_idx, &plan.recon_idx, &plan.ignored_idx})
      for (std::size_t i : *part) {
        if (i < n) ++seen[i];
        else ++bad_sets;
      }
    bad_sets += static_cast<std::size_t>(std::count_if(seen.begin(), seen.end(), [](int c) { return c != 1; }));
    if (r == m && !plan.ignored_idx.empty()) ++bad_mae;
  }
  v.check(bad_sets == 0, "10^4 plans disjoint and exhaustive (" + std::to_string(bad_sets) + " violations)");
  v.check(bad_sizes == 0, "sizes match floor formulas (" + std::to_string(bad_sizes) + " mismatches)");
  v.check(bad_mae == 0, "r = m leaves the ignore set empty (" + std::to_string(bad_mae) + " violations)");
  bool rejected = false;
  try {
    make_partition(100, 0.5, 0.6, 1);
  } catch (const ConstraintError&) {
    rejected = true;
  }
  v.check(rejected, "r > m rejected with ConstraintError");
  const double elapsed = seconds_since(t0);
  v.check(elapsed < 10.0, fmt("runtime %.2f s (limit 10 s)", elapsed));
  return v.ok;
}

double test_accuracy(const TurboNet<float>& net, const ClipDataset& data, double infer_mask,
                     std::uint64_t seed) {
  return evaluate_classify(net, data.test, infer_mask, seed).value;
}

struct ToyRun {
  double accuracy = 0.0;
  double step_ms = 0.0;
  double seconds = 0.0;
};

ToyRun toy_classify(const ClipDataset& data, double m, double r) {
  TurboConfig c = toy_preset(Task::classify);
  c.mask_ratio = m;
  c.recon_ratio = r;
  const auto t0 = Clock::now();
  ModelState state = ModelState::fresh(c);
  const TrainResult tr = train_classify(state, data);
  ToyRun out;
  out.accuracy = test_accuracy(*state.net, data, 0.0, c.seed);
  out.step_ms = tr.mean_step_ms;
  out.seconds = seconds_since(t0);
  detail("(m, r) = (%.2f, %.2f): %zu steps, %.1f ms/step, test accuracy %.4f, %.0f s", m, r,
         tr.steps, tr.mean_step_ms, out.accuracy, out.seconds);
  return out;
}

bool criterion_5() {
  Verdict v;
  const auto t0 = Clock::now();
  const TurboConfig c = toy_preset(Task::classify);
  const ClipDataset data = make_shapes_dataset({c.train_size, 0, c.test_size}, c.seed, false);
  const ToyRun base = toy_classify(data, 0.0, 0.0);
  const ToyRun half = toy_classify(data, 0.5, 0.5);
  const ToyRun sparse = toy_classify(data, 0.9, 0.1);
  const double flops_ratio =
      flops_estimate(c, 0.0, 0.0).total_gflops / flops_estimate(c, 0.9, 0.1).total_gflops;
  const double elapsed = seconds_since(t0);
  v.check(base.accuracy >= 0.90, fmt("(a) baseline accuracy %.4f >= 0.90", base.accuracy));
  v.check(half.accuracy >= base.accuracy - 0.05,
          fmt("(b) turbo (0.5,0.5) accuracy %.4f within 5 points of %.4f", half.accuracy,
              base.accuracy));
  v.check(sparse.step_ms <= 0.5 * base.step_ms,
          fmt("(c) step time %.1f ms <= 0.5 x %.1f ms", sparse.step_ms, base.step_ms));
  v.check(flops_ratio >= 4.0, fmt("(c) cost-model FLOPs ratio %.2fx >= 4x", flops_ratio));
  v.check(elapsed <= 900.0, fmt("runtime %.0f s (limit 900 s)", elapsed));
  return v.ok;
}

bool criterion_6() {
  Verdict v;
  const auto t0 = Clock::now();
  TurboConfig c = toy_preset(Task::classify);
  c.mask_ratio = 0.75;
  c.recon_ratio = 0.25;
  const ClipDataset data = make_shapes_dataset({c.train_size, 0, c.test_size}, c.seed, false);
  ModelState state = ModelState::fresh(c);
  const TrainResult tr = train_classify(state, data);
  detail("trained (0.75, 0.25): %zu steps, %.1f ms/step", tr.steps, tr.mean_step_ms);
  std::vector<double> acc;
  bool errored = false;
  for (double mp : {0.0, 0.5, 0.75}) {
    try {
      acc.push_back(test_accuracy(*state.net, data, mp, c.seed));
      detail("m' = %.2f: accuracy %.4f", mp, acc.back());
    } catch (const std::exception& e) {
      errored = true;
      acc.push_back(0.0);
      detail("m' = %.2f: error %s", mp, e.what());
    }
  }
  const double elapsed = seconds_since(t0);
  v.check(!errored, "evaluation at m' in {0, 0.5, 0.75} completes");
  v.check(acc[0] >= acc[2] - 0.01, fmt("acc(m'=0) %.4f >= acc(m'=0.75) %.4f - 0.01", acc[0], acc[2]));
  v.check(elapsed <= 120.0, fmt("runtime %.0f s (limit 120 s)", elapsed));
  return v.ok;
}

std::vector<float> unit(std::vector<float> e) {
  double norm = 0.0;
  for (float x : e) norm += static_cast<double>(x) * x;
  for (float& x : e) x = static_cast<float>(x / std::sqrt(norm));
  return e;
}

bool criterion_7() {
  Verdict v;
  const auto t0 = Clock::now();
  TurboConfig c = toy_preset(Task::contrast);
  c.mask_ratio = 0.75;
  c.recon_ratio = 0.25;
  const ClipDataset data = make_shapes_dataset({c.train_size, 0, c.test_size}, c.seed, true);
  const TextEmbedder text(c.seed, c.text_dim);
  ModelState state = ModelState::fresh(c);
  const TrainResult tr = train_contrast(state, data, text);
  const EvalReport ret = evaluate_retrieval(*state.net, data.test, text, 16, c.seed);
  detail("trained: %zu steps, %.1f ms/step, final loss %.4f", tr.steps, tr.mean_step_ms,
         tr.losses.empty() ? 0.0 : tr.losses.back());
  v.check(ret.value >= 0.25, fmt("held-out retrieval top-1 %.4f >= 0.25 at B=16", ret.value));
  const EvalReport align = evaluate_alignment(*state.net, text, 20, c.seed);
  detail("trained-model alignment R@1 %.4f over %zu sentences (informational)", align.value,
         align.samples);

  // Planted oracle and random features on generated alignment samples.
  Rng rng(7);
  double planted_hits = 0.0, random_hits = 0.0, coverage = 0.0;
  std::size_t sentences = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const AlignSample sample = gen_align_sample(hash_seed({s, 99}));
    const std::size_t secs = sample.video.duration_s;
    const std::size_t dim = text.dim() + secs;
    std::vector<std::vector<float>> embeds, padded;
    std::vector<std::vector<float>> planted(secs, std::vector<float>(dim, 0.0f));
    for (std::size_t k = 0; k < secs; ++k) planted[k][text.dim() + k] = 1.0f;
    for (const auto& sent : sample.sentences) {
      embeds.push_back(text.embed(sent.tokens));
      auto e = unit(embeds.back());
      e.resize(dim, 0.0f);
      padded.push_back(e);
      if (!sent.alignable) continue;
      planted[(sent.start_s + sent.end_s) / 2] = e;
    }
    std::vector<std::vector<float>> noise(secs, std::vector<float>(text.dim()));
    for (auto& f : noise)
      for (float& x : f) x = static_cast<float>(rng.normal());
    std::size_t count = 0;
    for (const auto& sent : sample.sentences) {
      if (!sent.alignable) continue;
      ++count;
      coverage += static_cast<double>(sent.end_s - sent.start_s) / static_cast<double>(secs);
    }
    planted_hits += align_recall_at_1(planted, padded, sample.sentences) * static_cast<double>(count);
    random_hits += align_recall_at_1(noise, embeds, sample.sentences) * static_cast<double>(count);
    sentences += count;
  }
  const double planted_r1 = planted_hits / static_cast<double>(sentences);
  const double random_r1 = random_hits / static_cast<double>(sentences);
  coverage /= static_cast<double>(sentences);
  v.check(planted_r1 >= 0.9, fmt("planted-oracle R@1 %.4f >= 0.9", planted_r1));
  v.check(std::abs(random_r1 - coverage) <= 0.05,
          fmt("random-feature R@1 %.4f vs coverage %.4f (limit 0.05)", random_r1, coverage));
  const double elapsed = seconds_since(t0);
  v.check(elapsed <= 900.0, fmt("runtime %.0f s (limit 900 s)", elapsed));
  return v.ok;
}

bool criterion_8() {
  Verdict v;
  const auto t0 = Clock::now();
  std::vector<CostReport> costs;
  for (std::size_t f : {16, 32, 64}) {
    const TurboConfig c = long_preset(f);
    costs.push_back(flops_estimate(c, c.mask_ratio, c.recon_ratio));
    detail("F%zu (%.3f, %.3f): %zu visible tokens, %.4f GFLOPs per clip", f, c.mask_ratio,
           c.recon_ratio, costs.back().visible_tokens, costs.back().total_gflops);
  }
  std::size_t vmin = costs[0].visible_tokens, vmax = vmin;
  double fmin = costs[0].total_gflops, fmax = fmin;
  for (const auto& r : costs) {
    vmin = std::min(vmin, r.visible_tokens);
    vmax = std::max(vmax, r.visible_tokens);
    fmin = std::min(fmin, r.total_gflops);
    fmax = std::max(fmax, r.total_gflops);
  }
  v.check(vmax - vmin <= 1, "visible-token counts equal within 1");
  v.check(fmax <= 1.15 * fmin, fmt("per-step FLOPs spread %.3f (limit 1.15)", fmax / fmin));

  double mean[2] = {0.0, 0.0};
  const std::size_t frames[2] = {16, 32};
  for (int k = 0; k < 2; ++k) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      TurboConfig c = long_preset(frames[k]);
      c.seed = seed;
      const LongVideoDataset data = make_long_dataset({c.train_size, 0, c.test_size}, seed);
      ModelState state = ModelState::fresh(c);
      const TrainResult tr = train_long(state, data);
      const EvalReport e = evaluate_long(*state.net, data.test, c.multicrop, seed);
      detail("F%zu seed %llu: %zu steps, %.1f ms/step, test accuracy %.4f", frames[k],
             static_cast<unsigned long long>(seed), tr.steps, tr.mean_step_ms, e.value);
      mean[k] += e.value / 3.0;
    }
  }
  v.check(mean[1] >= mean[0] - 0.01,
          fmt("F32 mean accuracy %.4f >= F16 mean %.4f - 0.01", mean[1], mean[0]));
  const double elapsed = seconds_since(t0);
  v.check(elapsed <= 1800.0, fmt("runtime %.0f s (limit 1800 s)", elapsed));
  return v.ok;
}

bool criterion_9() {
  Verdict v;
  const double ce = lambda_ce(101), nce = lambda_nce(32);
  v.check(std::abs(ce - 1.0 / std::log(101.0)) <= 1e-12, fmt("lambda_CE(101) = %.15f", ce));
  v.check(std::abs(nce - 1.0 / std::log(32.0)) <= 1e-12, fmt("lambda_NCE(32) = %.15f", nce));

  // Zero similarity: video rows live in the first half of the axes, captions
  // in the second half.
  for (std::size_t b : {2, 4, 8, 16, 32}) {
    Tensor64 zv = Tensor64::zeros({b, 2 * b});
    Tensor64 zt = Tensor64::zeros({b, 2 * b});
    for (std::size_t i = 0; i < b; ++i) {
      zv.mutable_data()[i * 2 * b + i] = 1.0;
      zt.mutable_data()[i * 2 * b + b + i] = 1.0;
    }
    const double loss = info_nce(zv, zt).item();
    v.check(loss == std::log(static_cast<double>(b)),
            "InfoNCE at zero similarity, B=" + std::to_string(b) + fmt(": %.17g", loss));
  }

  Rng rng(3);
  const std::size_t b = 16, d = 24;
  Tensor64 zv = Tensor64::zeros({b, d}), zt = Tensor64::zeros({b, d});
  for (auto& x : zv.mutable_data()) x = rng.normal();
  for (auto& x : zt.mutable_data()) x = rng.normal();
  zv = l2_normalize(zv);
  zt = l2_normalize(zt);
  const double base = info_nce(zv, zt).item();
  const double swapped = info_nce(zt, zv).item();
  v.check(std::abs(base - swapped) <= 1e-6, fmt("symmetry |diff| = %.3e", std::abs(base - swapped)));
  std::vector<std::size_t> perm(b);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = b - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  const double permuted = info_nce(gather_rows(zv, perm), gather_rows(zt, perm)).item();
  v.check(std::abs(base - permuted) <= 1e-6,
          fmt("pairing permutation |diff| = %.3e", std::abs(base - permuted)));
  return v.ok;
}

TurboConfig determinism_config() {
  TurboConfig c = toy_preset(Task::classify);
  c.enc_depth = 2;
  c.mask_ratio = 0.75;
  c.recon_ratio = 0.25;
  c.epochs = 2;
  c.warmup_epochs = 1;
  c.train_size = 256;
  c.test_size = 64;
  c.seed = 11;
  return c;
}

struct RunArtifacts {
  std::vector<std::string> log;
  fs::path checkpoint;
};

RunArtifacts determinism_run(const fs::path& dir) {
  const TurboConfig c = determinism_config();
  fs::create_directories(dir);
  const ClipDataset data = make_shapes_dataset({c.train_size, 0, c.test_size}, c.seed, false);
  ModelState state = ModelState::fresh(c);
  MetricLog log;
  TrainHooks hooks;
  hooks.log = &log;
  train_classify(state, data, hooks);
  const EvalReport e = evaluate_classify(*state.net, data.test, 0.0, c.seed);
  log.write_eval({c.task, state.step, e.metric_name, e.value, e.wall_seconds});
  RunArtifacts out;
  out.log = without_timing(log.lines());
  out.checkpoint = dir / "final.ckpt";
  save_checkpoint(out.checkpoint, make_checkpoint(c, *state.net, state.step, &state.optim));
  return out;
}

bool same_tensors(const Checkpoint& a, const Checkpoint& b) {
  if (a.tensors.size() != b.tensors.size()) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    const auto& x = a.tensors[i];
    const auto& y = b.tensors[i];
    if (x.name != y.name || x.shape != y.shape || x.data.size() != y.data.size()) return false;
    if (std::memcmp(x.data.data(), y.data.data(), x.data.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

bool criterion_10() {
  Verdict v;
  const fs::path root = fs::temp_directory_path() / "turbo_acceptance_determinism";
  fs::remove_all(root);
  const RunArtifacts a = determinism_run(root / "a");
  const RunArtifacts b = determinism_run(root / "b");
  detail("%zu metric lines per run", a.log.size());
  v.check(a.log == b.log, "metric logs identical with timing fields removed");
  v.check(checkpoint_digest(a.checkpoint) == checkpoint_digest(b.checkpoint),
          "checkpoint digests identical (" + checkpoint_digest(a.checkpoint) + ")");
  const Checkpoint ca = load_checkpoint(a.checkpoint);
  const Checkpoint cb = load_checkpoint(b.checkpoint);
  v.check(same_tensors(ca, cb), "checkpoint tensors bit-identical");

  // Round trip: restore into a fresh net, re-save, compare.
  const TurboConfig c = determinism_config();
  TurboNet<float> net(c, c.seed + 1);
  restore_parameters(net, ca);
  Checkpoint again = make_checkpoint(ca.config, net, ca.step, ca.optim ? &*ca.optim : nullptr);
  save_checkpoint(root / "again.ckpt", again);
  const Checkpoint reloaded = load_checkpoint(root / "again.ckpt");
  v.check(same_tensors(ca, reloaded), "save -> load -> restore -> save is bit-exact");
  v.check(checkpoint_digest(root / "again.ckpt") == checkpoint_digest(a.checkpoint),
          "round-tripped digest matches");
  fs::remove_all(root);
  return v.ok;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<bool()>> criteria = {
      criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
      criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
  };
  const char* names[] = {
      "FLOPs reproduction",
      "partial-reconstruction saving",
      "gradient suite",
      "partition properties",
      "toy turbo classification",
      "inference-mask generalization",
      "contrastive training and alignment",
      "long-video presets",
      "loss weights and InfoNCE",
      "determinism and serialization",
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  if (selected.empty())
    for (int i = 1; i <= 10; ++i) selected.insert(i);

  int failed = 0;
  for (int id : selected) {
    if (id < 1 || id > 10) {
      std::fprintf(stderr, "no criterion %d\n", id);
      return 2;
    }
    std::printf("criterion %d: %s\n", id, names[id - 1]);
    std::fflush(stdout);
    const auto t0 = Clock::now();
    bool ok = false;
    try {
      ok = criteria[static_cast<std::size_t>(id - 1)]();
    } catch (const std::exception& e) {
      detail("exception: %s", e.what());
    }
    std::printf("%s criterion %d: %s (%.1f s)\n", ok ? "PASS" : "FAIL", id, names[id - 1],
                seconds_since(t0));
    std::fflush(stdout);
    failed += !ok;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(selected.size()) - failed,
              selected.size());
  return failed == 0 ? 0 : 1;
}
