#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "turbo/errors.hpp"
#include "turbo/metric_log.hpp"
#include "turbo/objectives.hpp"
#include "turbo/optim.hpp"
#include "turbo/rng.hpp"
#include "turbo/train.hpp"

using namespace turbo;

namespace {

std::vector<NamedParam<float>> make_params(std::vector<std::pair<std::string, std::vector<float>>> spec) {
  std::vector<NamedParam<float>> out;
  for (auto& [name, v] : spec) {
    const std::size_t n = v.size();
    out.push_back({name, Tensor::from({n}, std::move(v), true)});
  }
  return out;
}

TurboConfig tiny_classify() {
  TurboConfig c = toy_preset(Task::classify);
  c.enc_depth = 1;
  c.enc_dim = 32;
  c.enc_heads = 2;
  c.dec_depth = 1;
  c.dec_dim = 16;
  c.batch_size = 16;
  c.epochs = 2;
  c.warmup_epochs = 1;
  c.mask_ratio = 0.75;
  c.recon_ratio = 0.25;
  c.train_size = 64;
  c.test_size = 32;
  return c;
}

double variance(const std::vector<double>& v) {
  const double mu = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - mu) * (x - mu);
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("AdamW with zero gradient and no decay leaves weights alone") {
  auto params = make_params({{"a.weight", {0.5f, -1.0f, 2.0f}}});
  auto state = OptimState::for_params(params, AdamWConfig{0.9, 0.999, 1e-8, 0.0});
  auto t = params[0].tensor;
  t.mutable_grad();  // zero-filled
  adamw_step(params, state, 1e-2);
  CHECK(t.data()[0] == 0.5f);
  CHECK(t.data()[1] == -1.0f);
  CHECK(t.data()[2] == 2.0f);
}

TEST_CASE("AdamW first step moves by lr against the gradient sign") {
  auto params = make_params({{"a.bias", {1.0f, 1.0f, 1.0f}}});
  auto state = OptimState::for_params(params, AdamWConfig{0.9, 0.999, 1e-8, 0.05});
  auto t = params[0].tensor;
  const float g[] = {0.3f, -2.0f, 1e-3f};
  for (int i = 0; i < 3; ++i) t.mutable_grad()[i] = g[i];
  const double lr = 0.01;
  adamw_step(params, state, lr);
  for (int i = 0; i < 3; ++i) {
    // m_hat = g and v_hat = g^2 after bias correction.
    const double expect = 1.0 - lr * g[i] / (std::abs(g[i]) + 1e-8);
    CHECK(t.data()[i] == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("decoupled weight decay shrinks matrices only") {
  auto params = make_params({{"fc.weight", {2.0f, -4.0f}}, {"fc.bias", {2.0f, -4.0f}}});
  auto state = OptimState::for_params(params, AdamWConfig{0.9, 0.999, 1e-8, 0.1});
  for (auto& p : params) p.tensor.mutable_grad();
  adamw_step(params, state, 0.5);
  CHECK(params[0].tensor.data()[0] == doctest::Approx(2.0 * (1 - 0.5 * 0.1)));
  CHECK(params[0].tensor.data()[1] == doctest::Approx(-4.0 * (1 - 0.5 * 0.1)));
  CHECK(params[1].tensor.data()[0] == 2.0f);
  CHECK(decays("encoder.blocks.0.attn.qkv.weight"));
  CHECK_FALSE(decays("cls_token"));
  CHECK_FALSE(decays("encoder.norm.gain"));
}

TEST_CASE("non-finite gradients abort the step naming the parameter") {
  auto params = make_params({{"ok.weight", {1.0f}}, {"bad.weight", {1.0f}}});
  auto state = OptimState::for_params(params, AdamWConfig{});
  params[0].tensor.mutable_grad()[0] = 1.0f;
  params[1].tensor.mutable_grad()[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    adamw_step(params, state, 0.1);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("bad.weight") != std::string::npos);
  }
  CHECK(params[0].tensor.data()[0] == 1.0f);
  CHECK(state.step == 0);
}

TEST_CASE("gradient clipping") {
  auto params = make_params({{"a", {0.0f, 0.0f}}, {"b", {0.0f}}});
  params[0].tensor.mutable_grad()[0] = 3.0f;
  params[0].tensor.mutable_grad()[1] = 0.0f;
  params[1].tensor.mutable_grad()[0] = 4.0f;
  CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(5.0));
  CHECK(params[0].tensor.grad()[0] == doctest::Approx(0.6).epsilon(1e-5));
  CHECK(params[1].tensor.grad()[0] == doctest::Approx(0.8).epsilon(1e-5));
  CHECK(clip_grad_norm(params, 10.0) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("learning-rate schedule") {
  Schedule s{1e-3, 1e-5, 2.0, 12.0, 10};
  CHECK(s.warmup_steps() == 20);
  CHECK(s.total_steps() == 120);
  CHECK(lr_at(s, 0) == 0.0);
  CHECK(lr_at(s, 10) == doctest::Approx(0.5e-3));
  CHECK(lr_at(s, 20) == 1e-3);
  const std::size_t last = s.total_steps() - 1;
  CHECK(lr_at(s, last) == 1e-5);
  CHECK(lr_at(s, last + 50) == 1e-5);
  // Midpoint of the decay: cos(pi/2) = 0, so the factor is one half.
  Schedule even{1e-3, 1e-5, 1.0, 11.0, 10};  // warm 10, last 109: midpoint step is 59.5
  CHECK(lr_at(even, 59) > 1e-5 + 0.5 * (1e-3 - 1e-5));
  CHECK(lr_at(even, 60) < 1e-5 + 0.5 * (1e-3 - 1e-5));
  Schedule odd{1e-3, 1e-5, 1.0, 11.1, 10};  // warm 10, last 110: midpoint step 60
  CHECK(lr_at(odd, 60) == doctest::Approx(1e-5 + 0.5 * (1e-3 - 1e-5)).epsilon(1e-12));
  for (std::size_t k = 21; k < last; ++k) CHECK(lr_at(s, k) <= lr_at(s, k - 1));
}

TEST_CASE("steps per epoch drop the last partial batch") {
  TurboConfig c = toy_preset();
  CHECK(steps_per_epoch(c, 2000) == 62);
  CHECK_THROWS_AS(steps_per_epoch(c, 31), ConfigError);
}

TEST_CASE("classification inference") {
  const TurboConfig c = toy_preset();
  TurboNet<float> net(c, 3);
  const auto clip = gen_shapes_clip(2, 4).frames;
  for (double m : {0.0, 0.5, 0.75}) {
    const auto p = infer_classify(net, clip, m, 9);
    CHECK(p.size() == c.num_classes);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-5));
  }
  CHECK(infer_classify(net, clip, 0.5, 1) == infer_classify(net, clip, 0.5, 1));
  CHECK_THROWS_AS(infer_classify(net, clip, 1.0, 1), ConfigError);
}

TEST_CASE("planted and random features for alignment") {
  const TextEmbedder text(0);
  std::size_t planted_ok = 0;
  double random_sum = 0;
  std::size_t random_n = 0;
  Rng rng(42);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto sample = gen_align_sample(s);
    std::vector<std::vector<float>> embeds;
    for (const auto& sent : sample.sentences) embeds.push_back(text.embed(sent.tokens));
    const std::size_t secs = sample.video.duration_s;
    const std::size_t dim = text.dim() + secs;
    // Planted: the feature at a ground-truth second is the sentence embedding
    // (padded with zeros); every other second gets a private orthogonal axis.
    std::vector<std::vector<float>> planted(secs, std::vector<float>(dim, 0.0f));
    std::vector<std::vector<float>> padded;
    for (std::size_t k = 0; k < secs; ++k) planted[k][text.dim() + k] = 1.0f;
    for (std::size_t j = 0; j < sample.sentences.size(); ++j) {
      auto e = embeds[j];
      double norm = 0;
      for (float x : e) norm += x * x;
      for (float& x : e) x /= static_cast<float>(std::sqrt(norm));
      e.resize(dim, 0.0f);
      padded.push_back(e);
      const auto& sent = sample.sentences[j];
      if (!sent.alignable) continue;
      const std::size_t k = (sent.start_s + sent.end_s) / 2;
      planted[k] = e;
    }
    planted_ok += align_recall_at_1(planted, padded, sample.sentences) == 1.0;

    std::vector<std::vector<float>> noise(secs, std::vector<float>(text.dim()));
    for (auto& f : noise)
      for (float& x : f) x = static_cast<float>(rng.normal());
    random_sum += align_recall_at_1(noise, embeds, sample.sentences);
    ++random_n;
  }
  CHECK(planted_ok == 100);
  const double mean_r1 = random_sum / static_cast<double>(random_n);
  MESSAGE("random-feature R@1 " << mean_r1);
  CHECK(mean_r1 == doctest::Approx(0.15).epsilon(0.05 / 0.15));
}

TEST_CASE("alignment skips unalignable sentences and needs at least one") {
  std::vector<std::vector<float>> feats = {{1, 0}, {0, 1}, {0, 0}};
  std::vector<Sentence> sents(2);
  sents[0] = {{}, 0, true, 1, 2};
  sents[1] = {{}, 1, false, 0, 0};
  std::vector<std::vector<float>> emb = {{0, 1}, {1, 0}};
  CHECK(align_recall_at_1(feats, emb, sents) == 1.0);
  sents[0].alignable = false;
  CHECK_THROWS_AS(align_recall_at_1(feats, emb, sents), DataError);
}

TEST_CASE("per-second features") {
  TurboConfig c = toy_preset(Task::contrast);
  TurboNet<float> net(c, 1);
  const auto video = gen_long_video(2, 5);
  const auto f = per_second_features(net, video);
  REQUIRE(f.size() == 60);
  CHECK(f[0].size() == c.proj_dim);
  CHECK(per_second_features(net, video) == f);
  // Background seconds share no content, but two renders of one second agree.
  const auto g = per_second_features(net, gen_long_video(2, 5));
  CHECK(g[17] == f[17]);
  LongVideo empty = video;
  empty.duration_s = 0;
  CHECK_THROWS_AS(per_second_features(net, empty), DataError);
}

TEST_CASE("multicrop") {
  TurboConfig c = long_preset(16);
  SUBCASE("a constant-output model gives the single-crop answer") {
    TurboNet<float> net(c, 2);
    auto w = net.parameter("head.weight");
    for (float& x : w.mutable_data()) x = 0.0f;
    auto b = net.parameter("head.bias");
    for (std::size_t k = 0; k < b.numel(); ++k) b.mutable_data()[k] = 0.1f * static_cast<float>(k);
    const auto video = gen_long_video(1, 3);
    const auto one = infer_long_multicrop(net, video, 16, 1, 7);
    const auto ten = infer_long_multicrop(net, video, 16, 10, 7);
    REQUIRE(one.size() == 8);
    for (std::size_t k = 0; k < 8; ++k) CHECK(ten[k] == doctest::Approx(one[k]).epsilon(1e-6));
    CHECK(std::accumulate(ten.begin(), ten.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-5));
  }
  SUBCASE("averaging reduces the spread of the predicted max-probability") {
    TurboNet<float> net(c, 4);
    // Sharpen the random head so single crops disagree visibly.
    auto w = net.parameter("head.weight");
    for (float& x : w.mutable_data()) x *= 200.0f;
    double var_single = 0, var_multi = 0;
    for (std::size_t v = 0; v < 50; ++v) {
      const auto video = gen_long_video(v % 8, 100 + v);
      std::vector<double> single, multi;
      for (std::uint64_t s = 0; s < 4; ++s) {
        const auto p1 = infer_long_multicrop(net, video, 16, 1, 1000 * v + s);
        const auto p10 = infer_long_multicrop(net, video, 16, 10, 1000 * v + s);
        single.push_back(*std::max_element(p1.begin(), p1.end()));
        multi.push_back(*std::max_element(p10.begin(), p10.end()));
      }
      var_single += variance(single);
      var_multi += variance(multi);
    }
    MESSAGE("mean variance single " << var_single / 50 << " multicrop " << var_multi / 50);
    CHECK(var_multi < var_single);
  }
}

TEST_CASE("contrastive loss at init is close to ln B") {
  TurboConfig c = toy_preset(Task::contrast);
  const auto data = make_shapes_dataset({16, 0, 0}, 1, true);
  const TextEmbedder text(c.seed, c.text_dim);
  TurboNet<float> net(c, 0);
  std::vector<float> pix, txt;
  std::vector<PartitionPlan> plans;
  const std::size_t n = c.geometry.num_tokens();
  for (std::size_t i = 0; i < 16; ++i) {
    const auto p = patchify(data.train[i].frames, c.geometry);
    pix.insert(pix.end(), p.data().begin(), p.data().end());
    const auto e = text.embed(data.train[i].caption);
    txt.insert(txt.end(), e.begin(), e.end());
    plans.push_back(make_partition(n, 0.75, 0.25, partition_seed(0, 0, i)));
  }
  auto patches = Tensor::from({16, n, c.geometry.patch_dim()}, pix);
  auto out = net.forward(patches, plans);
  const double loss = info_nce(net.project_visual(out.z_cls),
                               net.project_text(Tensor::from({16, c.text_dim}, txt)),
                               static_cast<float>(c.temperature))
                          .item();
  CHECK(loss == doctest::Approx(std::log(16.0)).epsilon(0.2 / std::log(16.0)));
}

TEST_CASE("short training runs replay exactly") {
  const TurboConfig c = tiny_classify();
  const auto data = make_shapes_dataset({c.train_size, 0, c.test_size}, c.seed, false);
  auto run = [&] {
    ModelState s = ModelState::fresh(c);
    MetricLog log;
    TrainHooks hooks;
    hooks.log = &log;
    auto r = train_classify(s, data, hooks);
    return std::make_tuple(r.losses, without_timing(log.lines()), s.net->parameters()[3].tensor.data()[5]);
  };
  const auto a = run();
  const auto b = run();
  CHECK(std::get<0>(a) == std::get<0>(b));
  CHECK(std::get<1>(a) == std::get<1>(b));
  CHECK(std::get<2>(a) == std::get<2>(b));
  CHECK(std::get<0>(a).size() == 8);
  CHECK(std::get<1>(a).size() == 8);
}

TEST_CASE("the text embedder is frozen through contrastive training") {
  TurboConfig c = toy_preset(Task::contrast);
  c.enc_depth = 1;
  c.dec_depth = 1;
  c.epochs = 1;
  c.warmup_epochs = 0;
  c.mask_ratio = 0.75;
  c.recon_ratio = 0.25;
  const auto data = make_shapes_dataset({32, 0, 16}, 0, true);
  const TextEmbedder text(c.seed, c.text_dim);
  const auto before = text.table();
  ModelState s = ModelState::fresh(c);
  train_contrast(s, data, text);
  CHECK(text.table() == before);
  for (const auto& name : s.optim.names) CHECK(name.rfind("text_embed", 0) != 0);
  // Retrieval runs over consecutive batches of 16.
  const auto r = evaluate_retrieval(*s.net, data.test, text, 16, 0);
  CHECK(r.value >= 0.0);
  CHECK(r.value <= 1.0);
  CHECK(r.wall_seconds > 0.0);
}

TEST_CASE("tasks must match the model state") {
  ModelState s = ModelState::fresh(toy_preset(Task::classify));
  const auto data = make_shapes_dataset({32, 0, 0}, 0, true);
  CHECK_THROWS_AS(train_contrast(s, data, TextEmbedder(0)), ConfigError);
}
