#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "respnet/error.hpp"
#include "respnet/pipeline.hpp"
#include "respnet/synth.hpp"

using namespace respnet;
using namespace respnet::pipeline;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("respnet_pl_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

AudioClip make_tone(double freq, int rate, double seconds) {
  AudioClip clip;
  clip.sample_rate = rate;
  const int n = static_cast<int>(seconds * rate);
  clip.samples.resize(n);
  for (int i = 0; i < n; ++i)
    clip.samples[i] = static_cast<float>(std::sin(2.0 * kPi * freq * i / rate));
  return clip;
}

// Narrow model so contract tests stay fast.
models::ModelConfig tiny_model(models::ModelKind kind, int n_classes) {
  models::ModelConfig mc;
  mc.kind = kind;
  mc.n_classes = n_classes;
  mc.block_channels = {8, 16, 32, 64};
  mc.dense_width = 64;
  return mc;
}

// Small in-memory patch set with distinguishable classes, for train/eval
// contract tests that do not need the audio path.
PatchSet tiny_patch_set(int n_instances, int n_classes, uint32_t seed) {
  PatchSet set;
  set.n_classes = n_classes;
  set.rows = 124;
  set.cols = 154;
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> noise(-0.3f, 0.3f);
  for (int i = 0; i < n_instances; ++i) {
    LabeledPatch item;
    item.class_index = i % n_classes;
    item.instance = i;
    item.values.resize(static_cast<size_t>(124) * 154);
    for (auto& v : item.values) v = noise(rng);
    // class-dependent horizontal stripe
    for (int c = 0; c < 154; ++c)
      item.values[static_cast<size_t>(10 + 20 * item.class_index) * 154 + c] += 3.0f;
    set.instance_keys.push_back("inst" + std::to_string(i));
    set.instance_class.push_back(item.class_index);
    set.instance_items.push_back({i});
    set.items.push_back(std::move(item));
  }
  return set;
}

}  // namespace

TEST_CASE("soft labels validate the simplex") {
  SoftLabel ok = SoftLabel::one_hot(4, 2);
  ok.validate();
  CHECK(ok.p[2] == 1.0f);

  SoftLabel bad(std::vector<float>{0.5f, 0.6f});
  CHECK_THROWS_AS(bad.validate(), Error);
  SoftLabel neg(std::vector<float>{1.2f, -0.2f});
  CHECK_THROWS_AS(neg.validate(), Error);
}

TEST_CASE("patch aggregation: identity, mean, permutation invariance") {
  SoftLabel a(std::vector<float>{1.0f, 0.0f, 0.0f});
  CHECK(aggregate_patches({a}).p == a.p);

  SoftLabel b(std::vector<float>{0.0f, 1.0f, 0.0f});
  auto mean = aggregate_patches({a, b});
  CHECK(mean.p[0] == doctest::Approx(0.5f));
  CHECK(mean.p[1] == doctest::Approx(0.5f));
  CHECK(mean.p[2] == doctest::Approx(0.0f));

  std::mt19937 rng(4);
  std::vector<SoftLabel> rows;
  for (int i = 0; i < 7; ++i) {
    std::vector<float> p(3);
    float sum = 0;
    for (auto& v : p) {
      v = static_cast<float>(rng() % 100 + 1);
      sum += v;
    }
    for (auto& v : p) v /= sum;
    rows.emplace_back(p);
  }
  auto fwd = aggregate_patches(rows);
  std::reverse(rows.begin(), rows.end());
  auto rev = aggregate_patches(rows);
  for (int c = 0; c < 3; ++c) CHECK(fwd.p[c] == doctest::Approx(rev.p[c]).epsilon(1e-6));

  CHECK_THROWS_AS(aggregate_patches({}), Error);
}

TEST_CASE("predict_label takes the argmax with lowest-index ties") {
  CHECK(predict_label(SoftLabel(std::vector<float>{0.1f, 0.7f, 0.2f})) == 1);
  CHECK(predict_label(SoftLabel(std::vector<float>{0.5f, 0.5f, 0.0f})) == 0);
  // argmax ignores positive rescaling
  SoftLabel p(std::vector<float>{0.2f, 0.5f, 0.3f});
  SoftLabel scaled(std::vector<float>{0.4f, 1.0f, 0.6f});
  CHECK(predict_label(p) == predict_label(scaled));
}

TEST_CASE("ensemble averages and is symmetric") {
  SoftLabel a(std::vector<float>{1.0f, 0.0f});
  SoftLabel b(std::vector<float>{0.0f, 1.0f});
  auto fused = ensemble({a, b});
  CHECK(fused.p[0] == doctest::Approx(0.5f));
  CHECK(predict_label(fused) == 0);  // tie rule
  auto same = ensemble({a, a, a});
  CHECK(same.p == a.p);
  auto ab = ensemble({a, b});
  auto ba = ensemble({b, a});
  for (int c = 0; c < 2; ++c) CHECK(ab.p[c] == doctest::Approx(ba.p[c]));
}

TEST_CASE("mixup with a forced lambda of one keeps the batch") {
  Batch batch;
  batch.x = nn::Tensor<float>({3, 2, 2, 1},
                              {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  batch.y = nn::Tensor<float>({3, 4});
  for (int i = 0; i < 3; ++i) batch.y[i * 4 + i] = 1.0f;
  auto x_before = batch.x.clone();
  mixup_apply(batch, {2, 0, 1}, 1.0f);
  for (int64_t i = 0; i < batch.x.size(); ++i) CHECK(batch.x[i] == x_before[i]);
}

TEST_CASE("mixup at lambda 0.5 mixes one-hot labels") {
  Batch batch;
  batch.x = nn::Tensor<float>({2, 1, 1, 1}, {10.0f, 20.0f});
  batch.y = nn::Tensor<float>({2, 4});
  batch.y[0 * 4 + 0] = 1.0f;
  batch.y[1 * 4 + 1] = 1.0f;
  mixup_apply(batch, {1, 0}, 0.5f);
  CHECK(batch.x[0] == doctest::Approx(15.0f));
  CHECK(batch.y[0] == doctest::Approx(0.5f));
  CHECK(batch.y[1] == doctest::Approx(0.5f));
  CHECK(batch.y[2] == doctest::Approx(0.0f));
}

TEST_CASE("mixup preserves the label simplex for every drawn lambda") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const int b = 6, c = 4;
    Batch batch;
    batch.x = nn::Tensor<float>({b, 3, 3, 1});
    batch.y = nn::Tensor<float>({b, c});
    for (int i = 0; i < b; ++i) batch.y[i * c + (i % c)] = 1.0f;
    mixup_batch(batch, 0.4f, rng);
    for (int i = 0; i < b; ++i) {
      double sum = 0.0;
      for (int k = 0; k < c; ++k) {
        CHECK(batch.y[i * c + k] >= 0.0f);
        sum += batch.y[i * c + k];
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("mixup needs at least two examples") {
  Batch batch;
  batch.x = nn::Tensor<float>({1, 2, 2, 1});
  batch.y = nn::Tensor<float>({1, 4});
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(mixup_batch(batch, 0.4f, rng), Error);
}

TEST_CASE("beta samples stay in (0,1) and vary") {
  std::mt19937_64 rng(6);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double v = beta_sample(rng, 0.4);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo < 0.2);  // Beta(0.4,0.4) piles mass near the corners
  CHECK(hi > 0.8);
}

TEST_CASE("task 1 conditioning yields exactly one 124x154 patch per cycle") {
  PrepConfig cfg;
  cfg.task = 1;
  for (auto fe : {spec::FrontEndKind::ScalMorse, spec::FrontEndKind::Gamma}) {
    cfg.frontend = fe;
    AudioClip raw = make_tone(400.0, 8000, 2.7);
    raw.source = {"rec", 0};
    AudioClip cond = condition_clip(raw, cfg);
    CHECK(cond.sample_rate == 4000);
    CHECK(cond.samples.size() == 40000);
    auto img = compute_image(cond, cfg);
    CHECK(img.rows == 124);
    CHECK(img.cols == 154);
    auto patches = spec::split_patches(img, 154);
    CHECK(patches.size() == 1);
  }
}

TEST_CASE("task 2 conditioning keeps long recordings and tiles short ones") {
  PrepConfig cfg;
  cfg.task = 2;
  cfg.frontend = spec::FrontEndKind::ScalMorse;
  AudioClip raw = make_tone(500.0, 8000, 23.0);
  raw.source = {"rec", -1};
  AudioClip cond = condition_clip(raw, cfg);
  CHECK(cond.sample_rate == 16000);
  CHECK(cond.duration_s() == doctest::Approx(23.0).epsilon(1e-3));
  auto img = compute_image(cond, cfg);
  CHECK(img.cols == 354);  // round(154 * 23 / 10)
  auto patches = spec::split_patches(img, 154);
  CHECK(patches.size() == 2);
  for (const auto& p : patches) {
    CHECK(p.rows == 124);
    CHECK(p.cols == 154);
  }
}

TEST_CASE("prepare_cache and load_patches agree over the synthetic set") {
  TempDir tmp;
  synth::SynthConfig sc;
  sc.n_train = 6;
  sc.n_test = 2;
  synth::generate_dataset(tmp.path / "data", sc);
  Manifest m = build_manifest(tmp.path / "data", tmp.path / "data" / "split.tsv",
                              tmp.path / "data" / "diagnosis.tsv");

  PrepConfig cfg;
  cfg.task = 1;
  cfg.frontend = spec::FrontEndKind::Gamma;
  cfg.jobs = 2;
  const auto cache = tmp.path / "cache";

  CHECK_THROWS_AS(load_patches(m, Split::Train, cfg, cache), Error);  // cache missing

  prepare_cache(m, cfg, cache);
  auto train_set = load_patches(m, Split::Train, cfg, cache);
  CHECK(train_set.n_classes == 4);
  CHECK(train_set.items.size() == 6);  // one cycle per synthetic recording
  CHECK(train_set.instance_keys.size() == 6);
  for (const auto& item : train_set.items) {
    CHECK(item.values.size() == static_cast<size_t>(124) * 154);
    const bool tone_class = item.class_index == static_cast<int>(CycleClass::Wheeze);
    const bool noise_class = item.class_index == static_cast<int>(CycleClass::Normal);
    CHECK((tone_class || noise_class));
  }
  auto test_set = load_patches(m, Split::Test, cfg, cache);
  CHECK(test_set.items.size() == 2);

  // task 2 uses the disease labels
  PrepConfig cfg2 = cfg;
  cfg2.task = 2;
  prepare_cache(m, cfg2, cache);
  auto t2 = load_patches(m, Split::Train, cfg2, cache);
  CHECK(t2.n_classes == 3);
  for (size_t i = 0; i < t2.items.size(); ++i) {
    const bool chronic = t2.items[i].class_index == static_cast<int>(DiseaseClass::Chronic);
    const bool healthy = t2.items[i].class_index == static_cast<int>(DiseaseClass::Healthy);
    CHECK((chronic || healthy));
  }
}

TEST_CASE("train with zero epochs returns the seeded initialization") {
  auto data = tiny_patch_set(6, 4, 1);
  auto mc = tiny_model(models::ModelKind::Baseline, 4);
  TrainConfig tc;
  tc.epochs = 0;
  tc.seed = 123;
  auto result = train(data, mc, tc);
  models::Model fresh = models::build_model(mc, 123);
  auto a = result.model.named_tensors();
  auto b = fresh.named_tensors();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i)
    for (int64_t j = 0; j < a[i].second->size(); ++j)
      CHECK((*a[i].second)[j] == (*b[i].second)[j]);
}

TEST_CASE("training twice with one seed is bit-identical; another seed differs") {
  auto data = tiny_patch_set(8, 4, 2);
  auto mc = tiny_model(models::ModelKind::Baseline, 4);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.lr = 1e-3f;
  tc.seed = 99;

  auto r1 = train(data, mc, tc);
  auto r2 = train(data, mc, tc);
  auto t1 = r1.model.named_tensors();
  auto t2 = r2.model.named_tensors();
  REQUIRE(t1.size() == t2.size());
  for (size_t i = 0; i < t1.size(); ++i)
    for (int64_t j = 0; j < t1[i].second->size(); ++j)
      CHECK((*t1[i].second)[j] == (*t2[i].second)[j]);
  REQUIRE(r1.log.size() == r2.log.size());
  for (size_t e = 0; e < r1.log.size(); ++e) CHECK(r1.log[e].loss == r2.log[e].loss);

  tc.seed = 100;
  auto r3 = train(data, mc, tc);
  bool any_diff = false;
  auto t3 = r3.model.named_tensors();
  for (size_t i = 0; i < t1.size() && !any_diff; ++i)
    for (int64_t j = 0; j < t1[i].second->size() && !any_diff; ++j)
      any_diff = (*t1[i].second)[j] != (*t3[i].second)[j];
  CHECK(any_diff);
}

TEST_CASE("evaluate: K copies of one model equal the single-model result") {
  auto data = tiny_patch_set(9, 3, 3);
  models::Model model = models::build_model(tiny_model(models::ModelKind::Baseline, 3), 7);

  auto single = evaluate({&data}, {&model}, 2, "task2", 2);
  auto doubled = evaluate({&data, &data}, {&model, &model}, 2, "task2", 2);
  REQUIRE(single.records.size() == doubled.records.size());
  for (size_t i = 0; i < single.records.size(); ++i) {
    CHECK(single.records[i].predicted == doubled.records[i].predicted);
    for (int c = 0; c < 3; ++c)
      CHECK(single.records[i].fused.p[c] ==
            doctest::Approx(doubled.records[i].fused.p[c]).epsilon(1e-7));
  }
  CHECK(single.report.sen == doctest::Approx(doubled.report.sen));
  CHECK(single.report.spec == doctest::Approx(doubled.report.spec));
}

TEST_CASE("evaluate is deterministic and order-independent") {
  auto data = tiny_patch_set(10, 4, 4);
  models::Model model = models::build_model(tiny_model(models::ModelKind::Inception01, 4), 21);

  auto a = evaluate({&data}, {&model}, 0, "task1", 2);
  auto b = evaluate({&data}, {&model}, 0, "task1", 1);  // different worker count
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i)
    for (int c = 0; c < 4; ++c) CHECK(a.records[i].fused.p[c] == b.records[i].fused.p[c]);

  // permute the instance order; aggregate counts must not move
  PatchSet reversed = data;
  std::reverse(reversed.instance_keys.begin(), reversed.instance_keys.end());
  std::reverse(reversed.instance_class.begin(), reversed.instance_class.end());
  std::reverse(reversed.instance_items.begin(), reversed.instance_items.end());
  auto c = evaluate({&reversed}, {&model}, 0, "task1", 2);
  CHECK(a.report.sen == doctest::Approx(c.report.sen));
  CHECK(a.report.spec == doctest::Approx(c.report.spec));
  CHECK(a.report.matrix.counts == c.report.matrix.counts);
}

TEST_CASE("evaluate validates aligned patch sets") {
  auto data = tiny_patch_set(4, 3, 5);
  auto other = tiny_patch_set(5, 3, 6);
  models::Model model = models::build_model(tiny_model(models::ModelKind::Baseline, 3), 7);
  CHECK_THROWS_AS(evaluate({&data, &other}, {&model, &model}, 2, "t", 1), Error);
  CHECK_THROWS_AS(evaluate({}, {}, 2, "t", 1), Error);
}

TEST_CASE("a short training run fits the stripes and evaluates perfectly") {
  auto data = tiny_patch_set(24, 3, 8);
  auto mc = tiny_model(models::ModelKind::Baseline, 3);
  TrainConfig tc;
  tc.epochs = 30;  // enough steps for the running stats to settle
  tc.batch_size = 4;
  tc.lr = 2e-3f;
  tc.seed = 5;
  auto result = train(data, mc, tc);
  auto outcome = evaluate({&data}, {&result.model}, 2, "task2", 2);
  int correct = 0;
  for (const auto& rec : outcome.records) correct += rec.predicted == rec.true_class;
  CHECK(correct >= 22);  // stripes are trivially separable
  CHECK(result.best_epoch >= 0);
}
