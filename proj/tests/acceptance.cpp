// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. The end-to-end smoke builds a synthetic dataset on disk and runs
// the full ingest -> prep -> train -> eval path.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "respnet/dataset.hpp"
#include "respnet/dsp.hpp"
#include "respnet/gradcheck.hpp"
#include "respnet/metrics.hpp"
#include "respnet/model.hpp"
#include "respnet/pipeline.hpp"
#include "respnet/spectrogram.hpp"
#include "respnet/synth.hpp"

using namespace respnet;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

int g_jobs = 2;

struct CheckFailure {
  std::string what;
};

void expect(bool ok, const std::string& what) {
  if (!ok) throw CheckFailure{what};
}

AudioClip make_tone(double freq, int rate, double seconds) {
  AudioClip clip;
  clip.sample_rate = rate;
  const int n = static_cast<int>(seconds * rate);
  clip.samples.resize(n);
  for (int i = 0; i < n; ++i)
    clip.samples[i] = static_cast<float>(std::sin(2.0 * kPi * freq * i / rate));
  return clip;
}

double rms(const std::vector<float>& x, size_t begin, size_t end) {
  double acc = 0.0;
  for (size_t i = begin; i < end; ++i) acc += static_cast<double>(x[i]) * x[i];
  return std::sqrt(acc / (end - begin));
}

// ------------------------------------------------------------ criterion 1

// Published (Spec, Sen, AS, HS) rows. Inputs are two-decimal rounded, so a
// row "reproduces" when the published outputs lie inside the formula's image
// of the +-0.005 input box, widened by the outputs' own +-0.005 rounding.
struct ScoreRow {
  const char* label;
  double spec, sen, as_pub, hs_pub;
  bool expect_match;  // false: documented convention mismatch, reported only
};

bool row_reproduces(const ScoreRow& row) {
  double as_lo = 1e9, as_hi = -1e9, hs_lo = 1e9, hs_hi = -1e9;
  for (double ds : {-0.005, 0.0, 0.005}) {
    for (double dp : {-0.005, 0.0, 0.005}) {
      auto [as, hs] = metrics::icbhi_scores(row.sen + ds, row.spec + dp);
      as_lo = std::min(as_lo, as);
      as_hi = std::max(as_hi, as);
      hs_lo = std::min(hs_lo, hs);
      hs_hi = std::max(hs_hi, hs);
    }
  }
  const double tol = 0.005 + 1e-9;
  return row.as_pub >= as_lo - tol && row.as_pub <= as_hi + tol &&
         row.hs_pub >= hs_lo - tol && row.hs_pub <= hs_hi + tol;
}

void criterion_metric_oracle() {
  const std::vector<ScoreRow> rows = {
      // respiratory anomaly detection, inception comparison
      {"t1 baseline", 0.68, 0.30, 0.49, 0.42, true},
      {"t1 inception-01", 0.73, 0.30, 0.52, 0.43, true},
      {"t1 inception-02", 0.70, 0.30, 0.50, 0.42, true},
      {"t1 inception-03", 0.69, 0.33, 0.51, 0.44, true},
      {"t1 inception-04", 0.70, 0.32, 0.51, 0.44, true},
      // disease detection, inception comparison
      {"t2 baseline", 0.59, 0.75, 0.67, 0.66, true},
      {"t2 inception-01", 0.88, 0.81, 0.85, 0.84, true},
      {"t2 inception-02", 1.00, 0.75, 0.87, 0.85, true},
      {"t2 inception-03", 0.53, 0.83, 0.68, 0.64, true},
      {"t2 inception-04", 0.47, 0.81, 0.64, 0.59, true},
      // spectrogram ensembles
      {"t1 two-scal", 0.73, 0.29, 0.51, 0.41, true},
      {"t1 gam+scal", 0.72, 0.31, 0.51, 0.43, true},
      {"t2 two-scal", 0.65, 0.79, 0.72, 0.71, true},
      {"t2 gam+scal", 0.65, 0.76, 0.70, 0.70, true},
      // state-of-the-art comparison rows computed under the same formulas
      {"t1 brn", 0.69, 0.31, 0.50, 0.43, true},
      {"t1 cnn-rnn", 0.81, 0.28, 0.54, 0.42, true},
      {"t1 ours", 0.73, 0.32, 0.53, 0.45, true},
      {"t2 cnn-moe", 0.71, 0.98, 0.84, 0.82, true},
      {"t2 ours", 0.88, 0.85, 0.86, 0.86, true},
      // rows quoted from other papers whose printed scores do not follow
      // AS=(Sen+Spec)/2, HS=2*Sen*Spec/(Sen+Spec) even under rounding;
      // surfaced here instead of silently absorbed
      {"t1 dt (foreign)", 0.75, 0.12, 0.43, 0.15, false},
      {"t1 hmm (foreign)", 0.38, 0.41, 0.39, 0.23, false},
      {"t1 svm (foreign)", 0.78, 0.20, 0.47, 0.24, false},
  };

  int matched = 0, mismatched = 0;
  for (const auto& row : rows) {
    const bool ok = row_reproduces(row);
    if (row.expect_match) {
      expect(ok, std::string("row did not reproduce: ") + row.label);
      ++matched;
    } else {
      expect(!ok, std::string("foreign row unexpectedly reproduces: ") + row.label);
      ++mismatched;
      auto [as, hs] = metrics::icbhi_scores(row.sen, row.spec);
      std::printf("       note: %-18s printed %.2f/%.2f, formulas give %.3f/%.3f\n",
                  row.label, row.as_pub, row.hs_pub, as, hs);
    }
  }
  std::printf("       %d rows reproduced within rounding; %d foreign-convention rows reported\n",
              matched, mismatched);
}

// ------------------------------------------------------------ criterion 2

void criterion_shape_contract() {
  models::ModelConfig cfg;
  cfg.kind = models::ModelKind::Baseline;
  cfg.n_classes = 4;
  models::Model model = models::build_model(cfg, 1);

  nn::Tensor<float> x = nn::Tensor<float>::uninit({1, 124, 154, 1});
  std::mt19937 rng(2);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  for (int64_t i = 0; i < x.size(); ++i) x[i] = d(rng);

  std::vector<std::vector<int>> shapes;
  auto y = model.forward_trace(x, {}, &shapes);

  auto eq = [](const std::vector<int>& a, std::vector<int> b) { return a == b; };
  expect(eq(shapes[1], {1, 124, 154, 64}), "block1 conv channels");
  expect(eq(shapes[4], {1, 62, 77, 64}), "block1 pool 124->62, 154->77");
  expect(eq(shapes[7], {1, 62, 77, 128}), "block2 conv channels");
  expect(eq(shapes[10], {1, 31, 39, 128}), "block2 pool 62->31, 77->39");
  expect(eq(shapes[13], {1, 31, 39, 256}), "block3 conv channels");
  expect(eq(shapes[16], {1, 16, 20, 256}), "block3 pool 31->16, 39->20");
  expect(eq(shapes[19], {1, 16, 20, 512}), "block4 conv channels");
  expect(eq(shapes[22], {1, 512}), "global max pool to 512");
  expect(eq(shapes[24], {1, 1024}), "dense widens to 1024");
  expect(eq(shapes.back(), {1, 4}), "head emits C probabilities");
  double sum = 0.0;
  for (int c = 0; c < 4; ++c) sum += y[c];
  expect(std::abs(sum - 1.0) < 1e-5, "probabilities sum to 1");
  std::printf(
      "       chain 124->62->31->16 and 154->77->39->20; the reported 62x78 first-pool "
      "width is 77 here (documented deviation)\n");
}

// ------------------------------------------------------------ criterion 3

void criterion_gradient_suite() {
  const auto results = nn::run_gradcheck(20, 1e-3);
  expect(results.size() == 7, "seven layer cases");
  for (const auto& r : results) {
    std::printf("       %-16s max rel err %.3e\n", r.layer.c_str(), r.max_rel_err);
    expect(r.pass, "gradient check failed for " + r.layer);
  }
}

// ------------------------------------------------------------ criterion 4

void criterion_dsp_suite() {
  // tone localization within one frequency row, both wavelet mothers
  for (auto mother : {spec::Mother::Morse, spec::Mother::Amor}) {
    for (double f : {200.0, 500.0, 1000.0, 1800.0}) {
      auto img = spec::cwt_scalogram(make_tone(f, 4000, 1.0), mother, 100, 2000, 124);
      int best = 0;
      double best_mean = -1.0;
      for (int r = 0; r < img.rows; ++r) {
        double acc = 0.0;
        for (int c = 0; c < img.cols; ++c) acc += img.at(r, c);
        if (acc > best_mean) {
          best_mean = acc;
          best = r;
        }
      }
      int want = 0;
      double want_d = 1e18;
      for (int i = 0; i < 124; ++i) {
        const double fc = 100.0 * std::pow(20.0, i / 123.0);
        if (std::abs(fc - f) < want_d) {
          want_d = std::abs(fc - f);
          want = i;
        }
      }
      expect(std::abs(best - want) <= 1,
             "cwt localization off at " + std::to_string(f) + " Hz");
    }
  }

  // gammatonegram frame count formula, exact
  for (int len : {512, 513, 40000, 47999, 160000}) {
    AudioClip clip;
    clip.sample_rate = 4000;
    clip.samples.assign(len, 0.0f);
    auto img = spec::gammatonegram(clip, 512, 256, 8, 100, 2000);
    expect(img.cols == (len - 512) / 256 + 1,
           "frame count at len " + std::to_string(len));
  }

  // band-pass gains at 16 kHz with the nominal 100-2000 Hz band
  auto gain_db = [](double freq) {
    AudioClip tone = make_tone(freq, 16000, 1.0);
    AudioClip out = dsp::bandpass(tone, 100.0, 2000.0);
    const size_t lo = 2000, hi = tone.samples.size() - 2000;
    return 20.0 * std::log10(rms(out.samples, lo, hi) / rms(tone.samples, lo, hi));
  };
  const double g1k = gain_db(1000.0);
  const double g30 = gain_db(30.0);
  const double g3k = gain_db(3000.0);
  std::printf("       band-pass gains: 1 kHz %+.2f dB, 30 Hz %+.1f dB, 3 kHz %+.1f dB\n", g1k,
              g30, g3k);
  expect(std::abs(g1k) < 3.0, "1 kHz not within 3 dB");
  expect(g30 <= -20.0, "30 Hz rejected by less than 20 dB");
  expect(g3k <= -20.0, "3 kHz rejected by less than 20 dB");

  // bilinear rescale against the closed form
  spec::SpectrogramImage ramp;
  ramp.rows = 2;
  ramp.cols = 308;
  ramp.freq_axis = {1, 2};
  ramp.values.resize(2 * 308);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 308; ++c) ramp.at(r, c) = static_cast<float>(c) / 307.0f;
  auto scaled = spec::rescale_time(ramp, 154);
  double worst = 0.0;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 154; ++c)
      worst = std::max(worst, std::abs(scaled.at(r, c) - static_cast<double>(c) / 153.0));
  expect(worst < 1e-6, "bilinear ramp deviation " + std::to_string(worst));
}

// ------------------------------------------------------------ criterion 5

void criterion_aggregation_algebra() {
  using pipeline::SoftLabel;
  std::mt19937_64 rng(11);

  // permutation invariance over random row sets
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 6), c = 2 + static_cast<int>(rng() % 3);
    std::vector<SoftLabel> rows;
    for (int i = 0; i < m; ++i) {
      std::vector<float> p(c);
      float sum = 0;
      for (auto& v : p) {
        v = static_cast<float>(rng() % 1000 + 1);
        sum += v;
      }
      for (auto& v : p) v /= sum;
      rows.emplace_back(p);
    }
    auto base = pipeline::aggregate_patches(rows);
    auto perm = pipeline::random_permutation(rng, m);
    std::vector<SoftLabel> shuffled(m);
    for (int i = 0; i < m; ++i) shuffled[i] = rows[perm[i]];
    auto again = pipeline::aggregate_patches(shuffled);
    for (int k = 0; k < c; ++k)
      expect(std::abs(base.p[k] - again.p[k]) < 1e-6, "aggregation permutation invariance");
    if (m == 1)
      for (int k = 0; k < c; ++k) expect(base.p[k] == rows[0].p[k], "M=1 identity");
  }

  // K=1 ensemble identity and symmetry
  SoftLabel a(std::vector<float>{0.6f, 0.4f});
  expect(pipeline::ensemble({a}).p == a.p, "K=1 ensemble identity");
  SoftLabel b(std::vector<float>{0.0f, 1.0f});
  auto ab = pipeline::ensemble({a, b});
  auto ba = pipeline::ensemble({b, a});
  for (int k = 0; k < 2; ++k)
    expect(std::abs(ab.p[k] - ba.p[k]) < 1e-7, "ensemble symmetry");

  // tie-breaking: lowest index wins
  expect(pipeline::predict_label(SoftLabel(std::vector<float>{0.5f, 0.5f, 0.0f})) == 0,
         "tie rule");
  expect(pipeline::predict_label(pipeline::ensemble(
             {SoftLabel(std::vector<float>{1.0f, 0.0f}),
              SoftLabel(std::vector<float>{0.0f, 1.0f})})) == 0,
         "ensemble tie rule");
  expect(pipeline::predict_label(SoftLabel(std::vector<float>{0.1f, 0.7f, 0.2f})) == 1,
         "plain argmax");

  // mixup keeps labels on the simplex for every drawn lambda
  for (int trial = 0; trial < 40; ++trial) {
    const int bsz = 5, c = 4;
    pipeline::Batch batch;
    batch.x = nn::Tensor<float>({bsz, 2, 2, 1});
    batch.y = nn::Tensor<float>({bsz, c});
    for (int i = 0; i < bsz; ++i) batch.y[i * c + (i % c)] = 1.0f;
    pipeline::mixup_batch(batch, 0.4f, rng);
    for (int i = 0; i < bsz; ++i) {
      double sum = 0.0;
      for (int k = 0; k < c; ++k) {
        expect(batch.y[i * c + k] >= 0.0f, "mixup label positivity");
        sum += batch.y[i * c + k];
      }
      expect(std::abs(sum - 1.0) < 1e-6, "mixup label sum");
    }
  }

  // aggregate-then-argmax equals argmax of the row mean (definitional)
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 3, c = 4;
    std::vector<SoftLabel> rows;
    std::vector<double> mean(c, 0.0);
    for (int i = 0; i < m; ++i) {
      std::vector<float> p(c);
      float sum = 0;
      for (auto& v : p) {
        v = static_cast<float>(rng() % 1000 + 1);
        sum += v;
      }
      for (auto& v : p) v /= sum;
      for (int k = 0; k < c; ++k) mean[k] += p[k] / m;
      rows.emplace_back(p);
    }
    int direct = 0;
    for (int k = 1; k < c; ++k)
      if (mean[k] > mean[direct]) direct = k;
    expect(pipeline::predict_label(pipeline::aggregate_patches(rows)) == direct,
           "Eq.2 then Eq.3 equals argmax of the mean");
  }
}

// ------------------------------------------------------------ criterion 6

struct SmokeContext {
  fs::path dir;
  Manifest manifest;
  pipeline::PrepConfig prep_scal, prep_gamma;
  pipeline::PatchSet train_scal, test_scal, train_gamma, test_gamma;
};

double accuracy(const pipeline::EvalOutcome& out) {
  int correct = 0;
  for (const auto& rec : out.records) correct += rec.predicted == rec.true_class;
  return static_cast<double>(correct) / out.records.size();
}

// Trains on the scalogram (or gammatone) patches with an early stop once
// eval-mode training accuracy clears 0.95; reports the first epoch at or
// beyond 0.90.
struct SmokeTrainResult {
  pipeline::TrainResult result;
  int epochs_run = 0;
  int first_epoch_at_90 = -1;
  double final_train_acc = 0.0;
};

SmokeTrainResult smoke_train(const pipeline::PatchSet& train_set, models::ModelKind kind,
                             uint64_t seed) {
  models::ModelConfig mc;
  mc.kind = kind;
  mc.n_classes = 4;
  pipeline::TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 10;
  tc.lr = 1e-3f;
  tc.seed = seed;

  SmokeTrainResult out;
  auto hook = [&](const pipeline::EpochStats& st, models::Model& model) {
    auto eval = pipeline::evaluate({&train_set}, {&model}, 0, "t1", g_jobs);
    const double acc = accuracy(eval);
    out.epochs_run = st.epoch + 1;
    out.final_train_acc = acc;
    if (acc >= 0.90 && out.first_epoch_at_90 < 0) out.first_epoch_at_90 = st.epoch + 1;
    return acc < 0.95;  // keep going until comfortably past the bar
  };
  out.result = pipeline::train(train_set, mc, tc, nullptr, hook);
  return out;
}

void criterion_end_to_end_smoke(SmokeContext& ctx) {
  const double t0 = now_s();

  synth::SynthConfig sc;
  sc.n_train = 200;
  sc.n_test = 80;
  sc.seed = 7;
  synth::generate_dataset(ctx.dir / "data", sc);
  ctx.manifest = build_manifest(ctx.dir / "data", ctx.dir / "data" / "split.tsv",
                                ctx.dir / "data" / "diagnosis.tsv");
  expect(ctx.manifest.recordings.size() == 280, "synthetic manifest size");

  ctx.prep_scal.task = 1;
  ctx.prep_scal.frontend = spec::FrontEndKind::ScalMorse;
  ctx.prep_scal.jobs = g_jobs;
  ctx.prep_gamma = ctx.prep_scal;
  ctx.prep_gamma.frontend = spec::FrontEndKind::Gamma;

  pipeline::prepare_cache(ctx.manifest, ctx.prep_scal, ctx.dir / "cache");
  pipeline::prepare_cache(ctx.manifest, ctx.prep_gamma, ctx.dir / "cache");
  ctx.train_scal = pipeline::load_patches(ctx.manifest, Split::Train, ctx.prep_scal,
                                          ctx.dir / "cache");
  ctx.test_scal = pipeline::load_patches(ctx.manifest, Split::Test, ctx.prep_scal,
                                         ctx.dir / "cache");
  ctx.train_gamma = pipeline::load_patches(ctx.manifest, Split::Train, ctx.prep_gamma,
                                           ctx.dir / "cache");
  ctx.test_gamma = pipeline::load_patches(ctx.manifest, Split::Test, ctx.prep_gamma,
                                          ctx.dir / "cache");
  expect(ctx.train_scal.items.size() == 200, "train patch count");
  expect(ctx.test_scal.items.size() == 80, "test patch count");
  std::printf("       prep done in %.0f s\n", now_s() - t0);

  // baseline and every inception variant on the scalogram front end
  const models::ModelKind kinds[] = {
      models::ModelKind::Baseline, models::ModelKind::Inception01,
      models::ModelKind::Inception02, models::ModelKind::Inception03,
      models::ModelKind::Inception04};
  models::Model inc01_scal = models::build_model({}, 0);  // placeholder, replaced below
  for (const auto kind : kinds) {
    const double tm = now_s();
    auto smoke = smoke_train(ctx.train_scal, kind, 1000 + static_cast<uint64_t>(kind));
    std::printf("       %-13s train acc %.3f after %d epoch(s), first >=0.90 at epoch %d "
                "(%.0f s)\n",
                models::model_kind_name(kind), smoke.final_train_acc, smoke.epochs_run,
                smoke.first_epoch_at_90, now_s() - tm);
    expect(smoke.first_epoch_at_90 >= 1 && smoke.first_epoch_at_90 <= 30,
           std::string(models::model_kind_name(kind)) +
               " did not reach 0.90 training accuracy within 30 epochs");
    if (kind == models::ModelKind::Inception01) inc01_scal = std::move(smoke.result.model);
  }

  // second front end for the ensemble pairing
  const double tg = now_s();
  auto gamma_smoke = smoke_train(ctx.train_gamma, models::ModelKind::Inception01, 2001);
  std::printf("       inception-01/gamma train acc %.3f after %d epoch(s) (%.0f s)\n",
              gamma_smoke.final_train_acc, gamma_smoke.epochs_run, now_s() - tg);
  expect(gamma_smoke.first_epoch_at_90 >= 1, "gamma member did not fit");
  models::Model inc01_gamma = std::move(gamma_smoke.result.model);

  // held-out: the two-front-end ensemble must not fall below its members
  auto eval_a = pipeline::evaluate({&ctx.test_scal}, {&inc01_scal}, 0, "task1", g_jobs);
  auto eval_b = pipeline::evaluate({&ctx.test_gamma}, {&inc01_gamma}, 0, "task1", g_jobs);
  auto eval_ens = pipeline::evaluate({&ctx.test_scal, &ctx.test_gamma},
                                     {&inc01_scal, &inc01_gamma}, 0, "task1", g_jobs);
  const double acc_a = accuracy(eval_a), acc_b = accuracy(eval_b), acc_e = accuracy(eval_ens);
  std::printf("       held-out accuracy: scal %.3f, gamma %.3f, ensemble %.3f\n", acc_a, acc_b,
              acc_e);
  expect(acc_e >= std::max(acc_a, acc_b) - 1e-9, "ensemble fell below its members");
  std::printf("       smoke total %.0f s\n", now_s() - t0);
}

// ------------------------------------------------------------ criterion 7

void criterion_reproducibility(SmokeContext& ctx) {
  expect(!ctx.train_gamma.items.empty(), "smoke context not prepared");
  models::ModelConfig mc;
  mc.kind = models::ModelKind::Inception01;
  mc.n_classes = 4;
  pipeline::TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 10;
  tc.lr = 1e-3f;
  tc.seed = 4242;

  auto read_bytes = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };

  auto r1 = pipeline::train(ctx.train_gamma, mc, tc);
  auto r2 = pipeline::train(ctx.train_gamma, mc, tc);
  models::save_checkpoint(r1.model, ctx.dir / "repro_a.rspn");
  models::save_checkpoint(r2.model, ctx.dir / "repro_b.rspn");
  expect(read_bytes(ctx.dir / "repro_a.rspn") == read_bytes(ctx.dir / "repro_b.rspn"),
         "checkpoints differ between identical runs");
  models::save_checkpoint(r1.best, ctx.dir / "best_a.rspn");
  models::save_checkpoint(r2.best, ctx.dir / "best_b.rspn");
  expect(read_bytes(ctx.dir / "best_a.rspn") == read_bytes(ctx.dir / "best_b.rspn"),
         "best checkpoints differ between identical runs");

  auto e1 = pipeline::evaluate({&ctx.test_gamma}, {&r1.model}, 0, "task1", g_jobs);
  auto e2 = pipeline::evaluate({&ctx.test_gamma}, {&r2.model}, 0, "task1", g_jobs);
  expect(metrics::report_tsv_line(e1.report) == metrics::report_tsv_line(e2.report),
         "evaluation reports differ");
  expect(pipeline::predictions_tsv(e1.records) == pipeline::predictions_tsv(e2.records),
         "prediction dumps differ");
  std::printf("       two runs, identical checkpoints, reports and predictions\n");
}

}  // namespace

int main() {
  g_jobs = std::max(1u, std::thread::hardware_concurrency());

  SmokeContext ctx;
  ctx.dir = fs::temp_directory_path() /
            ("respnet_acceptance_" + std::to_string(std::random_device{}()));
  fs::create_directories(ctx.dir);

  struct Criterion {
    const char* name;
    std::function<void()> fn;
  };
  const std::vector<Criterion> criteria = {
      {"metric oracle: published score rows", [] { criterion_metric_oracle(); }},
      {"shape contract: baseline chain", [] { criterion_shape_contract(); }},
      {"gradient suite: 20-seed finite differences", [] { criterion_gradient_suite(); }},
      {"dsp suite: localization, framing, band-pass, rescale", [] { criterion_dsp_suite(); }},
      {"aggregation algebra: patch mean, ensemble, ties, mixup",
       [] { criterion_aggregation_algebra(); }},
      {"end-to-end smoke: synthetic two-class training", [&] { criterion_end_to_end_smoke(ctx); }},
      {"reproducibility: bit-identical runs", [&] { criterion_reproducibility(ctx); }},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    const double t0 = now_s();
    try {
      criterion.fn();
      std::printf("[PASS] %s (%.1f s)\n", criterion.name, now_s() - t0);
    } catch (const CheckFailure& f) {
      std::printf("[FAIL] %s: %s\n", criterion.name, f.what.c_str());
      ++failures;
    } catch (const std::exception& e) {
      std::printf("[FAIL] %s: unexpected error: %s\n", criterion.name, e.what());
      ++failures;
    }
    std::fflush(stdout);
  }

  std::error_code ec;
  fs::remove_all(ctx.dir, ec);
  if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
