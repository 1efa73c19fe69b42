#include "respnet/pipeline.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <map>
#include <ostream>
#include <sstream>

#include "respnet/adam.hpp"
#include "respnet/dsp.hpp"
#include "respnet/error.hpp"
#include "respnet/wav.hpp"

namespace respnet::pipeline {
namespace {

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

int class_count(int task) { return task == 1 ? 4 : 3; }

struct WorkItem {
  const Recording* rec;
  int cycle_index;  // -1 for whole recording
};

}  // namespace

SoftLabel SoftLabel::one_hot(int n_classes, int index) {
  SoftLabel out;
  out.p.assign(n_classes, 0.0f);
  out.p.at(index) = 1.0f;
  return out;
}

void SoftLabel::validate() const {
  require(!p.empty(), Errc::EmptyInput, "empty probability vector");
  double sum = 0.0;
  for (float v : p) {
    require(v >= -1e-7f, Errc::ShapeMismatch, "negative probability");
    sum += v;
  }
  require(std::abs(sum - 1.0) < 1e-5, Errc::ShapeMismatch, "probabilities must sum to 1");
}

SoftLabel aggregate_patches(const std::vector<SoftLabel>& rows) {
  require(!rows.empty(), Errc::EmptyInput, "no patch probabilities");
  const int c = rows[0].size();
  SoftLabel out;
  out.p.assign(c, 0.0f);
  for (const auto& row : rows) {
    require(row.size() == c, Errc::ShapeMismatch, "inconsistent class count");
    for (int i = 0; i < c; ++i) out.p[i] += row.p[i];
  }
  for (int i = 0; i < c; ++i) out.p[i] /= static_cast<float>(rows.size());
  return out;
}

SoftLabel ensemble(const std::vector<SoftLabel>& per_model) {
  require(!per_model.empty(), Errc::EmptyInput, "no model outputs");
  const int c = per_model[0].size();
  for (const auto& m : per_model)
    require(m.size() == c, Errc::ShapeMismatch, "inconsistent class count");
  return aggregate_patches(per_model);
}

int predict_label(const SoftLabel& label) {
  require(!label.p.empty(), Errc::EmptyInput, "empty probability vector");
  int best = 0;
  for (int i = 1; i < label.size(); ++i)
    if (label.p[i] > label.p[best]) best = i;
  return best;
}

// ------------------------------------------------------------- samplers

double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

namespace {

double normal_sample(std::mt19937_64& rng) {
  // Box-Muller; u clamped away from 0.
  const double u1 = std::max(u01(rng), 1e-300);
  const double u2 = u01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Marsaglia-Tsang, with the alpha<1 boost.
double gamma_sample(std::mt19937_64& rng, double alpha) {
  if (alpha < 1.0) {
    const double g = gamma_sample(rng, alpha + 1.0);
    return g * std::pow(std::max(u01(rng), 1e-300), 1.0 / alpha);
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal_sample(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = u01(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(std::max(u, 1e-300)) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace

double beta_sample(std::mt19937_64& rng, double alpha) {
  require(alpha > 0.0, Errc::BatchTooSmall, "mixup alpha must be positive");
  const double a = gamma_sample(rng, alpha);
  const double b = gamma_sample(rng, alpha);
  if (a + b <= 0.0) return 0.5;
  return a / (a + b);
}

std::vector<int> random_permutation(std::mt19937_64& rng, int n) {
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  shuffle_indices(perm, rng);
  return perm;
}

void shuffle_indices(std::vector<int>& idx, std::mt19937_64& rng) {
  // Fisher-Yates with explicit draws, stable across standard libraries.
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<uint64_t>(i + 1));
    std::swap(idx[i], idx[j]);
  }
}

// ----------------------------------------------------------------- mixup

void mixup_apply(Batch& batch, const std::vector<int>& perm, float lambda) {
  const int b = batch.x.dim(0);
  require(static_cast<int>(perm.size()) == b, Errc::ShapeMismatch, "permutation size");
  const int64_t stride = batch.x.size() / b;
  const int c = batch.y.dim(1);
  nn::Tensor<float> x2 = batch.x.clone();
  nn::Tensor<float> y2 = batch.y.clone();
  const float l = lambda, r = 1.0f - lambda;
  for (int n = 0; n < b; ++n) {
    const float* xa = x2.data() + static_cast<int64_t>(n) * stride;
    const float* xb = x2.data() + static_cast<int64_t>(perm[n]) * stride;
    float* xo = batch.x.data() + static_cast<int64_t>(n) * stride;
    for (int64_t i = 0; i < stride; ++i) xo[i] = l * xa[i] + r * xb[i];
    const float* ya = y2.data() + static_cast<int64_t>(n) * c;
    const float* yb = y2.data() + static_cast<int64_t>(perm[n]) * c;
    float* yo = batch.y.data() + static_cast<int64_t>(n) * c;
    for (int i = 0; i < c; ++i) yo[i] = l * ya[i] + r * yb[i];
  }
}

void mixup_batch(Batch& batch, float alpha, std::mt19937_64& rng) {
  require(batch.x.dim(0) >= 2, Errc::BatchTooSmall, "mixup needs at least two examples");
  const float lambda = static_cast<float>(beta_sample(rng, alpha));
  const auto perm = random_permutation(rng, batch.x.dim(0));
  mixup_apply(batch, perm, lambda);
}

// ------------------------------------------------------------ conditioning

AudioClip condition_clip(const AudioClip& raw, const PrepConfig& cfg) {
  require(cfg.task == 1 || cfg.task == 2, Errc::UsageError, "task must be 1 or 2");
  const int rate = cfg.task == 1 ? cfg.task1_rate : cfg.task2_rate;
  AudioClip clip = dsp::resample(raw, rate);
  clip = dsp::normalize_duration(clip, cfg.target_s,
                                 cfg.task == 1 ? dsp::DurationMode::Exact
                                               : dsp::DurationMode::AtLeast);
  if (cfg.task == 1) {
    const double hi = std::min(cfg.band_hi, cfg.band_hi_max_frac * rate);
    clip = dsp::bandpass(clip, cfg.band_lo, hi);
  }
  if (cfg.peak_norm) clip = dsp::peak_normalize(clip);
  return clip;
}

spec::SpectrogramImage compute_image(const AudioClip& conditioned, const PrepConfig& cfg) {
  spec::SpectrogramImage img;
  switch (cfg.frontend) {
    case spec::FrontEndKind::ScalMorse:
      img = spec::cwt_scalogram(conditioned, spec::Mother::Morse, cfg.fmin, cfg.fmax, cfg.n_freq);
      break;
    case spec::FrontEndKind::ScalAmor:
      img = spec::cwt_scalogram(conditioned, spec::Mother::Amor, cfg.fmin, cfg.fmax, cfg.n_freq);
      break;
    case spec::FrontEndKind::Gamma:
      img = spec::gammatonegram(conditioned, cfg.gamma_window, cfg.gamma_hop, cfg.n_freq,
                                cfg.fmin, cfg.fmax);
      break;
  }
  spec::log_compress(img);
  // 10 s of audio maps to patch_cols columns, whatever the front end's
  // native time resolution.
  const int target =
      std::max(1, static_cast<int>(std::lround(cfg.patch_cols * conditioned.duration_s() /
                                               cfg.target_s)));
  return spec::rescale_time(img, target);
}

std::filesystem::path cache_path(const std::filesystem::path& cache_dir, const PrepConfig& cfg,
                                 const std::string& key, int cycle_index) {
  std::string name = "t" + std::to_string(cfg.task) + "." + key;
  if (cycle_index >= 0) name += ".c" + std::to_string(cycle_index);
  name += std::string(".") + spec::frontend_name(cfg.frontend) + ".rspc";
  return cache_dir / name;
}

void prepare_cache(const Manifest& manifest, const PrepConfig& cfg,
                   const std::filesystem::path& cache_dir) {
  std::filesystem::create_directories(cache_dir);
  const int n_rec = static_cast<int>(manifest.recordings.size());
  const int jobs = std::max(1, cfg.jobs);

  std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
  for (int i = 0; i < n_rec; ++i) {
    try {
      const Recording& rec = manifest.recordings[i];
      std::vector<int> todo;
      if (cfg.task == 1) {
        for (int c = 0; c < static_cast<int>(rec.cycles.size()); ++c)
          if (!std::filesystem::exists(cache_path(cache_dir, cfg, rec.meta.recording_key, c)))
            todo.push_back(c);
      } else {
        if (!std::filesystem::exists(cache_path(cache_dir, cfg, rec.meta.recording_key, -1)))
          todo.push_back(-1);
      }
      if (todo.empty()) continue;

      const AudioClip audio = load_recording_audio(rec);
      for (int c : todo) {
        AudioClip raw = c >= 0 ? slice_cycle(audio, rec.cycles[c], c) : audio;
        const AudioClip conditioned = condition_clip(raw, cfg);
        const spec::SpectrogramImage img = compute_image(conditioned, cfg);
        spec::write_image_cache(cache_path(cache_dir, cfg, rec.meta.recording_key, c), img);
      }
    } catch (...) {
#pragma omp critical
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

PatchSet load_patches(const Manifest& manifest, Split split, const PrepConfig& cfg,
                      const std::filesystem::path& cache_dir) {
  PatchSet set;
  set.n_classes = class_count(cfg.task);
  set.rows = cfg.patch_rows;
  set.cols = cfg.patch_cols;

  for (const auto& rec : manifest.recordings) {
    if (rec.split != split) continue;
    std::vector<WorkItem> items;
    if (cfg.task == 1) {
      for (int c = 0; c < static_cast<int>(rec.cycles.size()); ++c) items.push_back({&rec, c});
    } else {
      items.push_back({&rec, -1});
    }
    for (const auto& item : items) {
      const auto path = cache_path(cache_dir, cfg, rec.meta.recording_key, item.cycle_index);
      if (!std::filesystem::exists(path)) fail(Errc::CacheMissing, path.string());
      const spec::SpectrogramImage img = spec::read_image_cache(path);
      require(img.rows == cfg.patch_rows, Errc::BadFormat,
              path.string() + ": unexpected row count");

      int cls;
      std::string key = rec.meta.recording_key;
      if (cfg.task == 1) {
        const auto& ann = rec.cycles[item.cycle_index];
        cls = static_cast<int>(cycle_label(ann.crackle, ann.wheeze));
        key += "#" + std::to_string(item.cycle_index);
      } else {
        cls = static_cast<int>(rec.disease.cls);
      }

      const int instance = static_cast<int>(set.instance_keys.size());
      set.instance_keys.push_back(key);
      set.instance_class.push_back(cls);
      set.instance_items.emplace_back();

      for (auto& patch : spec::split_patches(img, cfg.patch_cols)) {
        spec::standardize(patch);
        LabeledPatch lp;
        lp.values = std::move(patch.values);
        lp.class_index = cls;
        lp.instance = instance;
        set.instance_items[instance].push_back(static_cast<int>(set.items.size()));
        set.items.push_back(std::move(lp));
      }
    }
  }
  require(!set.items.empty(), Errc::SplitEmpty, "no patches in requested split");
  return set;
}

// ----------------------------------------------------------------- train

namespace {

Batch assemble_batch(const PatchSet& data, const std::vector<int>& order, int begin, int end) {
  const int b = end - begin;
  Batch batch;
  batch.x = nn::Tensor<float>::uninit({b, data.rows, data.cols, 1});
  batch.y = nn::Tensor<float>({b, data.n_classes});
  const int64_t stride = static_cast<int64_t>(data.rows) * data.cols;
  for (int i = 0; i < b; ++i) {
    const LabeledPatch& item = data.items[order[begin + i]];
    std::memcpy(batch.x.data() + i * stride, item.values.data(), sizeof(float) * stride);
    batch.y.data()[i * data.n_classes + item.class_index] = 1.0f;
  }
  return batch;
}

}  // namespace

TrainResult train(const PatchSet& data, const models::ModelConfig& mcfg,
                  const TrainConfig& tcfg, std::ostream* log_out, const EpochHook& hook) {
  require(!data.items.empty(), Errc::SplitEmpty, "empty training set");
  require(data.n_classes == mcfg.n_classes, Errc::BadClassCount,
          "model classes do not match the data");
  require(tcfg.batch_size >= 1 && tcfg.epochs >= 0, Errc::UsageError, "bad train config");

  nn::tune_allocator();
  models::Model model = models::build_model(mcfg, tcfg.seed);
  auto params = model.parameters();
  nn::AdamConfig<float> acfg;
  acfg.lr = tcfg.lr;
  nn::Adam<float> adam(params, acfg);

  std::mt19937_64 rng(nn::mix_seed(tcfg.seed, 0x747261696eULL));
  const uint64_t dropout_seed = nn::mix_seed(tcfg.seed, 0x64726f70ULL);

  TrainResult result{model.clone(), model.clone(), 0.0, -1, {}};
  const int n = static_cast<int>(data.items.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  uint64_t step = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const double t0 = now_s();
    shuffle_indices(order, rng);
    double kl_sum = 0.0;
    int64_t correct = 0;

    for (int begin = 0; begin < n; begin += tcfg.batch_size) {
      const int end = std::min(n, begin + tcfg.batch_size);
      Batch batch = assemble_batch(data, order, begin, end);
      if (tcfg.mixup_alpha > 0.0f && end - begin >= 2) mixup_batch(batch, tcfg.mixup_alpha, rng);

      ++step;
      nn::FwdCtx ctx{nn::Mode::Train, dropout_seed, step};
      nn::Tensor<float> pred = model.forward(batch.x, ctx);

      nn::Tensor<float> dpred;
      const float kl = nn::kl_divergence(batch.y, pred, &dpred);
      adam.zero_grad();
      model.backward(dpred);
      const float l2 = nn::l2_penalty<float>(params, tcfg.lambda, true);
      const double batch_loss = static_cast<double>(kl) + l2;
      if (!std::isfinite(batch_loss))
        fail(Errc::NonFiniteLoss,
             "epoch " + std::to_string(epoch) + " step " + std::to_string(step));
      adam.step();

      kl_sum += kl;
      for (int i = 0; i < end - begin; ++i) {
        const float* pr = pred.data() + static_cast<int64_t>(i) * data.n_classes;
        const float* yr = batch.y.data() + static_cast<int64_t>(i) * data.n_classes;
        int pa = 0, ya = 0;
        for (int c = 1; c < data.n_classes; ++c) {
          if (pr[c] > pr[pa]) pa = c;
          if (yr[c] > yr[ya]) ya = c;
        }
        correct += pa == ya;
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = kl_sum / n + nn::l2_penalty<float>(params, tcfg.lambda, false);
    stats.train_acc = static_cast<double>(correct) / n;
    stats.seconds = now_s() - t0;
    result.log.push_back(stats);
    if (log_out) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%d\t%.6f\t%.4f\t%.2f\n", stats.epoch, stats.loss,
                    stats.train_acc, stats.seconds);
      (*log_out) << buf << std::flush;
    }
    if (stats.loss < best_loss) {
      best_loss = stats.loss;
      result.best = model.clone();
      result.best_loss = stats.loss;
      result.best_epoch = epoch;
    }
    if (hook && !hook(stats, model)) break;
  }
  result.model = std::move(model);
  if (result.best_epoch < 0) {
    result.best = result.model.clone();
    result.best_loss = 0.0;
  }
  return result;
}

// ------------------------------------------------------------------ eval

EvalOutcome evaluate(const std::vector<const PatchSet*>& sets,
                     const std::vector<models::Model*>& mods, int normal_class,
                     const std::string& task_name, int jobs) {
  require(!sets.empty() && sets.size() == mods.size(), Errc::UsageError,
          "need one patch set per model");
  const PatchSet& first = *sets[0];
  require(!first.instance_keys.empty(), Errc::SplitEmpty, "no instances to evaluate");
  for (const auto* s : sets) {
    require(s->instance_keys == first.instance_keys, Errc::ShapeMismatch,
            "patch sets enumerate different instances");
    require(s->n_classes == first.n_classes, Errc::ShapeMismatch, "class count mismatch");
  }
  for (auto* m : mods)
    require(m->config().n_classes == first.n_classes, Errc::BadClassCount,
            "model classes do not match the data");

  nn::tune_allocator();
  const int n_instances = static_cast<int>(first.instance_keys.size());
  const int n_models = static_cast<int>(mods.size());
  const int n_threads = std::max(1, jobs);

  // Layers cache activations during forward, so concurrent inference uses
  // per-thread clones of the frozen models.
  std::vector<std::vector<models::Model>> clones(n_models);
  for (int k = 0; k < n_models; ++k)
    for (int t = 0; t < n_threads; ++t) clones[k].push_back(mods[k]->clone());

  std::vector<PredictionRecord> records(n_instances);
  std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic) num_threads(n_threads)
  for (int i = 0; i < n_instances; ++i) {
    try {
      const int tid = omp_get_thread_num();
      std::vector<SoftLabel> per_model;
      int n_patches = 0;
      for (int k = 0; k < n_models; ++k) {
        const PatchSet& set = *sets[k];
        const auto& idxs = set.instance_items[i];
        n_patches = static_cast<int>(idxs.size());
        nn::Tensor<float> x = nn::Tensor<float>::uninit({n_patches, set.rows, set.cols, 1});
        const int64_t stride = static_cast<int64_t>(set.rows) * set.cols;
        for (int j = 0; j < n_patches; ++j)
          std::memcpy(x.data() + j * stride, set.items[idxs[j]].values.data(),
                      sizeof(float) * stride);
        nn::FwdCtx ctx;  // Eval mode
        nn::Tensor<float> probs = clones[k][tid].forward(x, ctx);
        std::vector<SoftLabel> rows(n_patches);
        for (int j = 0; j < n_patches; ++j) {
          rows[j].p.assign(probs.data() + static_cast<int64_t>(j) * set.n_classes,
                           probs.data() + static_cast<int64_t>(j + 1) * set.n_classes);
        }
        per_model.push_back(aggregate_patches(rows));
      }
      PredictionRecord& rec = records[i];
      rec.key = first.instance_keys[i];
      rec.true_class = first.instance_class[i];
      rec.fused = ensemble(per_model);
      rec.predicted = predict_label(rec.fused);
      rec.n_patches = n_patches;
    } catch (...) {
#pragma omp critical
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  metrics::ConfusionMatrix cm(first.n_classes);
  for (const auto& rec : records) cm.add(rec.true_class, rec.predicted);
  EvalOutcome out;
  out.report = metrics::make_report(task_name, cm, normal_class);
  out.records = std::move(records);
  return out;
}

std::string predictions_tsv(const std::vector<PredictionRecord>& records) {
  std::ostringstream out;
  for (const auto& rec : records) {
    out << rec.key << '\t' << rec.true_class << '\t' << rec.predicted;
    for (float v : rec.fused.p) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "\t%.6f", v);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace respnet::pipeline
