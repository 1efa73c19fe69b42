#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "respnet/dataset.hpp"
#include "respnet/metrics.hpp"
#include "respnet/model.hpp"
#include "respnet/spectrogram.hpp"

namespace respnet::pipeline {

struct SoftLabel {
  std::vector<float> p;

  SoftLabel() = default;
  explicit SoftLabel(std::vector<float> probs) : p(std::move(probs)) {}
  static SoftLabel one_hot(int n_classes, int index);
  int size() const { return static_cast<int>(p.size()); }
  void validate() const;  // entries >= 0, sum 1
};

// Mean probability over the patches of one instance.
SoftLabel aggregate_patches(const std::vector<SoftLabel>& rows);
// Elementwise mean over per-spectrogram outputs for one instance.
SoftLabel ensemble(const std::vector<SoftLabel>& per_model);
// Argmax; ties go to the lowest class index.
int predict_label(const SoftLabel& p);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 100;
  float lambda = 1e-4f;
  float mixup_alpha = 0.4f;  // <= 0 disables mixup
  float lr = 1e-4f;
  uint64_t seed = 1;
};

// Deterministic samplers (independent of the standard library's
// distribution implementations).
double u01(std::mt19937_64& rng);
double beta_sample(std::mt19937_64& rng, double alpha);
std::vector<int> random_permutation(std::mt19937_64& rng, int n);
void shuffle_indices(std::vector<int>& idx, std::mt19937_64& rng);

struct Batch {
  nn::Tensor<float> x;  // [B,rows,cols,1]
  nn::Tensor<float> y;  // [B,C]
};

// x' = l*x + (1-l)*x[perm], same for labels.
void mixup_apply(Batch& batch, const std::vector<int>& perm, float lambda);
// Draws lambda ~ Beta(alpha, alpha) and a pairing permutation.
void mixup_batch(Batch& batch, float alpha, std::mt19937_64& rng);

struct LabeledPatch {
  std::vector<float> values;  // standardized, rows*cols
  int class_index = 0;
  int instance = 0;  // index into the instance tables below
};

struct PatchSet {
  int n_classes = 0;
  int rows = 0, cols = 0;
  std::vector<LabeledPatch> items;
  std::vector<std::string> instance_keys;
  std::vector<int> instance_class;
  std::vector<std::vector<int>> instance_items;  // patch indices per instance
};

struct PrepConfig {
  int task = 1;
  spec::FrontEndKind frontend = spec::FrontEndKind::ScalMorse;
  int task1_rate = 4000;
  int task2_rate = 16000;
  double target_s = 10.0;
  double band_lo = 100.0;
  double band_hi = 2000.0;
  // The band-pass upper edge is clamped to this fraction of the rate so the
  // nominal 2 kHz edge stays below Nyquist at the 4 kHz task rate.
  double band_hi_max_frac = 0.475;
  bool peak_norm = true;
  double fmin = 100.0, fmax = 2000.0;
  int n_freq = 124;
  int gamma_window = 512, gamma_hop = 256;
  int patch_rows = 124, patch_cols = 154;
  int jobs = 1;
};

// Resample / duration-normalize / (task 1) band-pass / peak-normalize.
AudioClip condition_clip(const AudioClip& raw, const PrepConfig& cfg);
// Front end + log compression + time rescale (10 s maps to patch_cols).
spec::SpectrogramImage compute_image(const AudioClip& conditioned, const PrepConfig& cfg);

std::filesystem::path cache_path(const std::filesystem::path& cache_dir, const PrepConfig& cfg,
                                 const std::string& key, int cycle_index);

// Computes and writes every missing cache image for the manifest.
void prepare_cache(const Manifest& manifest, const PrepConfig& cfg,
                   const std::filesystem::path& cache_dir);

// Splits cached images into standardized labeled patches.
PatchSet load_patches(const Manifest& manifest, Split split, const PrepConfig& cfg,
                      const std::filesystem::path& cache_dir);

struct EpochStats {
  int epoch = 0;
  double loss = 0;       // mean per-example KL plus the L2 term
  double train_acc = 0;  // argmax agreement on the (mixed) training batches
  double seconds = 0;
};

// Return false to stop training after this epoch.
using EpochHook = std::function<bool(const EpochStats&, models::Model&)>;

struct TrainResult {
  models::Model model;  // final
  models::Model best;   // lowest epoch loss
  double best_loss = 0;
  int best_epoch = -1;
  std::vector<EpochStats> log;
};

TrainResult train(const PatchSet& data, const models::ModelConfig& mcfg,
                  const TrainConfig& tcfg, std::ostream* log_out = nullptr,
                  const EpochHook& hook = {});

struct PredictionRecord {
  std::string key;
  int true_class = 0;
  SoftLabel fused;
  int predicted = 0;
  int n_patches = 0;
};

struct EvalOutcome {
  metrics::EvalReport report;
  std::vector<PredictionRecord> records;
};

// One PatchSet per model, pairwise aligned on instances. Per instance and
// model the patch rows are averaged, the per-model outputs are averaged,
// and the argmax decides.
EvalOutcome evaluate(const std::vector<const PatchSet*>& sets,
                     const std::vector<models::Model*>& mods, int normal_class,
                     const std::string& task_name, int jobs);

std::string predictions_tsv(const std::vector<PredictionRecord>& records);

}  // namespace respnet::pipeline
