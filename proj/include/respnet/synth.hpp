#pragma once

#include <cstdint>
#include <filesystem>

namespace respnet::synth {

// Writes a small self-contained dataset in the ingest layout: WAV plus
// annotation file per recording, split.tsv and diagnosis.tsv. Classes
// alternate between narrowband tone bursts (wheeze-like, diagnosed COPD)
// and broadband noise bursts (normal, diagnosed Healthy); one annotated
// cycle spans each recording. Output is a pure function of the config.
struct SynthConfig {
  int n_train = 200;
  int n_test = 80;
  int sample_rate = 8000;
  uint64_t seed = 7;
  double min_s = 2.5;
  double max_s = 5.0;
};

void generate_dataset(const std::filesystem::path& dir, const SynthConfig& cfg);

}  // namespace respnet::synth
