#include "respnet/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <vector>

#include "respnet/error.hpp"
#include "respnet/wav.hpp"

namespace respnet::synth {
namespace {

constexpr double kTwoPi = 6.28318530717958647692;

double u01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<float> tone_burst(std::mt19937_64& rng, int n, int rate) {
  const double f0 = 300.0 + 600.0 * u01(rng);
  const double f_am = 1.5 + 3.0 * u01(rng);
  const double phi = kTwoPi * u01(rng);
  const double vib = 0.002 + 0.004 * u01(rng);
  std::vector<float> out(n);
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double env = 0.55 + 0.4 * std::sin(kTwoPi * f_am * t + phi);
    const double carrier = std::sin(kTwoPi * f0 * t * (1.0 + vib * std::sin(kTwoPi * 0.7 * t)));
    const double noise = 2.0 * u01(rng) - 1.0;
    out[i] = static_cast<float>(0.6 * env * carrier + 0.02 * noise);
  }
  return out;
}

std::vector<float> noise_burst(std::mt19937_64& rng, int n, int rate) {
  const double f_am = 1.0 + 2.5 * u01(rng);
  const double phi = kTwoPi * u01(rng);
  std::vector<float> out(n);
  double lp = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double env = 0.6 + 0.35 * std::sin(kTwoPi * f_am * t + phi);
    const double white = 2.0 * u01(rng) - 1.0;
    lp = 0.7 * lp + 0.3 * white;  // mild tilt, still broadband
    out[i] = static_cast<float>(0.5 * env * (0.5 * white + 0.5 * lp));
  }
  return out;
}

}  // namespace

void generate_dataset(const std::filesystem::path& dir, const SynthConfig& cfg) {
  require(cfg.n_train > 0 && cfg.n_test >= 0, Errc::UsageError, "bad synth sizes");
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(cfg.seed);

  std::ofstream split(dir / "split.tsv");
  std::ofstream diagnosis(dir / "diagnosis.tsv");
  if (!split || !diagnosis) fail(Errc::IoError, "cannot create split/diagnosis files");

  const int total = cfg.n_train + cfg.n_test;
  for (int i = 0; i < total; ++i) {
    const bool tonal = i % 2 == 0;  // alternate so both splits stay balanced
    const int patient = 1000 + i;   // one patient per recording
    char stem[64];
    std::snprintf(stem, sizeof(stem), "%d_1b1_Al_sc_Synth", patient);

    const double dur = cfg.min_s + (cfg.max_s - cfg.min_s) * u01(rng);
    const int n = static_cast<int>(dur * cfg.sample_rate);
    const auto samples = tonal ? tone_burst(rng, n, cfg.sample_rate)
                               : noise_burst(rng, n, cfg.sample_rate);
    write_wav16(dir / (std::string(stem) + ".wav"), samples, cfg.sample_rate);

    std::ofstream ann(dir / (std::string(stem) + ".txt"));
    if (!ann) fail(Errc::IoError, "cannot create annotation file");
    char line[96];
    std::snprintf(line, sizeof(line), "%.6f\t%.6f\t%d\t%d\n", 0.02, dur - 0.02, 0,
                  tonal ? 1 : 0);
    ann << line;

    split << stem << '\t' << (i < cfg.n_train ? "train" : "test") << '\n';
    diagnosis << patient << '\t' << (tonal ? "COPD" : "Healthy") << '\n';
  }
}

}  // namespace respnet::synth
