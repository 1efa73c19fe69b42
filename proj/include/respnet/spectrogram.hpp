#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "respnet/audio.hpp"

namespace respnet::spec {

enum class FrontEndKind : uint8_t { ScalMorse = 0, ScalAmor = 1, Gamma = 2 };

const char* frontend_name(FrontEndKind k);
FrontEndKind frontend_from_name(const std::string& name);

// Magnitude (or band energy) image: n_rows frequency rows by T time columns,
// row-major, ascending center frequency.
struct SpectrogramImage {
  int rows = 0;
  int cols = 0;
  std::vector<float> values;           // rows * cols
  std::vector<double> freq_axis;       // Hz, strictly increasing, size rows
  FrontEndKind kind = FrontEndKind::ScalMorse;
  SourceRef source;

  float at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
  float& at(int r, int c) { return values[static_cast<size_t>(r) * cols + c]; }
};

// A fixed-size network input slice cut out of a SpectrogramImage.
struct SpectrogramPatch {
  int rows = 0;
  int cols = 0;
  std::vector<float> values;
  FrontEndKind kind = FrontEndKind::ScalMorse;
  SourceRef source;
  int patch_index = 0;
};

enum class Mother { Morse, Amor };

// Continuous wavelet transform magnitude at n_freq log-spaced center
// frequencies in [fmin, fmax], one coefficient per input sample, computed by
// frequency-domain filtering. Morse uses gamma=3, beta=20; Amor is the
// analytic Morlet with center 6 rad/s. Analytic wavelets are normalized to
// peak value 2, so a unit tone yields magnitude ~1 on its matching row.
SpectrogramImage cwt_scalogram(const AudioClip& clip, Mother mother, double fmin_hz,
                               double fmax_hz, int n_freq);

// ERB-spaced 4th-order gammatone filterbank (complex one-pole cascade, unit
// gain at each center); per frame the mean squared filter output over the
// window. Frame count = floor((len - window)/hop) + 1.
SpectrogramImage gammatonegram(const AudioClip& clip, int window, int hop, int n_filters,
                               double fmin_hz, double fmax_hz);

// Linear interpolation along the time axis only (corner-aligned); frequency
// rows untouched. Identity when the width already matches.
SpectrogramImage rescale_time(const SpectrogramImage& img, int target_cols);

// Consecutive non-overlapping width-column slices; a trailing remainder
// narrower than width is dropped.
std::vector<SpectrogramPatch> split_patches(const SpectrogramImage& img, int width);

// log(1 + x/eps) dynamic-range compression, applied in place.
void log_compress(SpectrogramImage& img, double eps = 1e-6);

// (x - mean) / max(std, 1e-8), in place.
void standardize(SpectrogramPatch& patch);

// Analytic center-frequency tables (also used by test oracles).
std::vector<double> log_spaced_centers(double fmin_hz, double fmax_hz, int n);
std::vector<double> erb_spaced_centers(double fmin_hz, double fmax_hz, int n);
double erb_bandwidth(double f_hz);

// Binary image cache, one file per (clip, front end):
// magic "RSPC", version u16, kind u8, rows u16, cols u32, then float32
// little-endian row-major data. Writes are write-temp-then-rename.
void write_image_cache(const std::filesystem::path& path, const SpectrogramImage& img);
SpectrogramImage read_image_cache(const std::filesystem::path& path);

}  // namespace respnet::spec
