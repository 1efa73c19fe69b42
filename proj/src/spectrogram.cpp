#include "respnet/spectrogram.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

#include "respnet/error.hpp"
#include "respnet/fft.hpp"

namespace respnet::spec {
namespace {

constexpr double kTwoPi = 6.28318530717958647692;

// Morse wavelet parameters (the common default of wavelet toolboxes).
constexpr double kMorseGamma = 3.0;
constexpr double kMorseBeta = 20.0;
// Analytic Morlet center frequency, rad/s.
constexpr double kAmorOmega0 = 6.0;

// Frequency response of the analytic mother at angular frequency w (> 0),
// normalized to peak value 2.
double mother_response(Mother mother, double w) {
  if (w <= 0.0) return 0.0;
  if (mother == Mother::Morse) {
    const double wp = std::pow(kMorseBeta / kMorseGamma, 1.0 / kMorseGamma);
    const double ln = std::log(2.0) + kMorseBeta * (std::log(w) - std::log(wp)) -
                      (std::pow(w, kMorseGamma) - std::pow(wp, kMorseGamma));
    return std::exp(ln);
  }
  const double d = w - kAmorOmega0;
  return 2.0 * std::exp(-0.5 * d * d);
}

double mother_peak_omega(Mother mother) {
  if (mother == Mother::Morse) return std::pow(kMorseBeta / kMorseGamma, 1.0 / kMorseGamma);
  return kAmorOmega0;
}

void put_u16(std::ofstream& out, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}
void put_u32(std::ofstream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}
uint16_t get_u16(std::ifstream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}
uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

const char* frontend_name(FrontEndKind k) {
  switch (k) {
    case FrontEndKind::ScalMorse: return "scal-morse";
    case FrontEndKind::ScalAmor: return "scal-amor";
    case FrontEndKind::Gamma: return "gamma";
  }
  return "?";
}

FrontEndKind frontend_from_name(const std::string& name) {
  if (name == "scal-morse") return FrontEndKind::ScalMorse;
  if (name == "scal-amor") return FrontEndKind::ScalAmor;
  if (name == "gamma") return FrontEndKind::Gamma;
  fail(Errc::UsageError, "unknown front end '" + name + "'");
}

std::vector<double> log_spaced_centers(double fmin_hz, double fmax_hz, int n) {
  std::vector<double> out(n);
  const double ratio = std::log(fmax_hz / fmin_hz);
  for (int i = 0; i < n; ++i)
    out[i] = fmin_hz * std::exp(ratio * static_cast<double>(i) / (n - 1));
  out[0] = fmin_hz;
  out[n - 1] = fmax_hz;
  return out;
}

double erb_bandwidth(double f_hz) { return 24.7 * (4.37 * f_hz / 1000.0 + 1.0); }

std::vector<double> erb_spaced_centers(double fmin_hz, double fmax_hz, int n) {
  auto erb_rate = [](double f) { return 21.4 * std::log10(1.0 + 0.00437 * f); };
  auto erb_rate_inv = [](double e) { return (std::pow(10.0, e / 21.4) - 1.0) / 0.00437; };
  const double e0 = erb_rate(fmin_hz), e1 = erb_rate(fmax_hz);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i)
    out[i] = erb_rate_inv(e0 + (e1 - e0) * static_cast<double>(i) / (n - 1));
  out[0] = fmin_hz;
  out[n - 1] = fmax_hz;
  return out;
}

SpectrogramImage cwt_scalogram(const AudioClip& clip, Mother mother, double fmin_hz,
                               double fmax_hz, int n_freq) {
  require(clip.sample_rate > 0 && !clip.samples.empty(), Errc::EmptyClip, clip.source.str());
  const double nyq = clip.sample_rate / 2.0;
  require(fmin_hz > 0 && fmin_hz < fmax_hz && fmax_hz <= nyq, Errc::BandOutOfRange,
          "want 0 < fmin < fmax <= rate/2");
  require(n_freq >= 2, Errc::BandOutOfRange, "need at least two frequency rows");

  const size_t len = clip.samples.size();
  const size_t n = Fft::next_pow2(len);

  Fft::Buffer sig(n);
  for (size_t i = 0; i < len; ++i) sig.data()[i] = clip.samples[i];
  Fft::forward(sig);

  SpectrogramImage img;
  img.kind = mother == Mother::Morse ? FrontEndKind::ScalMorse : FrontEndKind::ScalAmor;
  img.source = clip.source;
  img.rows = n_freq;
  img.cols = static_cast<int>(len);
  img.values.resize(static_cast<size_t>(n_freq) * len);
  img.freq_axis = log_spaced_centers(fmin_hz, fmax_hz, n_freq);

  const double wp = mother_peak_omega(mother);
  Fft::Buffer work(n);
  for (int r = 0; r < n_freq; ++r) {
    // Scale that puts the wavelet peak on this row's center frequency.
    const double s = wp * clip.sample_rate / (kTwoPi * img.freq_axis[r]);
    work.zero();
    for (size_t k = 1; k <= n / 2; ++k) {
      const double w = kTwoPi * static_cast<double>(k) / static_cast<double>(n);
      const double h = mother_response(mother, s * w);
      if (h > 0.0) work.data()[k] = sig.data()[k] * h;
    }
    Fft::inverse(work);
    float* row = img.values.data() + static_cast<size_t>(r) * len;
    for (size_t t = 0; t < len; ++t) row[t] = static_cast<float>(std::abs(work.data()[t]));
  }
  return img;
}

SpectrogramImage gammatonegram(const AudioClip& clip, int window, int hop, int n_filters,
                               double fmin_hz, double fmax_hz) {
  require(window > hop && hop > 0, Errc::BandOutOfRange, "want window > hop > 0");
  require(clip.sample_rate > 0, Errc::EmptyClip, clip.source.str());
  const double nyq = clip.sample_rate / 2.0;
  require(fmin_hz > 0 && fmin_hz < fmax_hz && fmax_hz <= nyq, Errc::BandOutOfRange,
          "want 0 < fmin < fmax <= rate/2");
  const int64_t len = static_cast<int64_t>(clip.samples.size());
  require(len >= window, Errc::ClipTooShort,
          clip.source.str() + ": " + std::to_string(len) + " < window");

  const int n_frames = static_cast<int>((len - window) / hop + 1);
  SpectrogramImage img;
  img.kind = FrontEndKind::Gamma;
  img.source = clip.source;
  img.rows = n_filters;
  img.cols = n_frames;
  img.values.resize(static_cast<size_t>(n_filters) * n_frames);
  img.freq_axis = erb_spaced_centers(fmin_hz, fmax_hz, n_filters);

  const double fs = clip.sample_rate;
  std::vector<double> band(len);
  for (int r = 0; r < n_filters; ++r) {
    const double fc = img.freq_axis[r];
    const double decay = 1.019 * erb_bandwidth(fc);
    const double lambda = std::exp(-kTwoPi * decay / fs);
    const double phi = kTwoPi * fc / fs;
    const std::complex<double> a = std::polar(lambda, phi);

    // Unit gain at the center frequency of the 4-stage complex cascade;
    // the factor 2 recovers full amplitude of a real tone from Re().
    const std::complex<double> den = 1.0 - a * std::polar(1.0, -phi);
    const double gain = 2.0 * std::pow(std::abs(den), 4.0);

    std::complex<double> z1 = 0, z2 = 0, z3 = 0, z4 = 0;
    for (int64_t i = 0; i < len; ++i) {
      z1 = static_cast<double>(clip.samples[i]) + a * z1;
      z2 = z1 + a * z2;
      z3 = z2 + a * z3;
      z4 = z3 + a * z4;
      band[i] = gain * z4.real();
    }

    float* row = img.values.data() + static_cast<size_t>(r) * n_frames;
    // Windowed mean-square energy, advanced by hop.
    for (int t = 0; t < n_frames; ++t) {
      const int64_t start = static_cast<int64_t>(t) * hop;
      double acc = 0.0;
      for (int64_t i = start; i < start + window; ++i) acc += band[i] * band[i];
      row[t] = static_cast<float>(acc / window);
    }
  }
  return img;
}

SpectrogramImage rescale_time(const SpectrogramImage& img, int target_cols) {
  require(img.cols >= 1, Errc::ImageTooNarrow, img.source.str());
  require(target_cols >= 1, Errc::ImageTooNarrow, "target width must be positive");
  if (target_cols == img.cols) return img;

  SpectrogramImage out;
  out.rows = img.rows;
  out.cols = target_cols;
  out.values.resize(static_cast<size_t>(img.rows) * target_cols);
  out.freq_axis = img.freq_axis;
  out.kind = img.kind;
  out.source = img.source;

  for (int c = 0; c < target_cols; ++c) {
    double src;
    if (target_cols == 1)
      src = (img.cols - 1) / 2.0;
    else
      src = static_cast<double>(c) * (img.cols - 1) / (target_cols - 1);
    const int j0 = std::min(static_cast<int>(src), img.cols - 1);
    const int j1 = std::min(j0 + 1, img.cols - 1);
    const double f = src - j0;
    for (int r = 0; r < img.rows; ++r)
      out.at(r, c) = static_cast<float>((1.0 - f) * img.at(r, j0) + f * img.at(r, j1));
  }
  return out;
}

std::vector<SpectrogramPatch> split_patches(const SpectrogramImage& img, int width) {
  require(width >= 1, Errc::ImageTooNarrow, "patch width must be positive");
  require(img.cols >= width, Errc::ImageTooNarrow,
          img.source.str() + ": " + std::to_string(img.cols) + " < " + std::to_string(width));
  const int n = img.cols / width;
  std::vector<SpectrogramPatch> out(n);
  for (int p = 0; p < n; ++p) {
    SpectrogramPatch& patch = out[p];
    patch.rows = img.rows;
    patch.cols = width;
    patch.kind = img.kind;
    patch.source = img.source;
    patch.patch_index = p;
    patch.values.resize(static_cast<size_t>(img.rows) * width);
    for (int r = 0; r < img.rows; ++r)
      std::memcpy(patch.values.data() + static_cast<size_t>(r) * width,
                  img.values.data() + static_cast<size_t>(r) * img.cols + p * width,
                  sizeof(float) * width);
  }
  return out;
}

void log_compress(SpectrogramImage& img, double eps) {
  for (float& v : img.values) v = static_cast<float>(std::log1p(v / eps));
}

void standardize(SpectrogramPatch& patch) {
  const size_t n = patch.values.size();
  if (n == 0) return;
  double sum = 0.0;
  for (float v : patch.values) sum += v;
  const double mean = sum / n;
  double sq = 0.0;
  for (float v : patch.values) sq += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(sq / n), 1e-8);
  for (float& v : patch.values) v = static_cast<float>((v - mean) / sd);
}

void write_image_cache(const std::filesystem::path& path, const SpectrogramImage& img) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail(Errc::IoError, "cannot create " + tmp.string());
    out.write("RSPC", 4);
    put_u16(out, 1);
    out.put(static_cast<char>(img.kind));
    put_u16(out, static_cast<uint16_t>(img.rows));
    put_u32(out, static_cast<uint32_t>(img.cols));
    for (float v : img.values) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(out, bits);
    }
    if (!out) fail(Errc::IoError, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

SpectrogramImage read_image_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::CacheMissing, path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "RSPC", 4) != 0)
    fail(Errc::BadFormat, "bad cache magic: " + path.string());
  const uint16_t version = get_u16(in);
  if (version != 1) fail(Errc::BadFormat, "unsupported cache version: " + path.string());
  SpectrogramImage img;
  img.kind = static_cast<FrontEndKind>(in.get());
  img.rows = get_u16(in);
  img.cols = static_cast<int>(get_u32(in));
  img.values.resize(static_cast<size_t>(img.rows) * img.cols);
  for (float& v : img.values) {
    uint32_t bits = get_u32(in);
    std::memcpy(&v, &bits, 4);
  }
  if (!in) fail(Errc::BadFormat, "truncated cache: " + path.string());
  return img;
}

}  // namespace respnet::spec
