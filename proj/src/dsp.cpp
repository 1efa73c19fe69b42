#include "respnet/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include "respnet/error.hpp"

namespace respnet::dsp {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Modified Bessel function of the first kind, order zero (series expansion).
double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double half_sq = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= half_sq / (static_cast<double>(k) * k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  return std::sin(kPi * x) / (kPi * x);
}

struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
};

// Direct form II transposed, state carried between calls.
struct BiquadState {
  double s1 = 0, s2 = 0;
  double step(const Biquad& q, double x) {
    double y = q.b0 * x + s1;
    s1 = q.b1 * x - q.a1 * y + s2;
    s2 = q.b2 * x - q.a2 * y;
    return y;
  }
};

// Butterworth band-pass of design order n (2n poles) via analog prototype,
// low-pass-to-band-pass transform and bilinear mapping. Each section keeps
// zeros at z = +1 and z = -1; gain is split evenly across sections so the
// cascade has unit magnitude at the (warped) geometric center frequency.
std::vector<Biquad> butter_bandpass(int n, double lo_hz, double hi_hz, double fs) {
  using cd = std::complex<double>;
  const double w1 = std::tan(kPi * lo_hz / fs);
  const double w2 = std::tan(kPi * hi_hz / fs);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;

  std::vector<cd> poles;
  for (int k = 0; k < n; ++k) {
    const double theta = kPi * (2.0 * k + 1.0) / (2.0 * n) + kPi / 2.0;
    const cd p = std::polar(1.0, theta);  // prototype pole, left half plane
    const cd bp = bw * p * 0.5;
    const cd disc = std::sqrt(bp * bp - cd(w0sq, 0.0));
    poles.push_back(bp + disc);
    poles.push_back(bp - disc);
  }

  // Bilinear: s -> (z-1)/(z+1), i.e. z = (1+s)/(1-s).
  std::vector<cd> zpoles;
  zpoles.reserve(poles.size());
  for (const cd& s : poles) zpoles.push_back((1.0 + s) / (1.0 - s));

  // Group into conjugate pairs deterministically.
  std::sort(zpoles.begin(), zpoles.end(), [](const cd& a, const cd& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  std::vector<Biquad> sections;
  std::vector<bool> used(zpoles.size(), false);
  for (size_t i = 0; i < zpoles.size(); ++i) {
    if (used[i]) continue;
    used[i] = true;
    size_t match = zpoles.size();
    double best = 1e9;
    for (size_t k = i + 1; k < zpoles.size(); ++k) {
      if (used[k]) continue;
      const double d = std::abs(zpoles[k] - std::conj(zpoles[i]));
      if (d < best) {
        best = d;
        match = k;
      }
    }
    require(match < zpoles.size() && best < 1e-6, Errc::BandOutOfRange,
            "pole pairing failed (band too close to Nyquist?)");
    used[match] = true;
    Biquad q;
    q.a1 = -2.0 * zpoles[i].real();
    q.a2 = std::norm(zpoles[i]);
    q.b0 = 1.0;
    q.b1 = 0.0;
    q.b2 = -1.0;  // zeros at +1 and -1
    sections.push_back(q);
  }

  // Normalize cascade gain at the warped center frequency.
  const double wc = 2.0 * std::atan(std::sqrt(w0sq));
  const cd z = std::polar(1.0, wc);
  double mag = 1.0;
  for (const auto& q : sections) {
    const cd num = q.b0 * z * z + q.b1 * z + q.b2;
    const cd den = z * z + q.a1 * z + q.a2;
    mag *= std::abs(num / den);
  }
  const double g = std::pow(1.0 / mag, 1.0 / sections.size());
  for (auto& q : sections) {
    q.b0 *= g;
    q.b1 *= g;
    q.b2 *= g;
  }
  return sections;
}

void run_cascade(const std::vector<Biquad>& sections, std::vector<double>& x) {
  for (const auto& q : sections) {
    BiquadState st;
    for (double& v : x) v = st.step(q, v);
  }
}

}  // namespace

AudioClip resample(const AudioClip& clip, int target_rate) {
  require(target_rate > 0, Errc::BandOutOfRange, "target rate must be positive");
  require(clip.sample_rate > 0, Errc::EmptyClip, "clip has no sample rate");
  if (clip.sample_rate == target_rate || clip.samples.empty()) {
    AudioClip out = clip;
    out.sample_rate = target_rate;
    return out;
  }

  const int g = std::gcd(clip.sample_rate, target_rate);
  const int64_t up = target_rate / g;    // L
  const int64_t down = clip.sample_rate / g;  // M

  // Prototype low-pass in the upsampled domain; odd length gives an integer
  // group delay of 32*L.
  const int64_t taps = 64 * up + 1;
  const int64_t center = 32 * up;
  const double fc = 0.5 / static_cast<double>(std::max(up, down));
  const double beta = 8.6;
  const double i0b = bessel_i0(beta);
  std::vector<double> h(taps);
  for (int64_t i = 0; i < taps; ++i) {
    const double t = static_cast<double>(i - center);
    const double w_arg = 2.0 * static_cast<double>(i) / static_cast<double>(taps - 1) - 1.0;
    const double window = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - w_arg * w_arg))) / i0b;
    h[i] = 2.0 * fc * sinc(2.0 * fc * t) * window;
  }
  // Per-phase DC normalization: a constant input maps to the same constant
  // for every output phase.
  for (int64_t p = 0; p < up; ++p) {
    double s = 0.0;
    for (int64_t i = p; i < taps; i += up) s += h[i];
    if (s != 0.0)
      for (int64_t i = p; i < taps; i += up) h[i] /= s;
  }

  const int64_t in_len = static_cast<int64_t>(clip.samples.size());
  const int64_t out_len = (in_len * up + down - 1) / down;
  AudioClip out;
  out.sample_rate = target_rate;
  out.source = clip.source;
  out.samples.resize(out_len);
  for (int64_t n = 0; n < out_len; ++n) {
    const int64_t m0 = n * down + center;
    int64_t k_hi = m0 / up;
    int64_t k_lo = (m0 - (taps - 1) + up - 1) / up;  // ceil division
    k_lo = std::max<int64_t>(k_lo, 0);
    k_hi = std::min<int64_t>(k_hi, in_len - 1);
    double acc = 0.0;
    for (int64_t k = k_lo; k <= k_hi; ++k)
      acc += h[m0 - k * up] * static_cast<double>(clip.samples[k]);
    out.samples[n] = static_cast<float>(acc);
  }
  return out;
}

AudioClip normalize_duration(const AudioClip& clip, double target_s, DurationMode mode) {
  require(!clip.samples.empty(), Errc::EmptyClip, clip.source.str());
  require(target_s > 0 && clip.sample_rate > 0, Errc::EmptyClip, "bad duration/rate");
  const int64_t len = static_cast<int64_t>(clip.samples.size());
  const int64_t target = std::llround(target_s * clip.sample_rate);

  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.source = clip.source;
  if (mode == DurationMode::Exact) {
    if (len == target) return clip;
    out.samples.resize(target);
    for (int64_t i = 0; i < target; ++i)
      out.samples[i] = clip.samples[static_cast<size_t>(i % len)];
  } else {
    if (len >= target) return clip;
    const int64_t copies = (target + len - 1) / len;
    out.samples.reserve(copies * len);
    for (int64_t c = 0; c < copies; ++c)
      out.samples.insert(out.samples.end(), clip.samples.begin(), clip.samples.end());
  }
  return out;
}

AudioClip bandpass(const AudioClip& clip, double lo_hz, double hi_hz) {
  require(clip.sample_rate > 0, Errc::EmptyClip, "clip has no sample rate");
  const double nyq = clip.sample_rate / 2.0;
  require(lo_hz > 0 && lo_hz < hi_hz && hi_hz < nyq, Errc::BandOutOfRange,
          "band must satisfy 0 < lo < hi < rate/2");
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.source = clip.source;
  if (clip.samples.empty()) return out;

  const auto sections = butter_bandpass(4, lo_hz, hi_hz, clip.sample_rate);

  const int64_t n = static_cast<int64_t>(clip.samples.size());
  const int64_t pad = std::min<int64_t>(n - 1, 3 * 2 * static_cast<int64_t>(sections.size()) + 3);
  std::vector<double> x;
  x.reserve(n + 2 * pad);
  // Odd reflection at both ends keeps the filter transient off the signal.
  for (int64_t i = pad; i >= 1; --i)
    x.push_back(2.0 * clip.samples[0] - clip.samples[static_cast<size_t>(i)]);
  for (float v : clip.samples) x.push_back(v);
  for (int64_t i = 1; i <= pad; ++i)
    x.push_back(2.0 * clip.samples[static_cast<size_t>(n - 1)] -
                clip.samples[static_cast<size_t>(n - 1 - i)]);

  run_cascade(sections, x);
  std::reverse(x.begin(), x.end());
  run_cascade(sections, x);
  std::reverse(x.begin(), x.end());

  out.samples.resize(n);
  for (int64_t i = 0; i < n; ++i) out.samples[i] = static_cast<float>(x[pad + i]);
  return out;
}

AudioClip peak_normalize(const AudioClip& clip) {
  float peak = 0.0f;
  for (float v : clip.samples) peak = std::max(peak, std::abs(v));
  if (peak <= 0.0f) return clip;
  AudioClip out = clip;
  for (float& v : out.samples) v /= peak;
  return out;
}

}  // namespace respnet::dsp
