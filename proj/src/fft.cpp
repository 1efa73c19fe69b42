#include "respnet/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <map>
#include <mutex>

namespace respnet {
namespace {

std::mutex g_planner_mutex;

fftw_plan get_plan(size_t n, int sign) {
  static std::map<std::pair<size_t, int>, fftw_plan> cache;
  std::lock_guard<std::mutex> lock(g_planner_mutex);
  auto key = std::make_pair(n, sign);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  fftw_complex* tmp = fftw_alloc_complex(n);
  fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), tmp, tmp, sign, FFTW_ESTIMATE);
  fftw_free(tmp);
  cache[key] = plan;
  return plan;
}

}  // namespace

Fft::Buffer::Buffer(size_t n) : n_(n) {
  data_ = reinterpret_cast<std::complex<double>*>(fftw_alloc_complex(n));
  zero();
}

Fft::Buffer::~Buffer() { fftw_free(reinterpret_cast<fftw_complex*>(data_)); }

void Fft::Buffer::zero() { std::fill(data_, data_ + n_, std::complex<double>(0.0, 0.0)); }

void Fft::forward(Buffer& buf) {
  fftw_plan plan = get_plan(buf.size(), FFTW_FORWARD);
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(buf.data()),
                   reinterpret_cast<fftw_complex*>(buf.data()));
}

void Fft::inverse(Buffer& buf) {
  fftw_plan plan = get_plan(buf.size(), FFTW_BACKWARD);
  fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(buf.data()),
                   reinterpret_cast<fftw_complex*>(buf.data()));
  const double scale = 1.0 / static_cast<double>(buf.size());
  for (size_t i = 0; i < buf.size(); ++i) buf.data()[i] *= scale;
}

size_t Fft::next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace respnet
