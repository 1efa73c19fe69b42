#include "respnet/layers.hpp"

#include <Eigen/Dense>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace respnet::nn {

void tune_allocator() {
#if defined(__GLIBC__)
  // Large activation buffers turn over every step; keep them on the heap
  // instead of mmap so the pages stay warm.
  static bool done = false;
  if (!done) {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    done = true;
  }
#endif
}

namespace {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<EMat<T>>;
template <typename T>
using MapC = Eigen::Map<const EMat<T>>;

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Small per-row generator for dropout masks.
struct XorShift128 {
  uint64_t s0, s1;
  explicit XorShift128(uint64_t seed) {
    s0 = splitmix64(seed);
    s1 = splitmix64(s0);
  }
  uint64_t next() {
    uint64_t x = s0;
    const uint64_t y = s1;
    s0 = y;
    x ^= x << 23;
    s1 = x ^ y ^ (x >> 17) ^ (y >> 26);
    return s1 + y;
  }
};

template <typename T>
void check_rank4(const Tensor<T>& x, const char* who) {
  require(x.rank() == 4, Errc::ShapeMismatch,
          std::string(who) + ": want NHWC input, got " + shape_str(x.shape()));
}

// Valid output-width run for a kernel offset: w such that w + dw - pad lies
// inside [0, W).
inline void run_bounds(int W, int dw, int pad, int* lo, int* hi) {
  *lo = std::max(0, pad - dw);
  *hi = std::min(W, W + pad - dw);
}

// col is [H*W, kh*kw*cin] row-major for one example.
template <typename T>
void im2col(const T* x, int H, int W, int C, int kh, int kw, int ph, int pw, T* col) {
  const int K = kh * kw * C;
  std::memset(col, 0, sizeof(T) * static_cast<size_t>(H) * W * K);
  for (int dh = 0; dh < kh; ++dh) {
    for (int dw = 0; dw < kw; ++dw) {
      const int koff = (dh * kw + dw) * C;
      for (int h = 0; h < H; ++h) {
        const int hs = h + dh - ph;
        if (hs < 0 || hs >= H) continue;
        int wlo, whi;
        run_bounds(W, dw, pw, &wlo, &whi);
        const T* src = x + (static_cast<size_t>(hs) * W + (wlo + dw - pw)) * C;
        T* dst = col + (static_cast<size_t>(h) * W + wlo) * K + koff;
        if (C <= 4) {  // strided scalar copy beats per-pixel memcpy calls
          for (int w = wlo; w < whi; ++w) {
            for (int c = 0; c < C; ++c) dst[c] = src[c];
            src += C;
            dst += K;
          }
        } else {
          for (int w = wlo; w < whi; ++w) {
            std::memcpy(dst, src, sizeof(T) * C);
            src += C;
            dst += K;
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int H, int W, int C, int kh, int kw, int ph, int pw, T* x) {
  const int K = kh * kw * C;
  for (int dh = 0; dh < kh; ++dh) {
    for (int dw = 0; dw < kw; ++dw) {
      const int koff = (dh * kw + dw) * C;
      for (int h = 0; h < H; ++h) {
        const int hs = h + dh - ph;
        if (hs < 0 || hs >= H) continue;
        int wlo, whi;
        run_bounds(W, dw, pw, &wlo, &whi);
        T* dst = x + (static_cast<size_t>(hs) * W + (wlo + dw - pw)) * C;
        const T* src = col + (static_cast<size_t>(h) * W + wlo) * K + koff;
        for (int w = wlo; w < whi; ++w) {
          for (int c = 0; c < C; ++c) dst[c] += src[c];
          src += K;
          dst += C;
        }
      }
    }
  }
}

template <typename T>
RawVec<T>& thread_scratch(size_t n) {
  thread_local RawVec<T> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

uint64_t mix_seed(uint64_t a, uint64_t b) { return splitmix64(a ^ (b * 0x9e3779b97f4a7c15ULL)); }

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
void he_uniform(std::mt19937& rng, Tensor<T>& t, int fan_in) {
  const double limit = std::sqrt(6.0 / std::max(1, fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
}

template void he_uniform<float>(std::mt19937&, Tensor<float>&, int);
template void he_uniform<double>(std::mt19937&, Tensor<double>&, int);

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, int kh, int kw, int cin, int cout)
    : kh_(kh),
      kw_(kw),
      cin_(cin),
      cout_(cout),
      w_(name + ".w", {kh, kw, cin, cout}, true),
      b_(name + ".b", {cout}, false) {}

template <typename T>
void Conv2d<T>::init_he(std::mt19937& rng) {
  he_uniform(rng, w_.value, kh_ * kw_ * cin_);
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, const FwdCtx& ctx) {
  check_rank4(x, "conv2d");
  require(x.dim(3) == cin_, Errc::ShapeMismatch,
          "conv2d: input channels " + std::to_string(x.dim(3)) + " != " + std::to_string(cin_));
  x_ = x;
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int K = kh_ * kw_ * cin_;
  const int ph = (kh_ - 1) / 2, pw = (kw_ - 1) / 2;
  const size_t col_elems = static_cast<size_t>(N) * H * W * K;
  col_cached_ = ctx.mode == Mode::Train && col_elems * sizeof(T) <= (size_t{256} << 20);
  if (col_cached_) {
    col_cache_.resize(col_elems);
  } else {
    col_cache_.clear();
    col_cache_.shrink_to_fit();
  }
  Tensor<T> y = Tensor<T>::uninit({N, H, W, cout_});

  const T* wp = w_.value.data();
  const T* bp = b_.value.data();
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const size_t per = static_cast<size_t>(H) * W * K;
    T* col = col_cached_ ? col_cache_.data() + static_cast<size_t>(n) * per
                         : thread_scratch<T>(per).data();
    im2col(x.data() + static_cast<size_t>(n) * H * W * cin_, H, W, cin_, kh_, kw_, ph, pw, col);
    MapC<T> cm(col, static_cast<int64_t>(H) * W, K);
    MapC<T> wm(wp, K, cout_);
    MapM<T> ym(y.data() + static_cast<size_t>(n) * H * W * cout_, static_cast<int64_t>(H) * W,
               cout_);
    ym.noalias() = cm * wm;
    for (int64_t r = 0; r < ym.rows(); ++r)
      for (int c = 0; c < cout_; ++c) ym(r, c) += bp[c];
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy) {
  const int N = x_.dim(0), H = x_.dim(1), W = x_.dim(2);
  const int K = kh_ * kw_ * cin_;
  const int ph = (kh_ - 1) / 2, pw = (kw_ - 1) / 2;
  Tensor<T> dx({N, H, W, cin_});

  const int nthreads = omp_get_max_threads();
  std::vector<std::vector<T>> dw_part(nthreads), db_part(nthreads);

#pragma omp parallel num_threads(nthreads)
  {
    const int tid = omp_get_thread_num();
    auto& dw_loc = dw_part[tid];
    auto& db_loc = db_part[tid];
    dw_loc.assign(static_cast<size_t>(K) * cout_, T(0));
    db_loc.assign(cout_, T(0));

#pragma omp for schedule(static)
    for (int n = 0; n < N; ++n) {
      const size_t per = static_cast<size_t>(H) * W * K;
      auto& scratch = thread_scratch<T>(per);
      T* col;
      if (col_cached_) {
        col = col_cache_.data() + static_cast<size_t>(n) * per;
      } else {
        col = scratch.data();
        im2col(x_.data() + static_cast<size_t>(n) * H * W * cin_, H, W, cin_, kh_, kw_, ph, pw,
               col);
      }
      MapC<T> cm(col, static_cast<int64_t>(H) * W, K);
      MapC<T> dym(dy.data() + static_cast<size_t>(n) * H * W * cout_,
                  static_cast<int64_t>(H) * W, cout_);
      MapM<T> dwm(dw_loc.data(), K, cout_);
      dwm.noalias() += cm.transpose() * dym;
      for (int64_t r = 0; r < dym.rows(); ++r)
        for (int c = 0; c < cout_; ++c) db_loc[c] += dym(r, c);

      MapM<T> dcol(scratch.data(), static_cast<int64_t>(H) * W, K);
      MapC<T> wm(w_.value.data(), K, cout_);
      dcol.noalias() = dym * wm.transpose();
      col2im_add(scratch.data(), H, W, cin_, kh_, kw_, ph, pw,
                 dx.data() + static_cast<size_t>(n) * H * W * cin_);
    }
  }
  // Combine thread partials in a fixed order so results do not depend on
  // scheduling within a fixed thread count.
  T* dwg = w_.value.grad();
  T* dbg = b_.value.grad();
  for (int t = 0; t < nthreads; ++t) {
    if (dw_part[t].empty()) continue;
    for (size_t i = 0; i < dw_part[t].size(); ++i) dwg[i] += dw_part[t][i];
    for (int c = 0; c < cout_; ++c) dbg[c] += db_part[t][c];
  }
  return dx;
}

template <typename T>
void Conv2d<T>::collect_params(std::vector<Parameter<T>*>& out) {
  out.push_back(&w_);
  out.push_back(&b_);
}

// ------------------------------------------------------------- BatchNorm

template <typename T>
BatchNorm<T>::BatchNorm(std::string name, int channels, T momentum, T eps)
    : name_(std::move(name)),
      channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(name_ + ".gamma", {channels}, false),
      beta_(name_ + ".beta", {channels}, false),
      running_mean_({channels}),
      running_var_({channels}) {
  for (int c = 0; c < channels_; ++c) {
    gamma_.value[c] = T(1);
    running_var_[c] = T(1);
  }
}

template <typename T>
Tensor<T> BatchNorm<T>::forward(const Tensor<T>& x, const FwdCtx& ctx) {
  require(x.rank() >= 2 && x.dim(x.rank() - 1) == channels_, Errc::ShapeMismatch,
          "batchnorm: trailing dim must be " + std::to_string(channels_) + ", got " +
              shape_str(x.shape()));
  x_ = x;
  fwd_mode_ = ctx.mode;
  const int64_t rows = x.size() / channels_;
  const T* xp = x.data();
  mean_.assign(channels_, T(0));
  invstd_.assign(channels_, T(0));

  if (ctx.mode == Mode::Train) {
    // Per-thread partial sums combined in thread order: deterministic for a
    // fixed thread count.
    const int nthreads = omp_get_max_threads();
    std::vector<std::vector<double>> sum_p(nthreads), sq_p(nthreads);
#pragma omp parallel num_threads(nthreads)
    {
      const int tid = omp_get_thread_num();
      sum_p[tid].assign(channels_, 0.0);
      sq_p[tid].assign(channels_, 0.0);
      double* s = sum_p[tid].data();
      double* q = sq_p[tid].data();
#pragma omp for schedule(static)
      for (int64_t r = 0; r < rows; ++r) {
        const T* row = xp + r * channels_;
        for (int c = 0; c < channels_; ++c) {
          s[c] += row[c];
          q[c] += static_cast<double>(row[c]) * row[c];
        }
      }
    }
    std::vector<double> sum(channels_, 0.0), sq(channels_, 0.0);
    for (int t = 0; t < nthreads; ++t) {
      if (sum_p[t].empty()) continue;
      for (int c = 0; c < channels_; ++c) {
        sum[c] += sum_p[t][c];
        sq[c] += sq_p[t][c];
      }
    }
    for (int c = 0; c < channels_; ++c) {
      const double mu = sum[c] / rows;
      const double var = std::max(0.0, sq[c] / rows - mu * mu);
      mean_[c] = static_cast<T>(mu);
      invstd_[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps_)));
      running_mean_[c] = momentum_ * running_mean_[c] + (T(1) - momentum_) * static_cast<T>(mu);
      running_var_[c] = momentum_ * running_var_[c] + (T(1) - momentum_) * static_cast<T>(var);
    }
  } else {
    for (int c = 0; c < channels_; ++c) {
      mean_[c] = running_mean_[c];
      invstd_[c] = static_cast<T>(
          1.0 / std::sqrt(static_cast<double>(running_var_[c]) + static_cast<double>(eps_)));
    }
  }

  Tensor<T> y = Tensor<T>::uninit(x.shape());
  T* yp = y.data();
  const T* g = gamma_.value.data();
  const T* b = beta_.value.data();
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const T* xrow = xp + r * channels_;
    T* yrow = yp + r * channels_;
    for (int c = 0; c < channels_; ++c)
      yrow[c] = g[c] * (xrow[c] - mean_[c]) * invstd_[c] + b[c];
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm<T>::backward(const Tensor<T>& dy) {
  const int64_t rows = dy.size() / channels_;
  const T* dyp = dy.data();
  const T* xp = x_.data();
  const T* g = gamma_.value.data();
  Tensor<T> dx = Tensor<T>::uninit(x_.shape());
  T* dxp = dx.data();

  const int nthreads = omp_get_max_threads();
  std::vector<std::vector<double>> db_p(nthreads), dg_p(nthreads);
#pragma omp parallel num_threads(nthreads)
  {
    const int tid = omp_get_thread_num();
    db_p[tid].assign(channels_, 0.0);
    dg_p[tid].assign(channels_, 0.0);
    double* db = db_p[tid].data();
    double* dg = dg_p[tid].data();
#pragma omp for schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
      const T* dyrow = dyp + r * channels_;
      const T* xrow = xp + r * channels_;
      for (int c = 0; c < channels_; ++c) {
        db[c] += dyrow[c];
        dg[c] += dyrow[c] * (xrow[c] - mean_[c]) * invstd_[c];
      }
    }
  }
  std::vector<double> dbeta(channels_, 0.0), dgamma(channels_, 0.0);
  for (int t = 0; t < nthreads; ++t) {
    if (db_p[t].empty()) continue;
    for (int c = 0; c < channels_; ++c) {
      dbeta[c] += db_p[t][c];
      dgamma[c] += dg_p[t][c];
    }
  }
  for (int c = 0; c < channels_; ++c) {
    gamma_.value.grad()[c] += static_cast<T>(dgamma[c]);
    beta_.value.grad()[c] += static_cast<T>(dbeta[c]);
  }

  if (fwd_mode_ == Mode::Train) {
    const double inv_rows = 1.0 / static_cast<double>(rows);
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
      const T* dyrow = dyp + r * channels_;
      const T* xrow = xp + r * channels_;
      T* dxrow = dxp + r * channels_;
      for (int c = 0; c < channels_; ++c) {
        const double xhat = (xrow[c] - mean_[c]) * invstd_[c];
        dxrow[c] = static_cast<T>(g[c] * invstd_[c] *
                                  (dyrow[c] - inv_rows * dbeta[c] - xhat * inv_rows * dgamma[c]));
      }
    }
  } else {
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
      const T* dyrow = dyp + r * channels_;
      T* dxrow = dxp + r * channels_;
      for (int c = 0; c < channels_; ++c) dxrow[c] = dyrow[c] * g[c] * invstd_[c];
    }
  }
  return dx;
}

template <typename T>
void BatchNorm<T>::collect_params(std::vector<Parameter<T>*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

template <typename T>
void BatchNorm<T>::collect_state(std::vector<std::pair<std::string, Tensor<T>*>>& out) {
  out.emplace_back(name_ + ".running_mean", &running_mean_);
  out.emplace_back(name_ + ".running_var", &running_var_);
}

// ------------------------------------------------------------------ ReLU

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, const FwdCtx&) {
  Tensor<T> y = Tensor<T>::uninit(x.shape());
  const T* xp = x.data();
  T* yp = y.data();
  const int64_t n = x.size();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) yp[i] = xp[i] > T(0) ? xp[i] : T(0);
  y_ = y;
  return y;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx = Tensor<T>::uninit(dy.shape());
  const T* dyp = dy.data();
  const T* yp = y_.data();
  T* dxp = dx.data();
  const int64_t n = dy.size();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) dxp[i] = yp[i] > T(0) ? dyp[i] : T(0);
  return dx;
}

// ------------------------------------------------------------- MaxPool2d

template <typename T>
MaxPool2d<T>::MaxPool2d(int kh, int kw, int sh, int sw, bool same_pad)
    : kh_(kh), kw_(kw), sh_(sh), sw_(sw), same_pad_(same_pad) {
  if (same_pad_)
    require(sh == 1 && sw == 1, Errc::ShapeMismatch, "same-padded pooling is stride 1 only");
}

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x, const FwdCtx&) {
  check_rank4(x, "maxpool2d");
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  int oh, ow, ph, pw;
  if (same_pad_) {
    oh = H;
    ow = W;
    ph = (kh_ - 1) / 2;
    pw = (kw_ - 1) / 2;
  } else {
    oh = (H - kh_ + sh_ - 1) / sh_ + 1;  // ceil mode
    ow = (W - kw_ + sw_ - 1) / sw_ + 1;
    ph = 0;
    pw = 0;
  }
  in_shape_ = x.shape();
  out_shape_ = {N, oh, ow, C};
  Tensor<T> y = Tensor<T>::uninit(out_shape_);
  argmax_.assign(y.size(), 0);
  const T* xp = x.data();
  T* yp = y.data();

#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const size_t xoff = static_cast<size_t>(n) * H * W * C;
    for (int o = 0; o < oh; ++o) {
      const int h0 = std::max(0, o * sh_ - ph);
      const int h1 = std::min(H, o * sh_ - ph + kh_);
      for (int q = 0; q < ow; ++q) {
        const int w0 = std::max(0, q * sw_ - pw);
        const int w1 = std::min(W, q * sw_ - pw + kw_);
        const size_t yoff = ((static_cast<size_t>(n) * oh + o) * ow + q) * C;
        for (int c = 0; c < C; ++c) {
          T best = -std::numeric_limits<T>::infinity();
          int64_t best_idx = -1;
          for (int h = h0; h < h1; ++h) {
            for (int w = w0; w < w1; ++w) {
              const int64_t idx = static_cast<int64_t>(xoff) +
                                  (static_cast<int64_t>(h) * W + w) * C + c;
              if (xp[idx] > best) {
                best = xp[idx];
                best_idx = idx;
              }
            }
          }
          yp[yoff + c] = best;
          argmax_[yoff + c] = best_idx;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx(in_shape_);
  T* dxp = dx.data();
  const T* dyp = dy.data();
  const int64_t n = dy.size();
  for (int64_t i = 0; i < n; ++i) dxp[argmax_[i]] += dyp[i];
  return dx;
}

// --------------------------------------------------------- GlobalMaxPool

template <typename T>
Tensor<T> GlobalMaxPool<T>::forward(const Tensor<T>& x, const FwdCtx&) {
  check_rank4(x, "global_maxpool");
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  in_shape_ = x.shape();
  Tensor<T> y = Tensor<T>::uninit({N, C});
  argmax_.assign(y.size(), 0);
  const T* xp = x.data();
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    T* yrow = y.data() + static_cast<size_t>(n) * C;
    int64_t* arow = argmax_.data() + static_cast<size_t>(n) * C;
    const size_t xoff = static_cast<size_t>(n) * H * W * C;
    for (int c = 0; c < C; ++c) {
      yrow[c] = -std::numeric_limits<T>::infinity();
      arow[c] = -1;
    }
    for (int64_t hw = 0; hw < static_cast<int64_t>(H) * W; ++hw) {
      const T* row = xp + xoff + hw * C;
      for (int c = 0; c < C; ++c) {
        if (row[c] > yrow[c]) {
          yrow[c] = row[c];
          arow[c] = static_cast<int64_t>(xoff) + hw * C + c;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> GlobalMaxPool<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx(in_shape_);
  T* dxp = dx.data();
  const T* dyp = dy.data();
  for (int64_t i = 0; i < dy.size(); ++i) dxp[argmax_[i]] += dyp[i];
  return dx;
}

// ----------------------------------------------------------------- Dense

template <typename T>
Dense<T>::Dense(std::string name, int in_dim, int out_dim)
    : in_dim_(in_dim),
      out_dim_(out_dim),
      w_(name + ".w", {in_dim, out_dim}, true),
      b_(name + ".b", {out_dim}, false) {}

template <typename T>
void Dense<T>::init_he(std::mt19937& rng) {
  he_uniform(rng, w_.value, in_dim_);
}

template <typename T>
Tensor<T> Dense<T>::forward(const Tensor<T>& x, const FwdCtx&) {
  require(x.rank() == 2 && x.dim(1) == in_dim_, Errc::ShapeMismatch,
          "dense: want [N," + std::to_string(in_dim_) + "], got " + shape_str(x.shape()));
  x_ = x;
  const int N = x.dim(0);
  Tensor<T> y = Tensor<T>::uninit({N, out_dim_});
  MapC<T> xm(x.data(), N, in_dim_);
  MapC<T> wm(w_.value.data(), in_dim_, out_dim_);
  MapM<T> ym(y.data(), N, out_dim_);
  ym.noalias() = xm * wm;
  const T* bp = b_.value.data();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < out_dim_; ++c) ym(n, c) += bp[c];
  return y;
}

template <typename T>
Tensor<T> Dense<T>::backward(const Tensor<T>& dy) {
  const int N = x_.dim(0);
  Tensor<T> dx = Tensor<T>::uninit({N, in_dim_});
  MapC<T> dym(dy.data(), N, out_dim_);
  MapC<T> xm(x_.data(), N, in_dim_);
  MapC<T> wm(w_.value.data(), in_dim_, out_dim_);
  MapM<T> dwm(w_.value.grad(), in_dim_, out_dim_);
  MapM<T> dxm(dx.data(), N, in_dim_);
  dwm.noalias() += xm.transpose() * dym;
  dxm.noalias() = dym * wm.transpose();
  T* dbg = b_.value.grad();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < out_dim_; ++c) dbg[c] += dym(n, c);
  return dx;
}

template <typename T>
void Dense<T>::collect_params(std::vector<Parameter<T>*>& out) {
  out.push_back(&w_);
  out.push_back(&b_);
}

// --------------------------------------------------------------- Dropout

template <typename T>
Dropout<T>::Dropout(std::string name, double rate) : rate_(rate), salt_(fnv1a(name)) {
  require(rate >= 0.0 && rate < 1.0, Errc::ShapeMismatch, "dropout rate in [0,1)");
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, const FwdCtx& ctx) {
  if (ctx.mode == Mode::Eval || rate_ == 0.0) {
    active_ = false;
    return x;
  }
  active_ = true;
  const int64_t n = x.size();
  const int rows = x.dim(0);
  const int64_t per_row = n / rows;
  mask_.assign(n, 0);
  Tensor<T> y = Tensor<T>::uninit(x.shape());
  const T scale = static_cast<T>(1.0 / (1.0 - rate_));
  const uint32_t threshold = static_cast<uint32_t>(rate_ * 16777216.0);  // rate * 2^24
  const T* xp = x.data();
  T* yp = y.data();
  uint8_t* mp = mask_.data();

#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    XorShift128 gen(mix_seed(mix_seed(ctx.seed, ctx.step), salt_ + static_cast<uint64_t>(r)));
    const int64_t off = static_cast<int64_t>(r) * per_row;
    for (int64_t i = 0; i < per_row; ++i) {
      const uint32_t u = static_cast<uint32_t>(gen.next() >> 40);
      const bool keep = u >= threshold;
      mp[off + i] = keep;
      yp[off + i] = keep ? xp[off + i] * scale : T(0);
    }
  }
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& dy) {
  if (!active_) return dy;
  Tensor<T> dx = Tensor<T>::uninit(dy.shape());
  const T scale = static_cast<T>(1.0 / (1.0 - rate_));
  const T* dyp = dy.data();
  T* dxp = dx.data();
  const int64_t n = dy.size();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) dxp[i] = mask_[i] ? dyp[i] * scale : T(0);
  return dx;
}

// --------------------------------------------------------------- Softmax

template <typename T>
Tensor<T> Softmax<T>::forward(const Tensor<T>& x, const FwdCtx&) {
  require(x.rank() >= 1, Errc::ShapeMismatch, "softmax needs at least rank 1");
  const int C = x.dim(x.rank() - 1);
  const int64_t rows = x.size() / C;
  Tensor<T> y = Tensor<T>::uninit(x.shape());
  const T* xp = x.data();
  T* yp = y.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* xrow = xp + r * C;
    T* yrow = yp + r * C;
    T mx = xrow[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, xrow[c]);
    double sum = 0.0;
    for (int c = 0; c < C; ++c) {
      const double e = std::exp(static_cast<double>(xrow[c] - mx));
      yrow[c] = static_cast<T>(e);
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int c = 0; c < C; ++c) yrow[c] = static_cast<T>(yrow[c] * inv);
  }
  y_ = y;
  return y;
}

template <typename T>
Tensor<T> Softmax<T>::backward(const Tensor<T>& dy) {
  const int C = dy.dim(dy.rank() - 1);
  const int64_t rows = dy.size() / C;
  Tensor<T> dx = Tensor<T>::uninit(dy.shape());
  const T* dyp = dy.data();
  const T* yp = y_.data();
  T* dxp = dx.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* dyrow = dyp + r * C;
    const T* yrow = yp + r * C;
    T* dxrow = dxp + r * C;
    double dot = 0.0;
    for (int c = 0; c < C; ++c) dot += static_cast<double>(dyrow[c]) * yrow[c];
    for (int c = 0; c < C; ++c)
      dxrow[c] = static_cast<T>(yrow[c] * (dyrow[c] - dot));
  }
  return dx;
}

// ------------------------------------------------------------- Inception

template <typename T>
Inception<T>::Inception(std::vector<Chain> branches, std::vector<int> branch_channels,
                        std::unique_ptr<Conv2d<T>> residual_proj)
    : branches_(std::move(branches)),
      branch_channels_(std::move(branch_channels)),
      residual_proj_(std::move(residual_proj)) {
  require(branches_.size() == branch_channels_.size(), Errc::ShapeMismatch,
          "inception: branch/channel count mismatch");
}

template <typename T>
Tensor<T> Inception<T>::forward(const Tensor<T>& x, const FwdCtx& ctx) {
  check_rank4(x, "inception");
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2);
  int total = 0;
  for (int c : branch_channels_) total += c;

  std::vector<Tensor<T>> outs;
  outs.reserve(branches_.size());
  for (auto& chain : branches_) {
    Tensor<T> t = x;
    for (auto& layer : chain) t = layer->forward(t, ctx);
    outs.push_back(std::move(t));
  }
  for (size_t b = 0; b < outs.size(); ++b)
    require(outs[b].dim(3) == branch_channels_[b] && outs[b].dim(1) == H && outs[b].dim(2) == W,
            Errc::ShapeMismatch, "inception branch output shape");

  Tensor<T> y = Tensor<T>::uninit({N, H, W, total});
  T* yp = y.data();
  const int64_t hw = static_cast<int64_t>(N) * H * W;
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < hw; ++r) {
    T* dst = yp + r * total;
    for (size_t b = 0; b < outs.size(); ++b) {
      const int cb = branch_channels_[b];
      const T* src = outs[b].data() + r * cb;
      std::memcpy(dst, src, sizeof(T) * cb);
      dst += cb;
    }
  }

  if (residual_proj_) {
    Tensor<T> skip = residual_proj_->forward(x, ctx);
    const T* sp = skip.data();
    const int64_t n = y.size();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) yp[i] += sp[i];
  }
  return y;
}

template <typename T>
Tensor<T> Inception<T>::backward(const Tensor<T>& dy) {
  const int N = dy.dim(0), H = dy.dim(1), W = dy.dim(2);
  int total = 0;
  for (int c : branch_channels_) total += c;
  require(dy.dim(3) == total, Errc::ShapeMismatch, "inception backward channels");

  Tensor<T> dx;
  const int64_t hw = static_cast<int64_t>(N) * H * W;
  int coff = 0;
  for (size_t b = 0; b < branches_.size(); ++b) {
    const int cb = branch_channels_[b];
    Tensor<T> slice = Tensor<T>::uninit({N, H, W, cb});
    T* sp = slice.data();
    const T* dyp = dy.data();
#pragma omp parallel for schedule(static)
    for (int64_t r = 0; r < hw; ++r)
      std::memcpy(sp + r * cb, dyp + r * total + coff, sizeof(T) * cb);
    coff += cb;

    for (auto it = branches_[b].rbegin(); it != branches_[b].rend(); ++it)
      slice = (*it)->backward(slice);

    if (!dx.defined()) {
      dx = std::move(slice);
    } else {
      T* dst = dx.data();
      const T* src = slice.data();
      const int64_t n = dx.size();
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
    }
  }

  if (residual_proj_) {
    Tensor<T> dskip = residual_proj_->backward(dy);
    T* dst = dx.data();
    const T* src = dskip.data();
    const int64_t n = dx.size();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
  }
  return dx;
}

template <typename T>
void Inception<T>::collect_params(std::vector<Parameter<T>*>& out) {
  for (auto& chain : branches_)
    for (auto& layer : chain) layer->collect_params(out);
  if (residual_proj_) residual_proj_->collect_params(out);
}

template <typename T>
void Inception<T>::collect_state(std::vector<std::pair<std::string, Tensor<T>*>>& out) {
  for (auto& chain : branches_)
    for (auto& layer : chain) layer->collect_state(out);
}

// ------------------------------------------------------------------ loss

template <typename T>
T kl_divergence(const Tensor<T>& target, const Tensor<T>& pred, Tensor<T>* d_pred) {
  require(target.shape() == pred.shape() && target.rank() == 2, Errc::ShapeMismatch,
          "kl: want matching [N,C] tensors");
  const int C = target.dim(1);
  const int64_t N = target.dim(0);
  const T* yp = target.data();
  const T* pp = pred.data();
  if (d_pred && !(d_pred->shape() == pred.shape())) *d_pred = Tensor<T>::uninit(pred.shape());
  T* dp = d_pred ? d_pred->data() : nullptr;

  constexpr double kClamp = 1e-12;
  double loss = 0.0;
  for (int64_t n = 0; n < N; ++n) {
    double ysum = 0.0, psum = 0.0;
    for (int c = 0; c < C; ++c) {
      const double y = yp[n * C + c];
      const double p = std::max(static_cast<double>(pp[n * C + c]), kClamp);
      ysum += y;
      psum += pp[n * C + c];
      if (y > 0.0) {
        loss += y * (std::log(y) - std::log(p));
        if (dp) dp[n * C + c] = static_cast<T>(-y / p);
      } else if (dp) {
        dp[n * C + c] = T(0);
      }
    }
    require(std::abs(ysum - 1.0) < 1e-4 && std::abs(psum - 1.0) < 1e-4, Errc::ShapeMismatch,
            "kl: rows must be distributions");
  }
  return static_cast<T>(loss);
}

template <typename T>
T l2_penalty(const std::vector<Parameter<T>*>& params, T lambda, bool accumulate_grad) {
  double acc = 0.0;
  for (auto* p : params) {
    if (!p->weight_decayed) continue;
    const T* v = p->value.data();
    T* g = accumulate_grad ? p->value.grad() : nullptr;
    for (int64_t i = 0; i < p->value.size(); ++i) {
      acc += static_cast<double>(v[i]) * v[i];
      if (g) g[i] += lambda * v[i];
    }
  }
  return static_cast<T>(0.5 * static_cast<double>(lambda) * acc);
}

template float kl_divergence<float>(const Tensor<float>&, const Tensor<float>&, Tensor<float>*);
template double kl_divergence<double>(const Tensor<double>&, const Tensor<double>&,
                                      Tensor<double>*);
template float l2_penalty<float>(const std::vector<Parameter<float>*>&, float, bool);
template double l2_penalty<double>(const std::vector<Parameter<double>*>&, double, bool);

template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template class ReLU<float>;
template class ReLU<double>;
template class MaxPool2d<float>;
template class MaxPool2d<double>;
template class GlobalMaxPool<float>;
template class GlobalMaxPool<double>;
template class Dense<float>;
template class Dense<double>;
template class Dropout<float>;
template class Dropout<double>;
template class Softmax<float>;
template class Softmax<double>;
template class Inception<float>;
template class Inception<double>;

}  // namespace respnet::nn
