#pragma once

#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "respnet/tensor.hpp"

namespace respnet::nn {

// glibc malloc tuning for the large, frequently recycled activation
// buffers. Called once from the training/eval entry points.
void tune_allocator();

enum class Mode { Train, Eval };

// Per-forward context. Dropout masks are derived from (seed, step, layer
// salt, row), so training is reproducible independent of thread count.
struct FwdCtx {
  Mode mode = Mode::Eval;
  uint64_t seed = 0;
  uint64_t step = 0;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, const FwdCtx& ctx) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
  virtual void collect_params(std::vector<Parameter<T>*>& out) { (void)out; }
  // Non-trainable named state carried in checkpoints (batchnorm running stats).
  virtual void collect_state(std::vector<std::pair<std::string, Tensor<T>*>>& out) {
    (void)out;
  }
  virtual const char* kind() const = 0;
};

// Same-padded stride-1 cross-correlation, NHWC, weights [kh,kw,cin,cout].
template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(std::string name, int kh, int kw, int cin, int cout);
  void init_he(std::mt19937& rng);

  Tensor<T> forward(const Tensor<T>& x, const FwdCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void collect_params(std::vector<Parameter<T>*>& out) override;
  const char* kind() const override { return "conv2d"; }

  Parameter<T>& weight() { return w_; }
  Parameter<T>& bias() { return b_; }
  int out_channels() const { return cout_; }

 private:
  int kh_, kw_, cin_, cout_;
  Parameter<T> w_, b_;
  Tensor<T> x_;
  // im2col output kept between forward and backward (bounded; recomputed
  // when the batch is too large to keep).
  std::vector<T> col_cache_;
  bool col_cached_ = false;
};

// Per-channel batch normalization over all non-channel dims. Train mode uses
// batch statistics and updates running stats; Eval uses the running stats.
template <typename T>
class BatchNorm : public Layer<T> {
 public:
  BatchNorm(std::string name, int channels, T momentum = T(0.99), T eps = T(1e-3));

  Tensor<T> forward(const Tensor<T>& x, const FwdCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void collect_params(std::vector<Parameter<T>*>& out) override;
  void collect_state(std::vector<std::pair<std::string, Tensor<T>*>>& out) override;
  const char* kind() const override { return "batchnorm"; }

  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }

 private:
  std::string name_;
  int channels_;
  T momentum_, eps_;
  Parameter<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> x_;
  std::vector<T> mean_, invstd_;
  Mode fwd_mode_ = Mode::Eval;
};

template <typename T>
class ReLU : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, const FwdCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  const char* kind() const override { return "relu"; }

 private:
  Tensor<T> y_;
};

// Max pooling. Two padding regimes cover the architectures here:
//  - ceil mode, no padding: output ceil((D-k)/s)+1, windows clipped at the
//    border (used for the 2x2 stride-2 block pools);
//  - same, stride 1: output D with (k-1)/2 leading padding (branch pools).
template <typename T>
class MaxPool2d : public Layer<T> {
 public:
  MaxPool2d(int kh, int kw, int sh, int sw, bool same_pad = false);

  Tensor<T> forward(const Tensor<T>& x, const FwdCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  const char* kind() const override { return "maxpool2d"; }

 private:
  int kh_, kw_, sh_, sw_;
  bool same_pad_;
  std::vector<int> in_shape_;
  std::vector<int64_t> argmax_;
  std::vector<int> out_shape_;
};

// [N,H,W,C] -> [N,C] max over the spatial dims.
template <typename T>
class GlobalMaxPool : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, const FwdCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  const char* kind() const override { return "global_maxpool"; }

 private:
  std::vector<int> in_shape_;
  std::vector<int64_t> argmax_;
};

template <typename T>
class Dense : public Layer<T> {
 public:
  Dense(std::string name, int in_dim, int out_dim);
  void init_he(std::mt19937& rng);

  Tensor<T> forward(const Tensor<T>& x, const FwdCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void collect_params(std::vector<Parameter<T>*>& out) override;
  const char* kind() const override { return "dense"; }

  Parameter<T>& weight() { return w_; }
  Parameter<T>& bias() { return b_; }

 private:
  int in_dim_, out_dim_;
  Parameter<T> w_, b_;
  Tensor<T> x_;
};

// Inverted dropout; identity in Eval mode.
template <typename T>
class Dropout : public Layer<T> {
 public:
  Dropout(std::string name, double rate);

  Tensor<T> forward(const Tensor<T>& x, const FwdCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  const char* kind() const override { return "dropout"; }

 private:
  double rate_;
  uint64_t salt_;
  bool active_ = false;
  std::vector<uint8_t> mask_;
};

// Numerically stabilized softmax over the last dimension.
template <typename T>
class Softmax : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, const FwdCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  const char* kind() const override { return "softmax"; }

 private:
  Tensor<T> y_;
};

// Multi-branch block: each branch is a chain of layers, outputs concatenate
// along the channel dim; an optional 1x1 projection of the input is added on
// top (residual form).
template <typename T>
class Inception : public Layer<T> {
 public:
  using Chain = std::vector<std::unique_ptr<Layer<T>>>;
  Inception(std::vector<Chain> branches, std::vector<int> branch_channels,
            std::unique_ptr<Conv2d<T>> residual_proj);

  Tensor<T> forward(const Tensor<T>& x, const FwdCtx& ctx) override;
  Tensor<T> backward(const Tensor<T>& dy) override;
  void collect_params(std::vector<Parameter<T>*>& out) override;
  void collect_state(std::vector<std::pair<std::string, Tensor<T>*>>& out) override;
  const char* kind() const override { return "inception"; }

 private:
  std::vector<Chain> branches_;
  std::vector<int> branch_channels_;
  std::unique_ptr<Conv2d<T>> residual_proj_;
};

// Kullback-Leibler divergence between row distributions, summed over the
// batch; predictions clamped at 1e-12, target-zero terms contribute nothing.
// When d_pred is non-null it receives dLoss/dPred.
template <typename T>
T kl_divergence(const Tensor<T>& target, const Tensor<T>& pred, Tensor<T>* d_pred);

// (lambda/2) * sum of squared weight-decayed parameters; optionally
// accumulates lambda*w into the gradients.
template <typename T>
T l2_penalty(const std::vector<Parameter<T>*>& params, T lambda, bool accumulate_grad);

template <typename T>
void he_uniform(std::mt19937& rng, Tensor<T>& t, int fan_in);

uint64_t mix_seed(uint64_t a, uint64_t b);
uint64_t fnv1a(const std::string& s);

extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class BatchNorm<float>;
extern template class BatchNorm<double>;
extern template class ReLU<float>;
extern template class ReLU<double>;
extern template class MaxPool2d<float>;
extern template class MaxPool2d<double>;
extern template class GlobalMaxPool<float>;
extern template class GlobalMaxPool<double>;
extern template class Dense<float>;
extern template class Dense<double>;
extern template class Dropout<float>;
extern template class Dropout<double>;
extern template class Softmax<float>;
extern template class Softmax<double>;
extern template class Inception<float>;
extern template class Inception<double>;

}  // namespace respnet::nn
