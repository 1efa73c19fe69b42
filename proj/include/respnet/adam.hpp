#pragma once

#include <cstdint>
#include <vector>

#include "respnet/tensor.hpp"

namespace respnet::nn {

template <typename T>
struct AdamConfig {
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

// Standard Adam with bias correction. Moment buffers are aligned with the
// parameter list passed at construction.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, AdamConfig<T> cfg);

  void step();
  void zero_grad();
  int64_t steps() const { return t_; }
  const AdamConfig<T>& config() const { return cfg_; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamConfig<T> cfg_;
  std::vector<std::vector<T>> m_, v_;
  int64_t t_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace respnet::nn
