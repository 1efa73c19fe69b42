#include "respnet/adam.hpp"

#include <cmath>

namespace respnet::nn {

template <typename T>
Adam<T>::Adam(std::vector<Parameter<T>*> params, AdamConfig<T> cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i]->value.size(), T(0));
    v_[i].assign(params_[i]->value.size(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    T* w = params_[i]->value.data();
    const T* g = params_[i]->value.grad();
    T* m = m_[i].data();
    T* v = v_[i].data();
    const int64_t n = params_[i]->value.size();
    for (int64_t j = 0; j < n; ++j) {
      m[j] = cfg_.beta1 * m[j] + (T(1) - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (T(1) - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= static_cast<T>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto* p : params_) p->value.zero_grad();
}

template class Adam<float>;
template class Adam<double>;

}  // namespace respnet::nn
