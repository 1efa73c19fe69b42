#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "respnet/error.hpp"

namespace respnet::nn {

inline int64_t numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int>& shape);

// std::allocator that default-initializes on resize, so buffers that are
// fully overwritten skip the zeroing pass.
template <typename T, typename A = std::allocator<T>>
struct default_init_allocator : public A {
  template <typename U>
  struct rebind {
    using other =
        default_init_allocator<U, typename std::allocator_traits<A>::template rebind_alloc<U>>;
  };
  using A::A;
  template <typename U>
  void construct(U* ptr) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(ptr)) U;
  }
  template <typename U, typename... Args>
  void construct(U* ptr, Args&&... args) {
    std::allocator_traits<A>::construct(static_cast<A&>(*this), ptr,
                                        std::forward<Args>(args)...);
  }
};

template <typename T>
using RawVec = std::vector<T, default_init_allocator<T>>;

// Dense n-dimensional array with an optional gradient buffer of the same
// shape. Copies share storage; clone() deep-copies. Tensor(shape) zero
// fills; uninit(shape) skips the fill for buffers written in full.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_ = std::make_shared<RawVec<T>>();
    data_->assign(numel(shape_), T(0));
  }
  Tensor(std::vector<int> shape, std::vector<T> values) : shape_(std::move(shape)) {
    require(numel(shape_) == static_cast<int64_t>(values.size()), Errc::ShapeMismatch,
            "value count does not match shape");
    data_ = std::make_shared<RawVec<T>>(values.begin(), values.end());
  }

  static Tensor uninit(std::vector<int> shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<RawVec<T>>();
    t.data_->resize(numel(t.shape_));
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[i]; }
  int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
  bool defined() const { return static_cast<bool>(data_); }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }
  T& operator[](int64_t i) { return (*data_)[i]; }
  const T& operator[](int64_t i) const { return (*data_)[i]; }

  bool has_grad() const { return static_cast<bool>(grad_); }
  void alloc_grad() {
    if (!grad_) {
      grad_ = std::make_shared<RawVec<T>>();
      grad_->assign(data_->size(), T(0));
    }
  }
  T* grad() { return grad_->data(); }
  const T* grad() const { return grad_->data(); }
  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), T(0));
  }

  Tensor clone() const {
    Tensor out;
    out.shape_ = shape_;
    if (data_) out.data_ = std::make_shared<RawVec<T>>(*data_);
    if (grad_) out.grad_ = std::make_shared<RawVec<T>>(*grad_);
    return out;
  }

  // Same storage viewed under a different shape of equal element count.
  Tensor reshaped(std::vector<int> shape) const {
    require(numel(shape) == size(), Errc::ShapeMismatch,
            "reshape " + shape_str(shape_) + " -> " + shape_str(shape));
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
  }

 private:
  std::vector<int> shape_;
  std::shared_ptr<RawVec<T>> data_;
  std::shared_ptr<RawVec<T>> grad_;
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;  // gradient buffer allocated
  bool weight_decayed = false;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> shape, bool decayed)
      : name(std::move(n)), value(std::move(shape)), weight_decayed(decayed) {
    value.alloc_grad();
  }
};

}  // namespace respnet::nn
