#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace respnet {

// Thin wrapper over the system FFT backend. Plans are cached per length and
// created under a lock (the planner is not thread-safe); execution on
// distinct buffers is safe from multiple threads.
class Fft {
 public:
  // Aligned complex work buffer suitable for in-place transforms.
  class Buffer {
   public:
    explicit Buffer(size_t n);
    ~Buffer();
    Buffer(const Buffer&) = delete;
    Buffer& operator=(const Buffer&) = delete;

    std::complex<double>* data() { return data_; }
    const std::complex<double>* data() const { return data_; }
    size_t size() const { return n_; }
    void zero();

   private:
    std::complex<double>* data_;
    size_t n_;
  };

  static void forward(Buffer& buf);
  static void inverse(Buffer& buf);  // normalized by 1/n

  static size_t next_pow2(size_t n);
};

}  // namespace respnet
