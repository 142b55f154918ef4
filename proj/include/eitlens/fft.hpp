#pragma once

// Thin RAII wrapper over an in-place FFTW 2-D complex transform.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <mutex>
#include <span>
#include <utility>

#include "eitlens/error.hpp"

namespace eitlens {

namespace detail {
// FFTW planning is not thread-safe; execution of distinct plans is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

/// Owns an aligned complex buffer of ny*nx elements (row-major, x fastest) and the
/// forward/backward plans acting on it. Transforms are unnormalized.
class FftWorkspace {
 public:
  FftWorkspace(int nx, int ny) : nx_(nx), ny_(ny) {
    const auto n = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      buffer_ = fftw_alloc_complex(n);
      if (buffer_ == nullptr) throw Error(ErrorCategory::invalid_argument, "FFT buffer allocation failed");
      // FFTW_ESTIMATE keeps plans (and therefore results) identical from run to run.
      forward_ = fftw_plan_dft_2d(ny, nx, buffer_, buffer_, FFTW_FORWARD, FFTW_ESTIMATE);
      backward_ = fftw_plan_dft_2d(ny, nx, buffer_, buffer_, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    if (forward_ == nullptr || backward_ == nullptr) {
      release();
      throw Error(ErrorCategory::invalid_argument, "FFTW planning failed");
    }
  }

  FftWorkspace(const FftWorkspace&) = delete;
  FftWorkspace& operator=(const FftWorkspace&) = delete;
  FftWorkspace(FftWorkspace&& o) noexcept
      : nx_(o.nx_), ny_(o.ny_), buffer_(std::exchange(o.buffer_, nullptr)),
        forward_(std::exchange(o.forward_, nullptr)), backward_(std::exchange(o.backward_, nullptr)) {}
  FftWorkspace& operator=(FftWorkspace&& o) noexcept {
    if (this != &o) {
      release();
      nx_ = o.nx_;
      ny_ = o.ny_;
      buffer_ = std::exchange(o.buffer_, nullptr);
      forward_ = std::exchange(o.forward_, nullptr);
      backward_ = std::exchange(o.backward_, nullptr);
    }
    return *this;
  }
  ~FftWorkspace() { release(); }

  std::span<std::complex<double>> data() noexcept {
    return {reinterpret_cast<std::complex<double>*>(buffer_), size()};
  }
  std::span<const std::complex<double>> data() const noexcept {
    return {reinterpret_cast<const std::complex<double>*>(buffer_), size()};
  }
  std::size_t size() const noexcept {
    return static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_);
  }

  void forward() noexcept { fftw_execute(forward_); }
  void backward() noexcept { fftw_execute(backward_); }

 private:
  void release() noexcept {
    std::lock_guard lock(detail::fftw_planner_mutex());
    if (forward_ != nullptr) fftw_destroy_plan(forward_);
    if (backward_ != nullptr) fftw_destroy_plan(backward_);
    if (buffer_ != nullptr) fftw_free(buffer_);
    forward_ = backward_ = nullptr;
    buffer_ = nullptr;
  }

  int nx_, ny_;
  fftw_complex* buffer_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

}  // namespace eitlens
