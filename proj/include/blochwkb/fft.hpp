#pragma once

#include <array>
#include <complex>
#include <memory>
#include <mutex>

#include <fftw3.h>

#include "blochwkb/core_types.hpp"

namespace blochwkb {

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
struct PlanDeleter {
  void operator()(fftw_plan_s* p) const {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(p);
  }
};
using PlanHandle = std::unique_ptr<fftw_plan_s, PlanDeleter>;
}  // namespace detail

// Unnormalized 3D complex FFT on row-major (d0, d1, d2) arrays.
// FFTW_ESTIMATE plans are deterministic; execution is thread safe.
class Fft3 {
 public:
  explicit Fft3(std::array<int, 3> dims) : dims_(dims) {
    const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    std::unique_ptr<fftw_complex[], decltype(&fftw_free)> scratch(
        static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n)), &fftw_free);
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fwd_.reset(fftw_plan_dft_3d(dims[0], dims[1], dims[2], scratch.get(), scratch.get(),
                                FFTW_FORWARD, flags));
    bwd_.reset(fftw_plan_dft_3d(dims[0], dims[1], dims[2], scratch.get(), scratch.get(),
                                FFTW_BACKWARD, flags));
  }

  int size() const { return dims_[0] * dims_[1] * dims_[2]; }
  const std::array<int, 3>& dims() const { return dims_; }

  void forward(cplx* data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(fwd_.get(), p, p);
  }
  // Inverse transform including the 1/n factor.
  void backward(cplx* data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(bwd_.get(), p, p);
    const double s = 1.0 / size();
    for (int i = 0; i < size(); ++i) data[i] *= s;
  }

  void forward(VecX& v) const { forward(v.data()); }
  void backward(VecX& v) const { backward(v.data()); }

 private:
  std::array<int, 3> dims_;
  detail::PlanHandle fwd_;
  detail::PlanHandle bwd_;
};

// Signed integer frequency of FFT bin j on an axis of length m.
inline int fft_frequency(int j, int m) { return j <= (m - 1) / 2 ? j : j - m; }

}  // namespace blochwkb
