#include "fft.hpp"

#include <algorithm>
#include <mutex>

namespace art2music::detail {

namespace {
// FFTW's planner is not re-entrant; execution on distinct arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(int n) : n_(n), real_scratch_(n), complex_scratch_(n / 2 + 1) {
  std::lock_guard lock(planner_mutex());
  auto* c = reinterpret_cast<fftw_complex*>(complex_scratch_.data());
  forward_ = fftw_plan_dft_r2c_1d(n, real_scratch_.data(), c, FFTW_ESTIMATE | FFTW_UNALIGNED);
  inverse_ = fftw_plan_dft_c2r_1d(n, c, real_scratch_.data(),
                                  FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_DESTROY_INPUT);
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(forward_);
  fftw_destroy_plan(inverse_);
}

void RealFft::forward(const double* in, std::complex<double>* out) const {
  std::copy(in, in + n_, real_scratch_.begin());
  fftw_execute_dft_r2c(forward_, real_scratch_.data(), reinterpret_cast<fftw_complex*>(out));
}

void RealFft::inverse(const std::complex<double>* in, double* out) const {
  std::copy(in, in + bins(), complex_scratch_.begin());
  fftw_execute_dft_c2r(inverse_, reinterpret_cast<fftw_complex*>(complex_scratch_.data()), out);
  const double scale = 1.0 / n_;
  for (int i = 0; i < n_; ++i) out[i] *= scale;
}

}  // namespace art2music::detail
