#pragma once

// Thin RAII wrapper over FFTW real transforms.

#include <fftw3.h>

#include <complex>
#include <vector>

namespace art2music::detail {

class RealFft {
 public:
  explicit RealFft(int n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const noexcept { return n_; }
  int bins() const noexcept { return n_ / 2 + 1; }

  // n real samples -> n/2+1 complex bins.
  void forward(const double* in, std::complex<double>* out) const;
  // n/2+1 bins -> n real samples, scaled by 1/n so inverse(forward(x)) == x.
  void inverse(const std::complex<double>* in, double* out) const;

 private:
  int n_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
  mutable std::vector<double> real_scratch_;
  mutable std::vector<std::complex<double>> complex_scratch_;
};

}  // namespace art2music::detail
