#pragma once

#include <fftw3.h>

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <mutex>
#include <vector>

#include "eddyscope/errors.hpp"
#include "eddyscope/solver/voxel.hpp"

namespace eddyscope::solver {

/// Integral of 1/|y| over the unit cube centered at the origin.
inline constexpr double kUnitCubeSelfIntegral = 2.3800773639795527;  // 3 ln(2+sqrt3) - pi/2

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Owns an in-place complex 3-D buffer with forward and backward plans.
class FftBox {
 public:
  explicit FftBox(std::array<int, 3> n) : n_(n), size_(static_cast<std::size_t>(n[0]) * n[1] * n[2]) {
    data_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * size_));
    if (!data_) fail(ErrorKind::NoConvergence, "out of memory allocating FFT buffer");
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fwd_ = fftw_plan_dft_3d(n[0], n[1], n[2], data_, data_, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_3d(n[0], n[1], n[2], data_, data_, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  FftBox(const FftBox&) = delete;
  FftBox& operator=(const FftBox&) = delete;
  ~FftBox() {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(data_);
  }

  std::complex<double>* data() { return reinterpret_cast<std::complex<double>*>(data_); }
  std::size_t size() const { return size_; }
  const std::array<int, 3>& dims() const { return n_; }
  void forward() { fftw_execute(fwd_); }
  void backward() { fftw_execute(bwd_); }
  void clear() { std::fill(data(), data() + size_, std::complex<double>(0.0)); }

 private:
  std::array<int, 3> n_;
  std::size_t size_;
  fftw_complex* data_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
};

}  // namespace detail

/// Discrete Newtonian potential on a regular lattice of cubes of edge h:
/// off-diagonal weights h^2 / (4 pi |m - n|) and self weight h^2 C / (4 pi).
/// Applied by zero-padded circular convolution.
class NewtonPotential {
 public:
  NewtonPotential(std::array<int, 3> dims, double h)
      : dims_(dims), box_({2 * dims[0], 2 * dims[1], 2 * dims[2]}), kernel_(box_.size()) {
    const auto& p = box_.dims();
    box_.clear();
    auto* d = box_.data();
    const double c = h * h / (4.0 * kPi);
    for (int i = 0; i < p[0]; ++i)
      for (int j = 0; j < p[1]; ++j)
        for (int k = 0; k < p[2]; ++k) {
          const int di = i <= p[0] / 2 ? i : i - p[0];
          const int dj = j <= p[1] / 2 ? j : j - p[1];
          const int dk = k <= p[2] / 2 ? k : k - p[2];
          const double r = std::sqrt(double(di) * di + double(dj) * dj + double(dk) * dk);
          d[(static_cast<std::size_t>(i) * p[1] + j) * p[2] + k] = r == 0.0 ? c * kUnitCubeSelfIntegral : c / r;
        }
    box_.forward();
    const double inv = 1.0 / static_cast<double>(box_.size());
    for (std::size_t n = 0; n < box_.size(); ++n) kernel_[n] = d[n] * inv;
  }

  const std::array<int, 3>& dims() const { return dims_; }

  /// out[n] = sum_m K(pos[n] - pos[m]) in[m]; positions must lie in [0, dims).
  void apply(const std::vector<Index3>& pos, const std::complex<double>* in, std::complex<double>* out) {
    const auto& p = box_.dims();
    box_.clear();
    auto* d = box_.data();
    auto at = [&](const Index3& q) { return (static_cast<std::size_t>(q[0]) * p[1] + q[1]) * p[2] + q[2]; };
    for (std::size_t n = 0; n < pos.size(); ++n) d[at(pos[n])] = in[n];
    box_.forward();
    for (std::size_t n = 0; n < box_.size(); ++n) d[n] *= kernel_[n];
    box_.backward();
    for (std::size_t n = 0; n < pos.size(); ++n) out[n] = d[at(pos[n])];
  }

 private:
  std::array<int, 3> dims_;
  detail::FftBox box_;
  std::vector<std::complex<double>> kernel_;
};

}  // namespace eddyscope::solver
