#pragma once

// Thin RAII layer over FFTW for unnormalized 2-D complex transforms.

#include <fftw3.h>

#include <complex>
#include <mutex>
#include <vector>

namespace salattack::fft {

using Complex = std::complex<double>;

namespace detail {

// FFTW's planner is not thread-safe; execution of distinct plans is.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace detail

/// In-place 2-D DFT of a rows x cols row-major buffer. `inverse` uses the
/// positive exponent; neither direction normalizes.
inline void transform2d(std::vector<Complex>& data, int rows, int cols, bool inverse) {
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(detail::planner_mutex());
    plan = fftw_plan_dft_2d(rows, cols, buf, buf, inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::lock_guard lock(detail::planner_mutex());
  fftw_destroy_plan(plan);
}

inline std::vector<Complex> forward(const std::vector<double>& real, int rows, int cols) {
  std::vector<Complex> out(real.begin(), real.end());
  transform2d(out, rows, cols, false);
  return out;
}

/// Normalized inverse (divides by rows * cols).
inline std::vector<Complex> inverse(std::vector<Complex> spectrum, int rows, int cols) {
  transform2d(spectrum, rows, cols, true);
  const double scale = 1.0 / (static_cast<double>(rows) * cols);
  for (auto& v : spectrum) v *= scale;
  return spectrum;
}

/// Signed frequency of DFT bin i for an n-point transform, in cycles/sample (-0.5, 0.5].
inline double frequency(int i, int n) {
  const int k = i <= n / 2 ? i : i - n;
  return static_cast<double>(k) / n;
}

}  // namespace salattack::fft
