#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "salattack/errors.hpp"
#include "salattack/fft.hpp"
#include "salattack/image.hpp"
#include "salattack/raster_io.hpp"

namespace salattack {

inline constexpr float kDefaultPhi = 0.1f;

/// Per-location saliency score in [0,1].
class SaliencyMap {
 public:
  SaliencyMap() = default;
  SaliencyMap(int height, int width, std::vector<float> scores)
      : height_(height), width_(width), scores_(std::move(scores)) {
    if (height < 1 || width < 1) throw InvalidInput("SaliencyMap: empty geometry");
    if (scores_.size() != static_cast<std::size_t>(height) * width)
      throw InvalidInput("SaliencyMap: score count does not match geometry");
    for (float s : scores_) {
      if (!(s >= 0.0f && s <= 1.0f)) throw InvalidInput("SaliencyMap: score outside [0,1]");
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  float operator()(int row, int col) const { return scores_[static_cast<std::size_t>(row) * width_ + col]; }
  const std::vector<float>& scores() const { return scores_; }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> scores_;
};

/// bit = 1 iff score >= phi.
inline SalientMask binarize(const SaliencyMap& map, float phi = kDefaultPhi) {
  std::vector<std::uint8_t> bits(map.scores().size());
  std::transform(map.scores().begin(), map.scores().end(), bits.begin(),
                 [phi](float s) { return static_cast<std::uint8_t>(s >= phi ? 1 : 0); });
  SalientMask m(map.height(), map.width(), std::move(bits));
  m.phi = phi;
  return m;
}

inline SalientMask complement(const SalientMask& mask) {
  std::vector<std::uint8_t> bits(mask.bits().begin(), mask.bits().end());
  for (auto& b : bits) b = b ? 0 : 1;
  return SalientMask(mask.height(), mask.width(), std::move(bits));
}

inline SaliencyMap resize_map(const SaliencyMap& map, int height, int width) {
  if (map.height() == height && map.width() == width) return map;
  auto scores = resize_plane(map.scores(), map.height(), map.width(), 1, height, width);
  for (float& s : scores) s = std::clamp(s, 0.0f, 1.0f);
  return SaliencyMap(height, width, std::move(scores));
}

/// Loads an 8-bit grayscale map (score = byte / 255), resampled to
/// height x width when given and different. RGB rasters are reduced to luma.
inline SaliencyMap load_saliency(const std::filesystem::path& path, int height = 0, int width = 0) {
  const Image raw = load_image(path);
  SaliencyMap map(raw.height(), raw.width(), luma(raw));
  if (height > 0 && width > 0) map = resize_map(map, height, width);
  return map;
}

inline void save_saliency(const SaliencyMap& map, const std::filesystem::path& path) {
  save_image(Image(map.height(), map.width(), 1, map.scores()), path);
}

namespace detail {

// Separable Gaussian blur with mirrored borders.
inline std::vector<double> gaussian_blur(const std::vector<double>& src, int rows, int cols, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& k : kernel) k /= sum;
  auto mirror = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  std::vector<double> tmp(src.size()), out(src.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * src[r * cols + mirror(c + i, cols)];
      tmp[r * cols + c] = acc;
    }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp[mirror(r + i, rows) * cols + c];
      out[r * cols + c] = acc;
    }
  return out;
}

}  // namespace detail

struct SpectralResidualParams {
  int working_side = 64;   // luma is resampled to this square grid before the FFT
  int box = 3;             // log-amplitude averaging window
  double sigma = 2.5;      // post-smoothing, in working-grid pixels
};

/// Model-free saliency from the residual of the log-amplitude spectrum,
/// normalized to [0,1] by its maximum. Flat images give an all-zero map.
inline SaliencyMap spectral_residual(const Image& x, const SpectralResidualParams& p = {}) {
  const auto y = luma(x);
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  if (*hi - *lo <= 1e-12f) return SaliencyMap(x.height(), x.width(), std::vector<float>(y.size(), 0.0f));

  const int n = p.working_side;
  const auto small = resize_plane(y, x.height(), x.width(), 1, n, n);
  const auto spectrum = fft::forward(std::vector<double>(small.begin(), small.end()), n, n);

  // Bins with no energy (e.g. the exact sinc zeros of synthetic shapes) carry
  // no residual and are left out of the local log-amplitude average.
  double peak_amp = 0.0;
  for (const auto& v : spectrum) peak_amp = std::max(peak_amp, std::abs(v));
  const double floor_amp = peak_amp * 1e-9;
  std::vector<double> log_amp(spectrum.size(), 0.0);
  std::vector<char> valid(spectrum.size(), 0);
  for (std::size_t i = 0; i < spectrum.size(); ++i) {
    const double a = std::abs(spectrum[i]);
    if (a > floor_amp) {
      log_amp[i] = std::log(a);
      valid[i] = 1;
    }
  }
  // The spectrum is periodic, so the averaging window wraps around.
  const int half = p.box / 2;
  std::vector<fft::Complex> residual(spectrum.size());
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const int i = r * n + c;
      if (!valid[i]) continue;
      double acc = 0.0;
      int count = 0;
      for (int dr = -half; dr <= half; ++dr)
        for (int dc = -half; dc <= half; ++dc) {
          const int j = ((r + dr + n) % n) * n + (c + dc + n) % n;
          if (valid[j]) {
            acc += log_amp[j];
            ++count;
          }
        }
      residual[i] = std::polar(std::exp(log_amp[i] - acc / count), std::arg(spectrum[i]));
    }
  }
  const auto back = fft::inverse(std::move(residual), n, n);
  std::vector<double> energy(back.size());
  for (std::size_t i = 0; i < back.size(); ++i) energy[i] = std::norm(back[i]);
  const auto smooth = detail::gaussian_blur(energy, n, n, p.sigma);

  const auto full = resize_plane(std::vector<float>(smooth.begin(), smooth.end()), n, n, 1, x.height(), x.width());
  const float peak = *std::max_element(full.begin(), full.end());
  std::vector<float> scores(full.size(), 0.0f);
  if (peak > 0.0f) {
    for (std::size_t i = 0; i < full.size(); ++i) scores[i] = std::clamp(full[i] / peak, 0.0f, 1.0f);
  }
  return SaliencyMap(x.height(), x.width(), std::move(scores));
}

}  // namespace salattack
