#pragma once

// Most Apparent Distortion (Larson & Chandler, J. Electron. Imaging 19(1), 2010):
// a detection score from CSF-filtered lightness errors weighted by a contrast
// masking map, an appearance score from log-Gabor subband statistics, and an
// adaptive geometric blend of the two. Computed on luma in 0..255 units.

#include <cmath>
#include <numbers>
#include <vector>

#include "salattack/errors.hpp"
#include "salattack/fft.hpp"
#include "salattack/image.hpp"

namespace salattack {

namespace mad_constants {
// Pixel value -> lightness: (k * I)^(gamma / 3).
inline constexpr double kLuminance = 0.02874;
inline constexpr double kGamma = 2.2;
// Contrast sensitivity function (Mannos-Sakrison form, oblique effect w = 0.7).
inline constexpr double kCsfNyquistCpd = 32.0;
inline constexpr double kCsfObliqueW = 0.7;
inline constexpr double kCsfPeakCpd = 7.8909;
inline constexpr double kCsfPeakGain = 0.9809;
// Block statistics: 16 x 16 windows every 4 pixels.
inline constexpr int kBlock = 16;
inline constexpr int kStride = 4;
// Contrast masking.
inline constexpr double kOrgThreshold = -5.0;     // log contrast below which masking is flat
inline constexpr double kDetectThreshold = -5.0;  // log error contrast at detection threshold
inline constexpr double kMaskSlope = 1.0;
inline constexpr double kMaskGain = 0.5;
inline constexpr double kMinMeanLightness = 0.5;
inline constexpr double kDetectScale = 200.0;
// Log-Gabor filter bank.
inline constexpr int kScales = 5;
inline constexpr int kOrientations = 4;
inline constexpr double kMinWavelength = 3.0;
inline constexpr double kWavelengthMult = 3.0;
inline constexpr double kSigmaOnf = 0.55;
inline constexpr double kThetaOnSigma = 1.5;
inline constexpr double kScaleWeights[kScales] = {0.5 / 13.25, 0.75 / 13.25, 1.0 / 13.25, 5.0 / 13.25, 6.0 / 13.25};
// Blend: alpha = 1 / (1 + beta1 * detect^beta2).
inline constexpr double kBlendT1 = 2.55;
inline constexpr double kBlendT2 = 3.35;
}  // namespace mad_constants

namespace detail::mad {

struct Plane {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

inline Plane gray255(const Image& x) {
  const auto y = luma(x);
  Plane p{x.height(), x.width(), std::vector<double>(y.size())};
  for (std::size_t i = 0; i < y.size(); ++i) p.v[i] = 255.0 * y[i];
  return p;
}

inline std::vector<double> csf(int rows, int cols) {
  using namespace mad_constants;
  std::vector<double> out(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double fx = fft::frequency(c, cols) * 2.0 * kCsfNyquistCpd;
      const double fy = fft::frequency(r, rows) * 2.0 * kCsfNyquistCpd;
      const double angle = std::atan2(fy, fx);
      const double s = (1.0 - kCsfObliqueW) / 2.0 * std::cos(4.0 * angle) + (1.0 + kCsfObliqueW) / 2.0;
      const double f = std::hypot(fx, fy) / s;
      out[static_cast<std::size_t>(r) * cols + c] =
          f < kCsfPeakCpd ? kCsfPeakGain : 2.6 * (0.0192 + 0.114 * f) * std::exp(-std::pow(0.114 * f, 1.1));
    }
  return out;
}

inline Plane filter(const Plane& p, const std::vector<double>& gain) {
  auto spec = fft::forward(p.v, p.rows, p.cols);
  for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= gain[i];
  const auto back = fft::inverse(std::move(spec), p.rows, p.cols);
  Plane out{p.rows, p.cols, std::vector<double>(back.size())};
  for (std::size_t i = 0; i < back.size(); ++i) out.v[i] = back[i].real();
  return out;
}

struct Moments {
  double mean = 0, sd = 0, skew = 0, kurt = 0;
};

// Population moments of the w x w window at (r0, c0).
inline Moments moments(const Plane& p, int r0, int c0, int w) {
  const double n = static_cast<double>(w) * w;
  double mean = 0;
  for (int r = r0; r < r0 + w; ++r)
    for (int c = c0; c < c0 + w; ++c) mean += p.at(r, c);
  mean /= n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (int r = r0; r < r0 + w; ++r)
    for (int c = c0; c < c0 + w; ++c) {
      const double d = p.at(r, c) - mean;
      m2 += d * d;
      m3 += d * d * d;
      m4 += d * d * d * d;
    }
  m2 /= n, m3 /= n, m4 /= n;
  Moments m{mean, std::sqrt(m2), 0, 0};
  if (m2 > 1e-20) {
    m.skew = m3 / std::pow(m2, 1.5);
    m.kurt = m4 / (m2 * m2);
  }
  return m;
}

// Calls fn(r, c) for the top-left corner of every block; the block's value
// is owned by the kStride x kStride cell at that corner.
template <class Fn>
void for_each_block(int rows, int cols, Fn&& fn) {
  using namespace mad_constants;
  for (int r = 0; r + kBlock <= rows; r += kStride)
    for (int c = 0; c + kBlock <= cols; c += kStride) fn(r, c);
}

inline void fill_cell(Plane& map, int r, int c, double value) {
  using mad_constants::kStride;
  for (int i = r; i < r + kStride; ++i)
    for (int j = c; j < c + kStride; ++j) map.at(i, j) = value;
}

// RMS over the map. A kBlock border (wrap-around filtering artifacts) is left
// out only when at least half of the map survives the cut; on small images the
// border would otherwise hide most of the distortion.
inline double pooled_rms(const Plane& map) {
  using mad_constants::kBlock;
  const long inner = static_cast<long>(map.rows - 2 * kBlock - 1) * (map.cols - 2 * kBlock - 1);
  const bool trim = map.rows > 2 * kBlock + 1 && map.cols > 2 * kBlock + 1 &&
                    2 * inner >= static_cast<long>(map.rows) * map.cols;
  const int r0 = trim ? kBlock : 0, r1 = trim ? map.rows - kBlock - 1 : map.rows;
  const int c0 = trim ? kBlock : 0, c1 = trim ? map.cols - kBlock - 1 : map.cols;
  double acc = 0;
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) acc += map.at(r, c) * map.at(r, c);
  return std::sqrt(acc / (static_cast<double>(r1 - r0) * (c1 - c0)));
}

inline double detection(const Plane& ref, const Plane& dst) {
  using namespace mad_constants;
  const int rows = ref.rows, cols = ref.cols;
  auto lightness = [](const Plane& p) {
    Plane out = p;
    for (double& v : out.v) v = std::pow(kLuminance * v, kGamma / 3.0);
    return out;
  };
  const Plane lref = lightness(ref), ldst = lightness(dst);
  Plane lerr = ldst;
  for (std::size_t i = 0; i < lerr.v.size(); ++i) lerr.v[i] -= lref.v[i];
  const auto gain = csf(rows, cols);
  const Plane fref = filter(lref, gain), ferr = filter(lerr, gain);
  Plane sq{rows, cols, std::vector<double>(ref.v.size())};
  for (std::size_t i = 0; i < sq.v.size(); ++i) sq.v[i] = (dst.v[i] - ref.v[i]) * (dst.v[i] - ref.v[i]);

  Plane weighted{rows, cols, std::vector<double>(ref.v.size(), 0.0)};
  for_each_block(rows, cols, [&](int r, int c) {
    const int h = kBlock / 2;
    const double mu = moments(fref, r, c, kBlock).mean;
    if (mu < kMinMeanLightness) return;
    const double sd_mod = std::min({moments(fref, r, c, h).sd, moments(fref, r, c + h, h).sd,
                                    moments(fref, r + h, c, h).sd, moments(fref, r + h, c + h, h).sd});
    const double ci_org = std::log(sd_mod / mu);
    const double ci_err = std::log(moments(ferr, r, c, kBlock).sd / mu);
    double mask = 0.0;
    if (ci_org > kOrgThreshold) {
      const double elevated = kMaskSlope * (ci_org - kOrgThreshold) + kDetectThreshold;
      if (ci_err > elevated) mask = (ci_err - elevated) / kMaskGain;
    } else if (ci_err > kDetectThreshold) {
      mask = (ci_err - kDetectThreshold) / kMaskGain;
    }
    if (mask > 0.0) fill_cell(weighted, r, c, mask * moments(sq, r, c, kBlock).mean);
  });
  return pooled_rms(weighted) * kDetectScale;
}

// Magnitude responses of the log-Gabor bank, [scale][orientation].
inline std::vector<std::vector<Plane>> log_gabor(const Plane& p) {
  using namespace mad_constants;
  const int rows = p.rows, cols = p.cols;
  const auto spec = fft::forward(p.v, rows, cols);
  const std::size_t n = spec.size();
  std::vector<double> radius(n), theta(n);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double x = fft::frequency(c, cols), y = fft::frequency(r, rows);
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      radius[i] = std::hypot(x, y);
      theta[i] = std::atan2(-y, x);
    }
  const double theta_sigma = std::numbers::pi / kOrientations / kThetaOnSigma;
  std::vector<std::vector<Plane>> out(kScales);
  for (int s = 0; s < kScales; ++s) {
    const double f0 = 1.0 / (kMinWavelength * std::pow(kWavelengthMult, s));
    const double denom = 2.0 * std::log(kSigmaOnf) * std::log(kSigmaOnf);
    for (int o = 0; o < kOrientations; ++o) {
      const double angle = o * std::numbers::pi / kOrientations;
      std::vector<fft::Complex> band(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (radius[i] == 0.0) continue;
        const double ds = std::sin(theta[i]) * std::cos(angle) - std::cos(theta[i]) * std::sin(angle);
        const double dc = std::cos(theta[i]) * std::cos(angle) + std::sin(theta[i]) * std::sin(angle);
        const double dtheta = std::abs(std::atan2(ds, dc));
        const double radial = std::exp(-std::pow(std::log(radius[i] / f0), 2) / denom);
        const double spread = std::exp(-dtheta * dtheta / (2.0 * theta_sigma * theta_sigma));
        band[i] = spec[i] * (radial * spread);
      }
      const auto back = fft::inverse(std::move(band), rows, cols);
      Plane mag{rows, cols, std::vector<double>(n)};
      for (std::size_t i = 0; i < n; ++i) mag.v[i] = std::abs(back[i]);
      out[s].push_back(std::move(mag));
    }
  }
  return out;
}

inline double appearance(const Plane& ref, const Plane& dst) {
  using namespace mad_constants;
  const auto gref = log_gabor(ref), gdst = log_gabor(dst);
  Plane eta{ref.rows, ref.cols, std::vector<double>(ref.v.size(), 0.0)};
  for (int s = 0; s < kScales; ++s)
    for (int o = 0; o < kOrientations; ++o) {
      for_each_block(ref.rows, ref.cols, [&](int r, int c) {
        const Moments a = moments(gref[s][o], r, c, kBlock), b = moments(gdst[s][o], r, c, kBlock);
        const double d = std::abs(a.sd - b.sd) + 2.0 * std::abs(a.skew - b.skew) + std::abs(a.kurt - b.kurt);
        for (int i = r; i < r + kStride; ++i)
          for (int j = c; j < c + kStride; ++j) eta.at(i, j) += kScaleWeights[s] * d;
      });
    }
  return pooled_rms(eta);
}

}  // namespace detail::mad

struct MadScore {
  double detect = 0;
  double appear = 0;
  double alpha = 1;
  double mad = 0;
};

/// Full MAD breakdown of `distorted` against the reference `original`.
inline MadScore mad_breakdown(const Image& original, const Image& distorted) {
  using namespace mad_constants;
  if (!original.same_geometry(distorted)) throw InvalidInput("mad: geometry mismatch");
  if (original.height() < kBlock || original.width() < kBlock)
    throw InvalidInput("mad: image smaller than one 16x16 block");
  const auto ref = detail::mad::gray255(original), dst = detail::mad::gray255(distorted);
  MadScore s;
  s.detect = detail::mad::detection(ref, dst);
  s.appear = detail::mad::appearance(ref, dst);
  const double beta1 = std::exp(-kBlendT1 / kBlendT2);
  const double beta2 = 1.0 / (std::log(10.0) * kBlendT2);
  s.alpha = 1.0 / (1.0 + beta1 * std::pow(s.detect, beta2));
  s.mad = std::pow(s.detect, s.alpha) * std::pow(s.appear, 1.0 - s.alpha);
  return s;
}

inline double mad(const Image& original, const Image& distorted) { return mad_breakdown(original, distorted).mad; }

}  // namespace salattack
