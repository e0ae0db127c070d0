#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "salattack/errors.hpp"
#include "salattack/image.hpp"
#include "salattack/mad.hpp"

namespace salattack {

inline constexpr double kMadThreshold = 30.0;

namespace detail {
inline void check_pair(const Image& a, const Image& b) {
  if (!a.same_geometry(b)) throw InvalidInput("metric: geometry mismatch");
}
}  // namespace detail

/// Fraction of spatial locations where any channel differs.
inline double l0_fraction(const Image& x, const Image& x_adv) {
  detail::check_pair(x, x_adv);
  const int ch = x.channels();
  const auto a = x.data(), b = x_adv.data();
  std::size_t changed = 0;
  for (std::size_t loc = 0; loc < x.locations(); ++loc) {
    for (int c = 0; c < ch; ++c) {
      if (a[loc * ch + c] != b[loc * ch + c]) {
        ++changed;
        break;
      }
    }
  }
  return static_cast<double>(changed) / static_cast<double>(x.locations());
}

inline double l2(const Image& x, const Image& x_adv) {
  detail::check_pair(x, x_adv);
  double acc = 0.0;
  const auto a = x.data(), b = x_adv.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(b[i]) - a[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

inline double linf(const Image& x, const Image& x_adv) {
  detail::check_pair(x, x_adv);
  double m = 0.0;
  const auto a = x.data(), b = x_adv.data();
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(b[i]) - a[i]));
  return m;
}

struct ImperceptibilityReport {
  double l0_fraction = 0;
  double l2 = 0;
  double linf = 0;
  double mad = 0;
};

inline ImperceptibilityReport measure(const Image& x, const Image& x_adv) {
  return {l0_fraction(x, x_adv), l2(x, x_adv), linf(x, x_adv), mad(x, x_adv)};
}

struct AttackResult {
  bool success = false;
  ImperceptibilityReport report;
};

struct MeanSd {
  double mean = 0;
  double sd = 0;
};

struct AggregateStats {
  std::size_t n = 0;
  std::size_t successes = 0;
  double sr = 0;
  double sr_true = 0;
  MeanSd l0, l2, mad;
};

/// Population mean and standard deviation; zeros for an empty sample.
inline MeanSd mean_sd(const std::vector<double>& v) {
  if (v.empty()) return {};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

/// SR over the batch, SR_true counting successes with mad <= threshold, and
/// distance statistics over successful attacks only.
inline AggregateStats aggregate(const std::vector<AttackResult>& batch, double mad_threshold = kMadThreshold) {
  if (batch.empty()) throw InvalidInput("aggregate: empty batch");
  AggregateStats s;
  s.n = batch.size();
  std::vector<double> l0, l2v, madv;
  std::size_t good = 0;
  for (const auto& r : batch) {
    if (!r.success) continue;
    ++s.successes;
    if (r.report.mad <= mad_threshold) ++good;
    l0.push_back(r.report.l0_fraction);
    l2v.push_back(r.report.l2);
    madv.push_back(r.report.mad);
  }
  // Sorting makes the floating-point sums independent of batch order.
  for (auto* v : {&l0, &l2v, &madv}) std::sort(v->begin(), v->end());
  s.sr = static_cast<double>(s.successes) / static_cast<double>(s.n);
  s.sr_true = static_cast<double>(good) / static_cast<double>(s.n);
  s.l0 = mean_sd(l0);
  s.l2 = mean_sd(l2v);
  s.mad = mean_sd(madv);
  return s;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw InvalidInput("median: empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace salattack
