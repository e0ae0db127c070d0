#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "salattack/metrics.hpp"
#include "support.hpp"

using namespace salattack;
using namespace testing_support;

namespace {

Image noisy(const Image& x, float sigma, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> n(0.0f, sigma);
  Image out = x;
  for (float& v : out.data()) v = std::clamp(v + n(rng), 0.0f, 1.0f);
  return out;
}

Image textured(int side, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0.2f, 0.8f);
  Image x(side, side, 3, 0.0f);
  for (float& v : x.data()) v = u(rng);
  return x;
}

}  // namespace

TEST(Distances, L0Examples) {
  Image a(10, 10, 3, 0.5f), b = a;
  EXPECT_EQ(l0_fraction(a, b), 0.0);
  b(0, 0, 1) = 0.6f;
  b(3, 4, 0) = 0.1f;
  b(9, 9, 2) = 0.9f;
  EXPECT_DOUBLE_EQ(l0_fraction(a, b), 0.03);
  for (float& v : b.data()) v = 0.7f;
  EXPECT_EQ(l0_fraction(a, b), 1.0);
  EXPECT_THROW(l0_fraction(a, Image(10, 9, 3, 0.5f)), InvalidInput);
}

TEST(Distances, L2AndLinfExamples) {
  const float eps = 0.05f;
  Image a(6, 5, 3, 0.5f), b = a;
  EXPECT_EQ(l2(a, b), 0.0);
  EXPECT_EQ(linf(a, b), 0.0);
  for (int ch = 0; ch < 3; ++ch) b(2, 2, ch) += eps;
  const double d = static_cast<double>(0.5f + eps) - 0.5;
  EXPECT_NEAR(l2(a, b), d * std::sqrt(3.0), 1e-12);
  EXPECT_DOUBLE_EQ(linf(a, b), d);
  for (float& v : b.data()) v = 0.5f + eps;
  EXPECT_NEAR(l2(a, b), d * std::sqrt(6.0 * 5 * 3), 1e-12);
  EXPECT_THROW(linf(a, Image(6, 5, 1, 0.5f)), InvalidInput);
}

TEST(Distances, PropertyL2MatchesBruteForceSum) {
  std::mt19937 rng(3);
  for (int t = 0; t < 50; ++t) {
    const Image a = textured(8, rng()), b = noisy(a, 0.1f, rng());
    long double acc = 0;
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c)
        for (int ch = 0; ch < 3; ++ch) {
          const long double d = static_cast<long double>(b(r, c, ch)) - a(r, c, ch);
          acc += d * d;
        }
    const double ref = std::sqrt(static_cast<double>(acc));
    EXPECT_NEAR(l2(a, b) * l2(a, b), ref * ref, 1e-12 * ref * ref);
  }
}

TEST(Mad, IdenticalImagesScoreZero) {
  for (unsigned s = 0; s < 5; ++s) {
    const Image x = textured(32, s);
    EXPECT_LE(mad(x, x), 1e-9);
  }
  for (const auto& it : load_fixture_items(5)) EXPECT_LE(mad(it.x, it.x), 1e-9);
}

TEST(Mad, IncreasesWithNoiseLevel) {
  for (const auto& it : load_fixture_items(4)) {
    const double a = mad(it.x, noisy(it.x, 0.01f, 1));
    const double b = mad(it.x, noisy(it.x, 0.05f, 1));
    const double c = mad(it.x, noisy(it.x, 0.10f, 1));
    EXPECT_LT(a, b);
    EXPECT_LT(b, c);
  }
}

TEST(Mad, BlendStaysBetweenItsParts) {
  const auto it = load_fixture_items(1).front();
  const auto s = mad_breakdown(it.x, noisy(it.x, 0.05f, 2));
  EXPECT_GT(s.alpha, 0.0);
  EXPECT_LT(s.alpha, 1.0);
  EXPECT_GE(s.mad, std::min(s.detect, s.appear));
  EXPECT_LE(s.mad, std::max(s.detect, s.appear));
}

TEST(Mad, RejectsMismatchAndTinyImages) {
  EXPECT_THROW(mad(Image(32, 32, 1, 0.5f), Image(32, 31, 1, 0.5f)), InvalidInput);
  EXPECT_THROW(mad(Image(8, 8, 1, 0.5f), Image(8, 8, 1, 0.5f)), InvalidInput);
}

TEST(Aggregate, Examples) {
  std::vector<AttackResult> batch(3);
  batch[0] = {true, {0.1, 1.0, 0.05, 10.0}};
  batch[1] = {true, {0.3, 3.0, 0.05, 40.0}};
  batch[2] = {false, {0.0, 0.0, 0.0, 5.0}};
  const auto s = aggregate(batch);
  EXPECT_DOUBLE_EQ(s.sr, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.sr_true, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.l0.mean, 0.2);
  EXPECT_DOUBLE_EQ(s.l2.sd, 1.0);
  EXPECT_DOUBLE_EQ(s.mad.mean, 25.0);

  std::vector<AttackResult> fails(4);
  const auto f = aggregate(fails);
  EXPECT_EQ(f.sr, 0.0);
  EXPECT_EQ(f.sr_true, 0.0);
  EXPECT_THROW(aggregate({}), InvalidInput);
}

TEST(Aggregate, ThresholdIsInclusive) {
  const std::vector<AttackResult> at{{true, {0, 0, 0, 30.0}}}, above{{true, {0, 0, 0, 30.1}}};
  EXPECT_EQ(aggregate(at).sr_true, 1.0);
  EXPECT_EQ(aggregate(above).sr_true, 0.0);
  EXPECT_EQ(aggregate(above, 40.0).sr_true, 1.0);
}

TEST(Aggregate, PropertyThresholdMonotoneAndOrderFree) {
  std::mt19937 rng(19);
  std::uniform_real_distribution<double> u(0.0, 80.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<AttackResult> batch(1 + rng() % 30);
    for (auto& r : batch) r = {rng() % 3 != 0, {u(rng) / 80, u(rng), 0.05, u(rng)}};
    double prev = -1;
    for (double theta : {20.0, 30.0, 40.0}) {
      const auto s = aggregate(batch, theta);
      ASSERT_LE(s.sr_true, s.sr);
      ASSERT_GE(s.sr_true, prev);
      prev = s.sr_true;
    }
    auto shuffled = batch;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto a = aggregate(batch), b = aggregate(shuffled);
    ASSERT_EQ(a.sr, b.sr);
    ASSERT_EQ(a.sr_true, b.sr_true);
    ASSERT_EQ(a.l2.mean, b.l2.mean);
    ASSERT_EQ(a.mad.sd, b.mad.sd);
  }
}

TEST(Median, OddAndEven) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_THROW(median({}), InvalidInput);
}
