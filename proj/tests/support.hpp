#pragma once

// Test-only backends, fixture access and independent oracles.

#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "salattack/attack.hpp"
#include "salattack/network.hpp"
#include "salattack/raster_io.hpp"
#include "salattack/saliency.hpp"

namespace testing_support {

using namespace salattack;

/// Sign of each location relative to a constant-0.5 single-channel base image.
inline std::vector<int> signs_of(const Image& x) {
  std::vector<int> s(x.locations());
  for (int r = 0; r < x.height(); ++r)
    for (int c = 0; c < x.width(); ++c) {
      const float v = x(r, c, 0);
      s[static_cast<std::size_t>(r) * x.width() + c] = v > 0.5f ? 1 : (v < 0.5f ? -1 : 0);
    }
  return s;
}

/// Two-class backend whose objective is scripted as a function of the sign grid
/// (F = -gap with y = 0). Keep the script negative to avoid early success.
inline FunctionBackend scripted(int side, std::function<double(const std::vector<int>&)> F) {
  return FunctionBackend({side, side, 1}, 2, [F](const Image& x) {
    const double f = F(signs_of(x));
    return Logits({static_cast<float>(-f), 0.0f});
  });
}

inline Image gray(int side, float v = 0.5f) { return Image(side, side, 1, v); }

/// Exhaustive max of F over {-1,0,+1}^|mask| sign grids.
inline double brute_force_optimum(const Image& x, int y, const SalientMask& mask, const ClassifierBackend& backend,
                                  float eps) {
  std::vector<Location> locs;
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c)
      if (mask.test(r, c)) locs.push_back({r, c});
  PerturbationState s(mask, eps);
  std::vector<int> digit(locs.size(), -1);
  for (const auto& l : locs) s.set_sign(l.row, l.col, -1);
  double best = -std::numeric_limits<double>::infinity();
  while (true) {
    best = std::max(best, cw_loss(backend.evaluate(apply_perturbation(x, s)), y));
    std::size_t i = 0;
    while (i < locs.size() && digit[i] == 1) {
      digit[i] = -1;
      s.set_sign(locs[i].row, locs[i].col, -1);
      ++i;
    }
    if (i == locs.size()) break;
    ++digit[i];
    s.set_sign(locs[i].row, locs[i].col, digit[i]);
  }
  return best;
}

/// Best F over assigning one k x k block wholly to +eps or -eps from zero.
inline double best_single_block(const Image& x, int y, const SalientMask& mask, const ClassifierBackend& backend,
                                float eps, int k) {
  double best = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < x.height(); r += k)
    for (int c = 0; c < x.width(); c += k) {
      const auto locs = block_locations(Block{r, c, k, 1}, mask);
      if (locs.empty()) continue;
      for (int sign : {+1, -1}) {
        PerturbationState s(mask, eps);
        for (const auto& l : locs) s.set_sign(l.row, l.col, sign);
        best = std::max(best, cw_loss(backend.evaluate(apply_perturbation(x, s)), y));
      }
    }
  return best;
}

struct Oracle4x4 {
  Image x;
  SalientMask mask;
  EmbeddedBackend backend;
};

/// Random single-channel 4x4 instance: 2-class linear model, |mask| in [6, 12].
inline Oracle4x4 random_oracle_instance(std::mt19937& rng) {
  std::uniform_real_distribution<float> u(0.2f, 0.8f), w(-1.0f, 1.0f);
  std::vector<float> px(16);
  for (auto& v : px) v = u(rng);
  std::vector<float> weights(32);
  for (auto& v : weights) v = w(rng);
  const std::size_t want = 6 + rng() % 7;
  std::vector<std::uint8_t> bits(16, 0);
  std::vector<int> order(16);
  for (int i = 0; i < 16; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < want; ++i) bits[order[i]] = 1;
  Image x(4, 4, 1, px);
  // Bias class 0 so that the clean image is classified as 0 with some margin.
  EmbeddedBackend probe(linear_weights({4, 4, 1}, weights, {0.0f, 0.0f}));
  const Logits z = probe.evaluate(x);
  const float bias0 = z[1] - z[0] + 0.05f + 0.3f * static_cast<float>(rng() % 4) / 3.0f;
  return {x, SalientMask(4, 4, bits), EmbeddedBackend(linear_weights({4, 4, 1}, weights, {bias0, 0.0f}))};
}

inline std::filesystem::path fixtures() { return SALATTACK_FIXTURES; }

struct FixtureItem {
  std::string name;
  int label = 0;
  Image x;
  SalientMask mask;
};

/// The first `n` fixture images with their binarized saliency masks.
inline std::vector<FixtureItem> load_fixture_items(std::size_t n, float phi = kDefaultPhi) {
  std::ifstream in(fixtures() / "labels.csv");
  std::string line;
  std::vector<FixtureItem> out;
  while (out.size() < n && std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(".png") == std::string::npos) continue;
    FixtureItem it;
    it.name = line.substr(0, comma);
    it.label = std::stoi(line.substr(comma + 1));
    it.x = load_image(fixtures() / "images" / it.name);
    it.mask = binarize(load_saliency(fixtures() / "saliency" / it.name, it.x.height(), it.x.width()), phi);
    out.push_back(std::move(it));
  }
  return out;
}

inline const EmbeddedBackend& fixture_backend() {
  static const EmbeddedBackend b = EmbeddedBackend::from_file(fixtures() / "model.srw");
  return b;
}

}  // namespace testing_support
