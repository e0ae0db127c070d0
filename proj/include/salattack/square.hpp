#pragma once

// Square Attack (L-inf random search over square patches), optionally confined
// to a mask. Signs are per location and shared by all channels.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

#include "salattack/attack.hpp"

namespace salattack {

/// Fraction of the image area covered by the patch at iteration `it` of `n_iters`.
inline double square_fraction(std::size_t it, std::size_t n_iters, double p_init = 0.05) {
  const auto t = static_cast<long>(static_cast<double>(it) / static_cast<double>(n_iters) * 10000.0);
  static constexpr long milestones[] = {10, 50, 200, 500, 1000, 2000, 4000, 6000, 8000};
  double p = p_init;
  for (long m : milestones) {
    if (t > m) p /= 2.0;
  }
  return p;
}

/// Patch side for fraction p on an h x w image.
inline int square_side(double p, int h, int w) {
  const int s = static_cast<int>(std::lround(std::sqrt(p * h * w)));
  return std::max(1, std::min(s, std::min(h, w) - 1));
}

inline AttackOutcome square_attack(const Image& x, int y_gt, const ClassifierBackend& backend,
                                   const AttackConfig& config, const std::optional<SalientMask>& mask = std::nullopt,
                                   QueryHook hook = {}) {
  check_common(config);
  if (mask && (mask->height() != x.height() || mask->width() != x.width()))
    throw InvalidInput("mask geometry does not match the image");
  const int h = x.height(), w = x.width();
  if (std::min(h, w) < 2) throw InvalidInput("square_attack needs an image of at least 2x2");
  SearchContext ctx(x, y_gt, backend, config.budget, mask ? *mask : SalientMask::all_ones(h, w), config.epsilon,
                    std::move(hook));
  bool prior = false;
  if (detail::clean_query(ctx, prior)) return std::move(ctx).finish(prior);

  // Uniform draws by modulo keep the sequence identical across standard libraries.
  std::mt19937_64 rng(config.seed);
  auto uniform = [&rng](std::uint64_t n) { return static_cast<int>(rng() % n); };
  auto coin = [&rng] { return (rng() & 1u) ? +1 : -1; };
  const SalientMask& m = ctx.mask();

  try {
    PerturbationState init = ctx.state();
    for (int c = 0; c < w; ++c) {
      const int s = coin();
      for (int r = 0; r < h; ++r)
        if (m.test(r, c)) init.set_sign(r, c, s);
    }
    ctx.accept(init, ctx.query(init).F);

    constexpr int kMaxDraws = 100;
    for (std::size_t it = 1;; ++it) {
      const int side = square_side(square_fraction(it, config.budget), h, w);
      PerturbationState cand = ctx.state();
      bool changed = false;
      for (int draw = 0; draw < kMaxDraws && !changed; ++draw) {
        const int r0 = uniform(static_cast<std::uint64_t>(h - side));
        const int c0 = uniform(static_cast<std::uint64_t>(w - side));
        const int s = coin();
        for (int r = r0; r < r0 + side; ++r)
          for (int c = c0; c < c0 + side; ++c) {
            if (m.test(r, c) && cand.sign(r, c) != s) {
              cand.set_sign(r, c, s);
              changed = true;
            }
          }
      }
      if (!changed) break;
      const double F = ctx.query(cand).F;
      if (F > ctx.best_F()) ctx.accept(cand, F);
    }
  } catch (const SearchContext::Stop&) {
  } catch (const BudgetExhausted&) {
  }
  return std::move(ctx).finish();
}

}  // namespace salattack
