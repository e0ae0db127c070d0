#pragma once

// Single-resolution greedy search over fixed blocks inside the mask.

#include <vector>

#include "salattack/attack.hpp"

namespace salattack {

/// Each round tries +eps and -eps on every remaining block (row-major, + first)
/// against the current state and keeps the single best assignment if it raises
/// F-hat; that block is then retired. F-hat starts at the clean objective.
inline AttackOutcome greedy_block_search(const Image& x, int y_gt, const SalientMask& mask,
                                         const ClassifierBackend& backend, int block_side, const AttackConfig& config,
                                         QueryHook hook = {}) {
  check_common(config);
  if (block_side < 1 || x.height() % block_side != 0 || x.width() % block_side != 0)
    throw InvalidInput("block_side must divide the image sides");
  SearchContext ctx(x, y_gt, backend, config.budget, effective_mask(mask, config.mode), config.epsilon,
                    std::move(hook));
  bool prior = false;
  try {
    ctx.accept(ctx.state(), ctx.query(ctx.state()).F);
  } catch (const SearchContext::Stop&) {
    return std::move(ctx).finish(true);
  }
  if (ctx.mask().count() == 0) return std::move(ctx).finish(prior);

  std::vector<std::vector<Location>> remaining;
  for (int r = 0; r < x.height(); r += block_side)
    for (int c = 0; c < x.width(); c += block_side) {
      auto locs = block_locations(Block{r, c, block_side, 1}, ctx.mask());
      if (!locs.empty()) remaining.push_back(std::move(locs));
    }

  try {
    while (!remaining.empty()) {
      std::size_t best_idx = 0;
      int best_sign = 0;
      double best = ctx.best_F();
      for (std::size_t i = 0; i < remaining.size(); ++i) {
        for (int sign : {+1, -1}) {
          const double F = ctx.query(RefineSearch::assign(ctx.state(), remaining[i], sign)).F;
          if (F > best) {
            best = F;
            best_idx = i;
            best_sign = sign;
          }
        }
      }
      if (best_sign == 0) break;
      ctx.accept(RefineSearch::assign(ctx.state(), remaining[best_idx], best_sign), best);
      remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best_idx));
    }
  } catch (const SearchContext::Stop&) {
  } catch (const BudgetExhausted&) {
  }
  return std::move(ctx).finish();
}

}  // namespace salattack
