#pragma once

// Saliency Attack: hierarchical block refinement restricted to a salient mask,
// plus the search context shared with the baseline attacks.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "salattack/errors.hpp"
#include "salattack/image.hpp"
#include "salattack/model.hpp"
#include "salattack/saliency.hpp"

namespace salattack {

enum class SaliencyMode { salient, non_salient, no_saliency };

inline std::string to_string(SaliencyMode m) {
  switch (m) {
    case SaliencyMode::salient: return "salient";
    case SaliencyMode::non_salient: return "non-salient";
    case SaliencyMode::no_saliency: return "no-saliency";
  }
  return "?";
}

inline SaliencyMode parse_mode(const std::string& s) {
  if (s == "salient") return SaliencyMode::salient;
  if (s == "non-salient") return SaliencyMode::non_salient;
  if (s == "no-saliency") return SaliencyMode::no_saliency;
  throw InvalidInput("unknown saliency mode '" + s + "'");
}

/// The mask an attack may perturb under `mode`.
inline SalientMask effective_mask(const SalientMask& mask, SaliencyMode mode) {
  switch (mode) {
    case SaliencyMode::salient: return mask;
    case SaliencyMode::non_salient: return complement(mask);
    case SaliencyMode::no_saliency: return SalientMask::all_ones(mask.height(), mask.width());
  }
  return mask;
}

struct AttackConfig {
  float epsilon = 0.05f;
  int k_int = 16;
  std::size_t budget = 3000;
  float phi = kDefaultPhi;
  SaliencyMode mode = SaliencyMode::salient;
  std::uint64_t seed = 0;
};

inline void check_common(const AttackConfig& c) {
  if (!(c.epsilon > 0.0f)) throw InvalidInput("epsilon must be > 0");
  if (c.budget < 1) throw InvalidInput("budget must be >= 1");
}

inline void check_k_int(const AttackConfig& c, int height, int width) {
  if (height != width) throw InvalidInput("block refinement needs a square image");
  if (!is_power_of_two(c.k_int) || c.k_int < 2 || c.k_int > height)
    throw InvalidInput("k_int must be a power of two in (1, side], got " + std::to_string(c.k_int));
  if (height % c.k_int != 0) throw InvalidInput("k_int must divide the image side");
}

struct TracePoint {
  std::size_t query = 0;
  double best_F = -std::numeric_limits<double>::infinity();
  bool success = false;
};

struct AttackOutcome {
  Image adversarial;
  PerturbationState state;
  bool success = false;
  std::size_t queries = 0;
  double best_F = -std::numeric_limits<double>::infinity();
  std::vector<TracePoint> trace;
  bool prior_misclassified = false;
};

/// Observer called with every queried candidate and its evaluation.
using QueryHook = std::function<void(const PerturbationState&, const Evaluation&)>;

/// Budgeted query channel plus the search state (S+/S- as a sign grid, F-hat).
/// query() throws Stop as soon as a queried image is adversarial, after adopting it.
class SearchContext {
 public:
  struct Stop {};

  SearchContext(const Image& x, int y_gt, const ClassifierBackend& backend, std::size_t budget, SalientMask mask,
                float epsilon, QueryHook hook = {})
      : x_(x), y_(y_gt), backend_(backend), ledger_(budget), state_(std::move(mask), epsilon), hook_(std::move(hook)) {
    if (state_.height() != x.height() || state_.width() != x.width())
      throw InvalidInput("mask geometry does not match the image");
  }

  Evaluation query(const PerturbationState& candidate) {
    const Evaluation e = evaluate_objective(backend_, ledger_, x_, candidate, y_);
    if (hook_) hook_(candidate, e);
    if (e.adversarial) {
      state_ = candidate;
      best_F_ = std::max(best_F_, e.F);
      success_ = true;
    }
    trace_.push_back({ledger_.used(), best_F_, success_});
    if (success_) throw Stop{};
    return e;
  }

  void accept(const PerturbationState& s, double F) {
    state_ = s;
    best_F_ = F;
  }

  const Image& image() const { return x_; }
  const SalientMask& mask() const { return state_.mask(); }
  const PerturbationState& state() const { return state_; }
  double best_F() const { return best_F_; }
  bool success() const { return success_; }
  std::size_t queries() const { return ledger_.used(); }
  const std::vector<TracePoint>& trace() const { return trace_; }

  AttackOutcome finish(bool prior_misclassified = false) && {
    AttackOutcome out;
    out.adversarial = apply_perturbation(x_, state_);
    out.state = std::move(state_);
    out.success = success_;
    out.queries = ledger_.used();
    out.best_F = best_F_;
    out.trace = std::move(trace_);
    out.prior_misclassified = prior_misclassified;
    return out;
  }

 private:
  Image x_;
  int y_;
  const ClassifierBackend& backend_;
  QueryLedger ledger_;
  PerturbationState state_;
  double best_F_ = -std::numeric_limits<double>::infinity();
  bool success_ = false;
  std::vector<TracePoint> trace_;
  QueryHook hook_;
};

/// Recursive block refinement on a SearchContext.
class RefineSearch {
 public:
  explicit RefineSearch(SearchContext& ctx) : ctx_(ctx) {}

  /// Splits `b` into children of side k. Level 1 tries each child wholly +eps and
  /// wholly -eps (ties keep +); deeper levels try flipping the child's signs. The
  /// candidates are visited best-first and accepted while their recorded F beats
  /// the current F-hat, each acceptance recursing into that child with k/2.
  void refine(const Block& b, int k, int level) {
    max_level_ = std::max(max_level_, level);
    const PerturbationState base = ctx_.state();
    std::vector<Candidate> cands;
    for (const Block& child : split_block(b, k)) {
      auto locs = block_locations(child, ctx_.mask());
      if (locs.empty()) continue;
      if (level == 1) {
        const double up = ctx_.query(assign(base, locs, +1)).F;
        const double down = ctx_.query(assign(base, locs, -1)).F;
        cands.push_back({child, std::move(locs), up >= down ? +1 : -1, up >= down ? up : down});
      } else {
        PerturbationState flipped = flip(base, locs);
        if (flipped == base) continue;
        cands.push_back({child, std::move(locs), 0, ctx_.query(flipped).F});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.F > b.F; });
    for (const Candidate& c : cands) {
      if (!(c.F > ctx_.best_F())) continue;
      ctx_.accept(c.sign == 0 ? flip(base, c.locs) : assign(base, c.locs, c.sign), c.F);
      if (k > 1) refine(c.child, k / 2, level + 1);
    }
  }

  int max_level() const { return max_level_; }

  static PerturbationState assign(PerturbationState s, const std::vector<Location>& locs, int sign) {
    for (const auto& l : locs) s.set_sign(l.row, l.col, sign);
    return s;
  }

  static PerturbationState flip(PerturbationState s, const std::vector<Location>& locs) {
    for (const auto& l : locs) s.set_sign(l.row, l.col, -s.sign(l.row, l.col));
    return s;
  }

 private:
  struct Candidate {
    Block child;
    std::vector<Location> locs;
    int sign;  // 0 = flip
    double F;
  };

  SearchContext& ctx_;
  int max_level_ = 0;
};

namespace detail {

// Clean query shared by every attack. Returns true when the search should not start.
inline bool clean_query(SearchContext& ctx, bool& prior_misclassified) {
  try {
    ctx.query(ctx.state());
  } catch (const SearchContext::Stop&) {
    prior_misclassified = true;
    return true;
  }
  return ctx.mask().count() == 0;
}

}  // namespace detail

/// Saliency Attack. S+/S- and F-hat persist across the outer passes
/// k = k_int, k_int/2, ..., 2; the search stops at the first adversarial query.
inline AttackOutcome saliency_attack(const Image& x, int y_gt, const SalientMask& mask, const ClassifierBackend& backend,
                                     const AttackConfig& config, QueryHook hook = {}) {
  check_common(config);
  check_k_int(config, x.height(), x.width());
  SearchContext ctx(x, y_gt, backend, config.budget, effective_mask(mask, config.mode), config.epsilon,
                    std::move(hook));
  bool prior = false;
  if (detail::clean_query(ctx, prior)) return std::move(ctx).finish(prior);
  RefineSearch search(ctx);
  const Block whole{0, 0, x.height(), 0};
  try {
    for (int k = config.k_int; k > 1; k /= 2) search.refine(whole, k, 1);
  } catch (const SearchContext::Stop&) {
  } catch (const BudgetExhausted&) {
  }
  return std::move(ctx).finish();
}

}  // namespace salattack
