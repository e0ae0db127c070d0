// Acceptance run: one PASS/FAIL line per criterion A1..A10 on the committed
// fixtures. Attack runs are shared between criteria; each run goes through its
// own counting wrapper so query accounting is checked on every one of them.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "salattack/harness.hpp"
#include "support.hpp"

using namespace salattack;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(const std::string& id, bool pass, const std::string& detail) {
  std::printf("%s %s  %s\n", id.c_str(), pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

constexpr float kEps = 0.05f;
constexpr std::size_t kBudget = 3000;
constexpr std::size_t kImages = 120;

struct Run {
  bool success = false;
  bool prior = false;
  std::size_t queries = 0;
  double l0 = 0, l2 = 0, mad = 0;  // mad only for successes
};

// Outcome-level checks shared by every run.
struct Checks {
  std::size_t attacks = 0, invalid = 0;        // A1
  std::size_t miscounted = 0, over_budget = 0;  // A2
  std::size_t traced = 0, non_monotone = 0;     // A4
  std::string first_problem;

  void note(const std::string& what) {
    if (first_problem.empty()) first_problem = what;
  }
};

// Storing x + eps in float rounds by at most half an ulp, so the measured linf
// may exceed eps by that much; the per-pixel check against clip(x + eps * sign)
// is exact.
constexpr double kLinfSlack = 0x1p-24;

// Support inside the allowed mask, signs in {-1,0,1}, pixels exactly clip(x + eps * sign),
// linf <= eps (+ rounding slack) and values in [0,1].
bool valid_outcome(const Image& x, const AttackOutcome& o, const SalientMask& allowed, float eps) {
  const auto signs = o.state.signs();
  if (o.state.height() != x.height() || o.state.width() != x.width()) return false;
  if (o.state.epsilon() != eps) return false;
  for (int r = 0; r < x.height(); ++r)
    for (int c = 0; c < x.width(); ++c) {
      const int s = signs[static_cast<std::size_t>(r) * x.width() + c];
      if (s < -1 || s > 1) return false;
      if (s != 0 && !allowed.test(r, c)) return false;
      for (int ch = 0; ch < x.channels(); ++ch) {
        const float want = std::clamp(x(r, c, ch) + eps * static_cast<float>(s), 0.0f, 1.0f);
        const float got = o.adversarial(r, c, ch);
        if (got != want || got < 0.0f || got > 1.0f) return false;
      }
    }
  return linf(x, o.adversarial) <= static_cast<double>(eps) + kLinfSlack;
}

bool monotone(const std::vector<TracePoint>& trace) {
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i].best_F < trace[i - 1].best_F) return false;
  return true;
}

using AttackFn = std::function<AttackOutcome(const FixtureItem&, const ClassifierBackend&, const AttackConfig&)>;

struct Variant {
  std::string name;
  AttackFn run;
  std::function<SalientMask(const FixtureItem&, const AttackConfig&)> allowed;
  bool traced;  // F-hat trace is subject to A4
};

Variant saliency_variant(SaliencyMode mode) {
  return {"saliency/" + to_string(mode),
          [](const FixtureItem& it, const ClassifierBackend& b, const AttackConfig& c) {
            return saliency_attack(it.x, it.label, it.mask, b, c);
          },
          [](const FixtureItem& it, const AttackConfig& c) { return effective_mask(it.mask, c.mode); }, true};
}

const Variant kSquare{"square",
                      [](const FixtureItem& it, const ClassifierBackend& b, const AttackConfig& c) {
                        return square_attack(it.x, it.label, b, c);
                      },
                      [](const FixtureItem& it, const AttackConfig&) {
                        return SalientMask::all_ones(it.x.height(), it.x.width());
                      },
                      false};

const Variant kSquareSal{"square-sal",
                         [](const FixtureItem& it, const ClassifierBackend& b, const AttackConfig& c) {
                           return square_attack(it.x, it.label, b, c, it.mask);
                         },
                         [](const FixtureItem& it, const AttackConfig&) { return it.mask; }, false};

const Variant kGreedy{"greedy",
                      [](const FixtureItem& it, const ClassifierBackend& b, const AttackConfig& c) {
                        return greedy_block_search(it.x, it.label, it.mask, b, c.k_int, c);
                      },
                      [](const FixtureItem& it, const AttackConfig& c) { return effective_mask(it.mask, c.mode); },
                      true};

std::vector<Run> run_variant(const Variant& v, const std::vector<FixtureItem>& items, AttackConfig c, Checks& checks,
                             bool with_mad) {
  std::vector<Run> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    c.seed = image_seed(0, it.name);
    CountingBackend counter(fixture_backend());
    const AttackOutcome o = v.run(it, counter, c);
    ++checks.attacks;
    if (!valid_outcome(it.x, o, v.allowed(it, c), c.epsilon)) {
      ++checks.invalid;
      checks.note(v.name + " invalid on " + it.name);
    }
    if (counter.calls() != o.queries) {
      ++checks.miscounted;
      checks.note(v.name + " miscounted on " + it.name);
    }
    if (o.queries > c.budget) ++checks.over_budget;
    if (v.traced) {
      ++checks.traced;
      if (!monotone(o.trace)) {
        ++checks.non_monotone;
        checks.note(v.name + " non-monotone trace on " + it.name);
      }
    }
    Run r;
    r.success = o.success;
    r.prior = o.prior_misclassified;
    r.queries = o.queries;
    r.l0 = l0_fraction(it.x, o.adversarial);
    r.l2 = l2(it.x, o.adversarial);
    if (with_mad && o.success) r.mad = mad(it.x, o.adversarial);
    out.push_back(r);
  }
  return out;
}

// Successful runs on images the model classifies correctly.
std::vector<const Run*> attacked_successes(const std::vector<Run>& runs) {
  std::vector<const Run*> out;
  for (const auto& r : runs)
    if (r.success && !r.prior) out.push_back(&r);
  return out;
}

std::size_t clean_correct(const std::vector<Run>& runs) {
  return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const Run& r) { return !r.prior; }));
}

double median_of(const std::vector<const Run*>& rs, double Run::*field) {
  std::vector<double> v;
  for (const Run* r : rs) v.push_back(r->*field);
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : median(v);
}

double mean_of(const std::vector<const Run*>& rs, double Run::*field) {
  std::vector<double> v;
  for (const Run* r : rs) v.push_back(r->*field);
  std::sort(v.begin(), v.end());
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_sd(v).mean;
}

double mean_queries(const std::vector<const Run*>& rs) {
  std::vector<double> v;
  for (const Run* r : rs) v.push_back(static_cast<double>(r->queries));
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_sd(v).mean;
}

double sr_true(const std::vector<Run>& runs) {
  const std::size_t n = clean_correct(runs);
  std::size_t good = 0;
  for (const auto& r : runs)
    if (r.success && !r.prior && r.mad <= kMadThreshold) ++good;
  return n ? static_cast<double>(good) / static_cast<double>(n) : 0.0;
}

AttackConfig config(int k_int, SaliencyMode mode = SaliencyMode::salient, std::size_t budget = kBudget) {
  AttackConfig c;
  c.epsilon = kEps;
  c.k_int = k_int;
  c.budget = budget;
  c.mode = mode;
  return c;
}

Image gaussian_noise(const Image& x, float sigma, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> n(0.0f, sigma);
  Image out = x;
  for (float& v : out.data()) v = std::clamp(v + n(rng), 0.0f, 1.0f);
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

int main() {
  const auto t_all = Clock::now();
  const auto items = load_fixture_items(kImages);
  std::printf("fixtures: %zu images, %dx%d, eps=%.2f, budget=%zu\n", items.size(), items.front().x.height(),
              items.front().x.width(), static_cast<double>(kEps), kBudget);

  Checks checks;

  // ---- shared runs
  auto t0 = Clock::now();
  const auto sal16 = run_variant(saliency_variant(SaliencyMode::salient), items, config(16), checks, true);
  const auto square = run_variant(kSquare, items, config(16), checks, true);
  const auto square_sal = run_variant(kSquareSal, items, config(16), checks, true);
  const auto greedy16 = run_variant(kGreedy, items, config(16), checks, false);
  const double a1_seconds = seconds_since(t0);
  const Checks a1_checks = checks;

  const auto nonsal16 =
      run_variant(saliency_variant(SaliencyMode::non_salient), items, config(16, SaliencyMode::non_salient), checks, true);
  const auto nosal16 =
      run_variant(saliency_variant(SaliencyMode::no_saliency), items, config(16, SaliencyMode::no_saliency), checks, true);
  const auto sal32 = run_variant(saliency_variant(SaliencyMode::salient), items, config(32), checks, false);
  const auto sal64 = run_variant(saliency_variant(SaliencyMode::salient), items, config(64), checks, false);

  // Budget grid for query accounting, all attack kinds.
  const std::vector<FixtureItem> few(items.begin(), items.begin() + 10);
  for (std::size_t budget : {1u, 10u, 100u, 3000u}) {
    for (const Variant& v : {saliency_variant(SaliencyMode::salient), saliency_variant(SaliencyMode::non_salient),
                             saliency_variant(SaliencyMode::no_saliency), kSquare, kSquareSal, kGreedy}) {
      AttackConfig c = config(16, SaliencyMode::salient, budget);
      if (v.name == "saliency/non-salient") c.mode = SaliencyMode::non_salient;
      if (v.name == "saliency/no-saliency") c.mode = SaliencyMode::no_saliency;
      run_variant(v, few, c, checks, false);
    }
  }
  std::printf("shared runs: %zu attacks in %.1f s\n", checks.attacks, seconds_since(t_all));

  // ---- A1
  {
    const bool pass = a1_checks.invalid == 0 && sal16.size() >= 100 && a1_seconds < 120.0;
    report("A1", pass,
           "perturbation validity: " + std::to_string(a1_checks.attacks - a1_checks.invalid) + "/" +
               std::to_string(a1_checks.attacks) + " valid over 4 attack types x " + std::to_string(items.size()) +
               " images (linf tolerance eps + 2^-24); attack time " + num(a1_seconds) + " s (limit 120 s)" +
               (a1_checks.first_problem.empty() ? "" : "; first: " + a1_checks.first_problem));
  }

  // ---- A2
  report("A2", checks.miscounted == 0 && checks.over_budget == 0,
         "query accounting: " + std::to_string(checks.attacks) + " runs, " + std::to_string(checks.miscounted) +
             " with backend calls != queries, " + std::to_string(checks.over_budget) +
             " over budget (grid 1/10/100/3000, all attacks)");

  // ---- A3
  {
    t0 = Clock::now();
    std::mt19937 rng(2024);
    int instances = 0, skipped = 0, above_optimum = 0, level1_miss = 0;
    while (instances < 20 && skipped < 200) {
      const auto inst = random_oracle_instance(rng);
      const double f_star = brute_force_optimum(inst.x, 0, inst.mask, inst.backend, kEps);
      const double single = best_single_block(inst.x, 0, inst.mask, inst.backend, kEps, 2);

      // Level 1 alone: clean query, then one refine level with side-2 children.
      std::vector<double> level1_F;
      SearchContext ctx(inst.x, 0, inst.backend, 1000000, inst.mask, kEps);
      bool stopped = false;
      try {
        ctx.query(ctx.state());
        const PerturbationState base = ctx.state();
        for (const Block& child : split_block(Block{0, 0, 4, 0}, 2)) {
          const auto locs = block_locations(child, inst.mask);
          if (locs.empty()) continue;
          const double up = ctx.query(RefineSearch::assign(base, locs, +1)).F;
          const double down = ctx.query(RefineSearch::assign(base, locs, -1)).F;
          level1_F.push_back(std::max(up, down));
        }
      } catch (const SearchContext::Stop&) {
        stopped = true;
      }
      // Refine itself: the first acceptance of a k=2 pass is the best level-1 candidate.
      SearchContext rctx(inst.x, 0, inst.backend, 1000000, inst.mask, kEps);
      double accepted = -std::numeric_limits<double>::infinity();
      try {
        rctx.query(rctx.state());
        RefineSearch search(rctx);
        search.refine(Block{0, 0, 4, 0}, 2, 1);
        // Trace point 1 + 2n is the first query after the level-1 acceptance.
        accepted = rctx.trace().size() > 1 + 2 * level1_F.size() ? rctx.trace()[1 + 2 * level1_F.size()].best_F
                                                                  : rctx.best_F();
      } catch (const SearchContext::Stop&) {
        stopped = true;
      }
      if (stopped) {  // an adversarial query ends the search early; the oracle comparison needs a full level
        ++skipped;
        continue;
      }
      ++instances;
      AttackConfig c = config(4, SaliencyMode::salient, 1000000);
      const auto full = saliency_attack(inst.x, 0, inst.mask, inst.backend, c);
      if (full.best_F > f_star || rctx.best_F() > f_star) ++above_optimum;
      const double level1_best = *std::max_element(level1_F.begin(), level1_F.end());
      if (accepted != single || level1_best != single) ++level1_miss;
    }
    const double secs = seconds_since(t0);
    report("A3", instances == 20 && above_optimum == 0 && level1_miss == 0 && secs < 60.0,
           "brute-force oracle: " + std::to_string(instances) + " instances (" + std::to_string(skipped) +
               " skipped: early success), F-hat > F* in " + std::to_string(above_optimum) +
               ", level-1 != best single block in " + std::to_string(level1_miss) + "; " + num(secs) + " s");
  }

  // ---- A4
  report("A4", checks.non_monotone == 0 && checks.traced > 0,
         "F-hat monotone in " + std::to_string(checks.traced - checks.non_monotone) + "/" +
             std::to_string(checks.traced) + " saliency-attack and greedy traces");

  const std::size_t correct = clean_correct(sal16);
  std::printf("clean-correct images: %zu/%zu (already-misclassified images are excluded below)\n", correct,
              items.size());

  // ---- A5
  {
    const auto s = attacked_successes(sal16), q = attacked_successes(square), qs = attacked_successes(square_sal);
    const double l0_s = median_of(s, &Run::l0), l0_q = median_of(q, &Run::l0), l0_qs = median_of(qs, &Run::l0);
    const double mad_s = median_of(s, &Run::mad), mad_q = median_of(q, &Run::mad);
    const bool pass = correct >= 100 && l0_s < l0_q && mad_s < mad_q && l0_qs < l0_q;
    report("A5", pass,
           "median L0 saliency " + num(l0_s) + " < square " + num(l0_q) + "; median MAD saliency " + num(mad_s) +
               " < square " + num(mad_q) + "; median L0 square-sal " + num(l0_qs) + " < square; SR saliency " +
               num(static_cast<double>(s.size()) / correct) + ", square " + num(static_cast<double>(q.size()) / correct) +
               ", square-sal " + num(static_cast<double>(qs.size()) / correct));
  }

  // ---- A6
  {
    t0 = Clock::now();
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::size_t pairs = 0, mismatches = 0, boundary = 0;
    while (pairs < 1000000) {
      const int side = 50;
      const float phi = (rng() % 4 == 0) ? static_cast<float>(rng() % 256) / 255.0f : u(rng);
      std::vector<float> scores(side * side);
      for (auto& s : scores) {
        const auto pick = rng() % 8;
        s = pick == 0 ? phi : pick == 1 ? std::nextafter(phi, 0.0f) : pick == 2 ? std::nextafter(phi, 1.0f) : u(rng);
        s = std::clamp(s, 0.0f, 1.0f);
      }
      const SalientMask m = binarize(SaliencyMap(side, side, scores), phi);
      for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
          const float s = scores[static_cast<std::size_t>(r) * side + c];
          bool want = true;
          if (s < phi) want = false;
          boundary += s == phi;
          mismatches += m.test(r, c) != want;
          ++pairs;
        }
    }
    report("A6", mismatches == 0,
           "binarize vs per-pixel reference: " + std::to_string(mismatches) + " mismatches over " +
               std::to_string(pairs) + " pairs (" + std::to_string(boundary) + " with s == phi); " +
               num(seconds_since(t0)) + " s");
  }

  // ---- A7
  {
    t0 = Clock::now();
    double worst_identity = 0.0;
    for (const auto& it : items) worst_identity = std::max(worst_identity, mad(it.x, it.x));
    std::vector<double> means;
    for (float sigma : {0.01f, 0.05f, 0.10f}) {
      std::vector<double> v;
      for (std::size_t i = 0; i < items.size(); ++i)
        v.push_back(mad(items[i].x, gaussian_noise(items[i].x, sigma, 1000 + static_cast<unsigned>(i))));
      std::sort(v.begin(), v.end());
      means.push_back(mean_sd(v).mean);
    }
    const bool increasing = means[0] < means[1] && means[1] < means[2];  // Spearman 1.0 over three levels
    const std::vector<AttackResult> at{{true, {0, 0, 0, 30.0}}};
    const std::vector<AttackResult> above{{true, {0, 0, 0, std::nextafter(30.0, 31.0)}}};
    const bool boundary = aggregate(at).sr_true == 1.0 && aggregate(above).sr_true == 0.0;
    report("A7", worst_identity <= 1e-9 && increasing && boundary,
           "max MAD(x,x) " + num(worst_identity) + " over " + std::to_string(items.size()) +
               " images; mean MAD at sigma 0.01/0.05/0.10 = " + num(means[0]) + "/" + num(means[1]) + "/" +
               num(means[2]) + "; SR_true counts MAD 30.0 and drops the next double: " + (boundary ? "yes" : "no") +
               "; " + num(seconds_since(t0)) + " s");
  }

  // ---- A8
  {
    const double srt_sal = sr_true(sal16), srt_non = sr_true(nonsal16);
    const double mad_sal = mean_of(attacked_successes(sal16), &Run::mad);
    const double mad_nosal = mean_of(attacked_successes(nosal16), &Run::mad);
    const double q_refine = mean_queries(attacked_successes(sal16));
    const double q_greedy = mean_queries(attacked_successes(greedy16));
    report("A8", srt_sal >= srt_non && mad_sal <= mad_nosal && q_greedy > q_refine,
           "SR_true salient " + num(srt_sal) + " >= non-salient " + num(srt_non) + "; mean MAD salient " +
               num(mad_sal) + " <= no-saliency " + num(mad_nosal) + "; mean queries per success greedy(16) " +
               num(q_greedy) + " > refine(k_int 16) " + num(q_refine));
  }

  // ---- A9
  {
    const auto s64 = attacked_successes(sal64), s32 = attacked_successes(sal32), s16 = attacked_successes(sal16);
    const double q64 = mean_queries(s64), q32 = mean_queries(s32), q16 = mean_queries(s16);
    const double l64 = mean_of(s64, &Run::l2), l32 = mean_of(s32, &Run::l2), l16 = mean_of(s16, &Run::l2);
    report("A9", q64 <= q32 && q32 <= q16 && l64 >= l32 && l32 >= l16,
           "k_int 64/32/16: mean queries " + num(q64) + "/" + num(q32) + "/" + num(q16) + " (non-decreasing), mean L2 " +
               num(l64) + "/" + num(l32) + "/" + num(l16) + " (non-increasing)");
  }

  // ---- A10
  {
    t0 = Clock::now();
    const fs::path dir = fs::temp_directory_path() / "salattack_acceptance_a10";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
      std::ifstream in(fixtures() / "labels.csv");
      std::ofstream out(dir / "labels.csv");
      std::string line;
      for (int i = 0; i < 20 && std::getline(in, line); ++i) out << line << '\n';
    }
    ExperimentSpec s;
    s.dataset = fixtures() / "images";
    s.labels = dir / "labels.csv";
    s.weights = fixtures() / "model.srw";
    s.saliency = (fixtures() / "saliency").string();
    s.attacks = {"saliency", "square", "square-sal", "greedy"};
    s.budgets = {kBudget};
    s.config = config(16);
    s.config.seed = 12345;
    s.output = dir / "first";
    s.workers = 1;
    const std::string first = slurp(run_suite(s).records);
    s.output = dir / "second";
    s.workers = 4;
    const std::string second = slurp(run_suite(s).records);
    const auto lines = std::count(first.begin(), first.end(), '\n');
    report("A10", !first.empty() && first == second,
           "records CSV byte-identical across two runs (1 and 4 workers): " + std::string(first == second ? "yes" : "no") +
               ", " + std::to_string(lines - 1) + " records, " + std::to_string(first.size()) + " bytes; " +
               num(seconds_since(t0)) + " s");
  }

  std::printf("total %.1f s, failed criteria: %d\n", seconds_since(t_all), failures);
  return failures == 0 ? 0 : 1;
}
