#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "salattack/errors.hpp"
#include "salattack/image.hpp"

namespace salattack {

/// K >= 2 finite class scores.
class Logits {
 public:
  Logits() = default;
  explicit Logits(std::vector<float> values) : values_(std::move(values)) {
    if (values_.size() < 2) throw InvalidInput("Logits: need at least two classes");
    for (float v : values_) {
      if (!std::isfinite(v)) throw InvalidInput("Logits: non-finite score");
    }
  }

  std::size_t size() const { return values_.size(); }
  float operator[](std::size_t k) const { return values_[k]; }
  const std::vector<float>& values() const { return values_; }

  friend bool operator==(const Logits&, const Logits&) = default;

 private:
  std::vector<float> values_;
};

/// Counts model evaluations against an optional hard budget.
class QueryLedger {
 public:
  QueryLedger() = default;
  explicit QueryLedger(std::optional<std::size_t> budget) : budget_(budget) {}

  std::size_t used() const { return used_; }
  std::optional<std::size_t> budget() const { return budget_; }
  bool exhausted() const { return budget_ && used_ >= *budget_; }
  std::size_t remaining() const {
    return budget_ ? *budget_ - used_ : std::numeric_limits<std::size_t>::max();
  }

  void charge() {
    if (exhausted()) throw BudgetExhausted();
    ++used_;
  }

 private:
  std::size_t used_ = 0;
  std::optional<std::size_t> budget_;
};

struct InputSpec {
  int height = 0;
  int width = 0;
  int channels = 0;
  friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

/// Black-box classifier. Implementations must be deterministic: the same image
/// always yields the same logits. evaluate() may be called concurrently.
class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;
  virtual InputSpec input_spec() const = 0;
  virtual int num_classes() const = 0;
  virtual Logits evaluate(const Image& x) const = 0;
};

/// Wraps a backend and counts every evaluate() call it forwards.
class CountingBackend final : public ClassifierBackend {
 public:
  explicit CountingBackend(const ClassifierBackend& inner) : inner_(inner) {}

  InputSpec input_spec() const override { return inner_.input_spec(); }
  int num_classes() const override { return inner_.num_classes(); }
  Logits evaluate(const Image& x) const override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.evaluate(x);
  }

  std::size_t calls() const { return calls_.load(); }
  void reset() { calls_ = 0; }

 private:
  const ClassifierBackend& inner_;
  mutable std::atomic<std::size_t> calls_{0};
};

/// Adapts any deterministic callable Image -> Logits. Handy for scripted models.
class FunctionBackend final : public ClassifierBackend {
 public:
  using Fn = std::function<Logits(const Image&)>;
  FunctionBackend(InputSpec spec, int num_classes, Fn fn) : spec_(spec), classes_(num_classes), fn_(std::move(fn)) {}

  InputSpec input_spec() const override { return spec_; }
  int num_classes() const override { return classes_; }
  Logits evaluate(const Image& x) const override { return fn_(x); }

 private:
  InputSpec spec_;
  int classes_;
  Fn fn_;
};

/// One budgeted query. The ledger is charged only when logits come back.
inline Logits predict(const ClassifierBackend& backend, QueryLedger& ledger, const Image& x) {
  if (ledger.exhausted()) throw BudgetExhausted();
  const InputSpec spec = backend.input_spec();
  if (spec.height != x.height() || spec.width != x.width() || spec.channels != x.channels())
    throw InvalidInput("predict: image geometry does not match the backend input");
  Logits z = backend.evaluate(x);
  ledger.charge();
  return z;
}

inline void check_label(const Logits& z, int y_gt) {
  if (y_gt < 0 || static_cast<std::size_t>(y_gt) >= z.size())
    throw InvalidInput("ground-truth class " + std::to_string(y_gt) + " out of range");
}

/// Untargeted CW margin loss: -max(Z_y - max_{i != y} Z_i, 0). Always <= 0.
inline double cw_loss(const Logits& z, int y_gt) {
  check_label(z, y_gt);
  double other = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (static_cast<int>(i) != y_gt) other = std::max(other, static_cast<double>(z[i]));
  }
  return -std::max(static_cast<double>(z[y_gt]) - other, 0.0);
}

/// First index attaining the maximum score.
inline int argmax(const Logits& z) {
  const auto& v = z.values();
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// True iff the first maximal logit is not the ground-truth class.
inline bool is_adversarial(const Logits& z, int y_gt) {
  check_label(z, y_gt);
  return argmax(z) != y_gt;
}

struct Evaluation {
  double F = -std::numeric_limits<double>::infinity();
  bool adversarial = false;
};

/// F(S+, S-) for the state's sign grid: one query on the perturbed image.
inline Evaluation evaluate_objective(const ClassifierBackend& backend, QueryLedger& ledger, const Image& x,
                                     const PerturbationState& state, int y_gt) {
  const Logits z = predict(backend, ledger, apply_perturbation(x, state));
  return Evaluation{cw_loss(z, y_gt), is_adversarial(z, y_gt)};
}

inline double objective_F(const ClassifierBackend& backend, QueryLedger& ledger, const Image& x,
                          const PerturbationState& state, int y_gt) {
  return evaluate_objective(backend, ledger, x, state, y_gt).F;
}

}  // namespace salattack
