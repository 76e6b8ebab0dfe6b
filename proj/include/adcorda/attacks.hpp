#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "adcorda/classifier.hpp"
#include "adcorda/dataset.hpp"
#include "adcorda/error.hpp"
#include "adcorda/rng.hpp"
#include "adcorda/tensor.hpp"

namespace adcorda {

enum class AttackKind { BI, BIH, VBI, VBI1, LL, DDN, SP };

inline constexpr AttackKind kAllAttackKinds[] = {AttackKind::BI,  AttackKind::BIH, AttackKind::VBI, AttackKind::VBI1,
                                                 AttackKind::LL,  AttackKind::DDN, AttackKind::SP};

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::BI: return "BI";
    case AttackKind::BIH: return "BIH";
    case AttackKind::VBI: return "VBI";
    case AttackKind::VBI1: return "VBI1";
    case AttackKind::LL: return "LL";
    case AttackKind::DDN: return "DDN";
    case AttackKind::SP: return "SP";
  }
  return "?";
}

// Case-insensitive; nullopt for unknown names.
inline std::optional<AttackKind> parse_attack_kind(std::string_view s) {
  std::string up(s);
  for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  for (auto k : kAllAttackKinds)
    if (to_string(k) == up) return k;
  return std::nullopt;
}

inline bool is_sign_attack(AttackKind k) { return k != AttackKind::DDN && k != AttackKind::SP; }

// kCorrect: push a misclassified sample to its true label.
// kEvade: push a correctly classified sample to any other label.
enum class AttackGoal { kCorrect, kEvade };

struct AttackConfig {
  float epsilon = 0.1f;
  float alpha = 0.025f;
  std::size_t max_iter = 10;
  float ddn_gamma = 0.05f;
  std::optional<float> ddn_init_norm;  // default 0.1 * sqrt(d)
  std::size_t ddn_max_iter = 100;
  float ddn_step = 1.0f;
  std::vector<float> sp_densities{0.01f, 0.02f, 0.05f, 0.1f, 0.2f, 0.4f};
  std::size_t sp_repeats = 10;
  // When set, salt/pepper values are pulled into the L-inf ball of this radius.
  std::optional<float> sp_linf_bound;
  std::uint64_t seed = 1;
  AttackGoal goal = AttackGoal::kCorrect;

  // alpha = epsilon / 4; VBI runs 5 iterations, the other sign attacks 10.
  static AttackConfig defaults(AttackKind kind, float epsilon = 0.1f) {
    AttackConfig c;
    c.epsilon = epsilon;
    c.alpha = epsilon / 4.0f;
    c.max_iter = (kind == AttackKind::VBI || kind == AttackKind::VBI1) ? 5 : 10;
    return c;
  }

  void validate(AttackKind kind) const {
    if (is_sign_attack(kind)) {
      if (!(epsilon >= 0.0f) || !std::isfinite(epsilon)) throw InputError("attack epsilon must be finite and >= 0");
      if (!(alpha > 0.0f) || !std::isfinite(alpha)) throw InputError("attack alpha must be positive");
      if (max_iter == 0) throw InputError("attack max_iter must be positive");
    } else if (kind == AttackKind::DDN) {
      if (!(ddn_gamma >= 0.0f && ddn_gamma < 1.0f)) throw InputError("ddn gamma must lie in [0, 1)");
      if (ddn_init_norm && !(*ddn_init_norm > 0.0f)) throw InputError("ddn init norm must be positive");
      if (ddn_max_iter == 0) throw InputError("ddn max_iter must be positive");
      if (!(ddn_step > 0.0f)) throw InputError("ddn step must be positive");
    } else {
      if (sp_densities.empty()) throw InputError("sp densities must not be empty");
      for (std::size_t i = 0; i < sp_densities.size(); ++i) {
        if (!(sp_densities[i] > 0.0f && sp_densities[i] <= 1.0f)) throw InputError("sp densities must lie in (0, 1]");
        if (i > 0 && !(sp_densities[i] > sp_densities[i - 1])) {
          throw InputError("sp densities must be strictly increasing");
        }
      }
      if (sp_repeats == 0) throw InputError("sp repeats must be positive");
      if (sp_linf_bound && !(*sp_linf_bound >= 0.0f)) throw InputError("sp L-inf bound must be >= 0");
    }
  }
};

struct CorrectionResult {
  std::size_t index = 0;
  std::vector<float> perturbed;
  bool success = false;
  std::size_t iterations = 0;
  float linf = 0.0f;
  float l2 = 0.0f;
  int label = 0;            // y_true
  int initial_prediction = 0;
  int final_prediction = 0;
  // logit(y_true) - logit(initial prediction), before and after.
  float margin_before = 0.0f;
  float margin_after = 0.0f;
};

// Number of single-sample attack runs since process start.
inline std::atomic<std::uint64_t>& attack_invocations() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

/// Per-coordinate clamp of x into [max(0, x0 - eps), min(1, x0 + eps)].
inline void clip_ball(std::span<float> x, std::span<const float> x0, float epsilon) {
  if (x.size() != x0.size()) throw ShapeError("clip_ball operands differ in size");
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float lo = std::max(0.0f, x0[i] - epsilon);
    const float hi = std::min(1.0f, x0[i] + epsilon);
    x[i] = std::clamp(x[i], lo, hi);
  }
}

namespace detail {

inline bool goal_met(AttackGoal goal, int prediction, int label) {
  return goal == AttackGoal::kCorrect ? prediction == label : prediction != label;
}

inline bool all_finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

template <DifferentiableClassifier C>
CorrectionResult start(const C& model, std::span<const float> x0, int label, AttackGoal goal,
                       std::vector<float>& logits0) {
  if (x0.size() != model.input_dim()) throw ShapeError("attack input has the wrong dimension");
  if (label < 0 || static_cast<std::size_t>(label) >= model.num_classes()) throw InputError("attack label out of range");
  attack_invocations().fetch_add(1, std::memory_order_relaxed);
  logits0 = model.predict_logits(x0);
  const int pred = static_cast<int>(kernels::argmax<float>(logits0));
  if (goal_met(goal, pred, label)) {
    throw ContractError(goal == AttackGoal::kCorrect ? "attacked sample is already classified correctly"
                                                     : "attacked sample is already misclassified");
  }
  CorrectionResult r;
  r.label = label;
  r.initial_prediction = pred;
  r.final_prediction = pred;
  r.perturbed.assign(x0.begin(), x0.end());
  const auto y = static_cast<std::size_t>(label), p = static_cast<std::size_t>(pred);
  r.margin_before = logits0[y] - logits0[p];
  r.margin_after = r.margin_before;
  return r;
}

// Fills prediction, margin and distances for r.perturbed.
template <DifferentiableClassifier C>
void finish(const C& model, std::span<const float> x0, CorrectionResult& r) {
  const auto logits = model.predict_logits(r.perturbed);
  r.final_prediction = static_cast<int>(kernels::argmax<float>(logits));
  r.margin_after = logits[static_cast<std::size_t>(r.label)] - logits[static_cast<std::size_t>(r.initial_prediction)];
  double l2 = 0.0;
  float linf = 0.0f;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const float d = r.perturbed[i] - x0[i];
    linf = std::max(linf, std::abs(d));
    l2 += static_cast<double>(d) * d;
  }
  r.linf = linf;
  r.l2 = static_cast<float>(std::sqrt(l2));
}

inline double l2_norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

}  // namespace detail

/// BI, BIH, VBI, VBI1 and LL. Each step moves x by alpha * sign of the input
/// gradient of the cross-entropy and is then clipped to the epsilon ball:
///   BI   +sign(grad J(x, y_true))
///   BIH  +sign(grad J(x, y_H)),  y_H  = argmax of the logits at x0
///   VBI  -sign(grad J(x, y_true)), VBI1 is VBI limited to one step
///   LL   -sign(grad J(x, y_LL)), y_LL = argmin of the logits at x0
/// Stops as soon as the goal is met and returns the last iterate.
template <DifferentiableClassifier C>
CorrectionResult iterative_sign_attack(const C& model, std::span<const float> x0, int label, AttackKind kind,
                                       const AttackConfig& cfg) {
  if (!is_sign_attack(kind)) throw InputError(to_string(kind) + " is not a sign-gradient attack");
  cfg.validate(kind);
  std::vector<float> logits0;
  CorrectionResult r = detail::start(model, x0, label, cfg.goal, logits0);

  int grad_label = label;
  float direction = 1.0f;
  switch (kind) {
    case AttackKind::BI: break;
    case AttackKind::BIH: grad_label = static_cast<int>(kernels::argmax<float>(logits0)); break;
    case AttackKind::VBI:
    case AttackKind::VBI1: direction = -1.0f; break;
    case AttackKind::LL:
      grad_label = static_cast<int>(kernels::argmin<float>(logits0));
      direction = -1.0f;
      break;
    case AttackKind::DDN:
    case AttackKind::SP: break;
  }
  const std::size_t iters = kind == AttackKind::VBI1 ? std::min<std::size_t>(cfg.max_iter, 1) : cfg.max_iter;
  auto& x = r.perturbed;
  for (std::size_t it = 0; it < iters; ++it) {
    const auto g = model.input_gradient(x, grad_label);
    if (!detail::all_finite(g.grad)) break;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const float s = g.grad[i] > 0.0f ? 1.0f : (g.grad[i] < 0.0f ? -1.0f : 0.0f);
      x[i] += direction * cfg.alpha * s;
    }
    clip_ball(x, x0, cfg.epsilon);
    r.iterations = it + 1;
    if (detail::goal_met(cfg.goal, predict_label(model, x), label)) break;
  }
  detail::finish(model, x0, r);
  r.success = detail::goal_met(cfg.goal, r.final_prediction, label);
  return r;
}

/// Decoupled direction and norm. The noise eta keeps L2 norm sigma: each
/// iteration steps along the normalised gradient (descending J(., y_true)
/// when correcting, ascending it when evading), rescales eta to sigma and
/// clamps x0 + eta to [0,1]. sigma shrinks by (1 - gamma) while the current
/// iterate meets the goal and grows by (1 + gamma) otherwise. Returns the
/// successful iterate with the smallest L2 distance, or the last iterate.
template <DifferentiableClassifier C>
CorrectionResult ddn_attack(const C& model, std::span<const float> x0, int label, const AttackConfig& cfg) {
  cfg.validate(AttackKind::DDN);
  std::vector<float> logits0;
  CorrectionResult r = detail::start(model, x0, label, cfg.goal, logits0);
  const std::size_t d = x0.size();
  double sigma = cfg.ddn_init_norm ? *cfg.ddn_init_norm : 0.1 * std::sqrt(static_cast<double>(d));
  const float sgn = cfg.goal == AttackGoal::kCorrect ? -1.0f : 1.0f;

  std::vector<float> eta(d, 0.0f), x(x0.begin(), x0.end());
  std::optional<std::vector<float>> best;
  double best_l2 = 0.0;
  std::size_t best_iter = 0;
  auto consider = [&](std::size_t iter) {
    if (!detail::goal_met(cfg.goal, predict_label(model, x), label)) return false;
    std::vector<float> diff(d);
    for (std::size_t i = 0; i < d; ++i) diff[i] = x[i] - x0[i];
    const double l2 = detail::l2_norm(diff);
    if (!best || l2 < best_l2) {
      best = x;
      best_l2 = l2;
      best_iter = iter;
    }
    return true;
  };

  std::size_t iter = 0;
  for (; iter < cfg.ddn_max_iter; ++iter) {
    const bool met = consider(iter);
    const auto g = model.input_gradient(x, label);
    if (!detail::all_finite(g.grad)) break;
    const double gnorm = detail::l2_norm(g.grad);
    if (gnorm > 0.0) {
      const auto step = static_cast<float>(cfg.ddn_step / gnorm);
      for (std::size_t i = 0; i < d; ++i) eta[i] += sgn * step * g.grad[i];
    }
    sigma *= met ? (1.0 - cfg.ddn_gamma) : (1.0 + cfg.ddn_gamma);
    const double enorm = detail::l2_norm(eta);
    if (enorm > 0.0) {
      const auto k = static_cast<float>(sigma / enorm);
      for (auto& e : eta) e *= k;
    }
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = std::clamp(x0[i] + eta[i], 0.0f, 1.0f);
      eta[i] = x[i] - x0[i];
    }
  }
  consider(iter);
  r.iterations = iter;
  if (best) {
    r.perturbed = std::move(*best);
    r.iterations = best_iter;
  } else {
    r.perturbed = x;
  }
  detail::finish(model, x0, r);
  r.success = detail::goal_met(cfg.goal, r.final_prediction, label);
  return r;
}

/// Salt and pepper. For each density p (ascending) run sp_repeats trials,
/// each setting round(p * d) (at least one) randomly chosen coordinates to 0
/// or 1 by a fair coin. The first trial that meets the goal is returned. The
/// RNG is derived from (cfg.seed, stream), so results do not depend on which
/// worker runs the sample.
template <DifferentiableClassifier C>
CorrectionResult sp_attack(const C& model, std::span<const float> x0, int label, const AttackConfig& cfg,
                           std::uint64_t stream = 0) {
  cfg.validate(AttackKind::SP);
  std::vector<float> logits0;
  CorrectionResult r = detail::start(model, x0, label, cfg.goal, logits0);
  const std::size_t d = x0.size();
  auto rng = make_rng(cfg.seed, stream);
  std::vector<std::size_t> coords(d);
  std::vector<float> x(d);
  std::size_t trials = 0;
  for (float p : cfg.sp_densities) {
    const auto count = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(p * static_cast<double>(d))), 1, d);
    for (std::size_t rep = 0; rep < cfg.sp_repeats; ++rep) {
      ++trials;
      std::iota(coords.begin(), coords.end(), std::size_t{0});
      std::copy(x0.begin(), x0.end(), x.begin());
      for (std::size_t k = 0; k < count; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, d - 1);
        std::swap(coords[k], coords[pick(rng)]);
        const std::size_t c = coords[k];
        const bool salt = (rng() >> 63) != 0;
        float v = salt ? 1.0f : 0.0f;
        if (cfg.sp_linf_bound) v = salt ? std::min(1.0f, x0[c] + *cfg.sp_linf_bound) : std::max(0.0f, x0[c] - *cfg.sp_linf_bound);
        x[c] = v;
      }
      if (detail::goal_met(cfg.goal, predict_label(model, x), label)) {
        r.perturbed = x;
        r.iterations = trials;
        detail::finish(model, x0, r);
        r.success = true;
        return r;
      }
    }
  }
  r.iterations = trials;
  detail::finish(model, x0, r);
  r.success = false;
  return r;
}

// Dispatches on kind; `stream` seeds the per-sample RNG of SP.
template <DifferentiableClassifier C>
CorrectionResult run_attack(const C& model, std::span<const float> x0, int label, AttackKind kind,
                            const AttackConfig& cfg, std::uint64_t stream = 0) {
  switch (kind) {
    case AttackKind::BI:
    case AttackKind::BIH:
    case AttackKind::VBI:
    case AttackKind::VBI1:
    case AttackKind::LL: return iterative_sign_attack(model, x0, label, kind, cfg);
    case AttackKind::DDN: return ddn_attack(model, x0, label, cfg);
    case AttackKind::SP: return sp_attack(model, x0, label, cfg, stream);
  }
  throw InputError("unknown attack kind");
}

// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware).
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; !failed && (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

struct CorrectionOutcome {
  std::vector<CorrectedSample> corrected;  // T_a
  std::vector<CorrectionResult> results;   // one per T_w sample, same order
  std::size_t successes = 0;
  std::size_t total = 0;

  // successes / total, or nullopt when T_w is empty.
  std::optional<double> rate() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(successes) / static_cast<double>(total);
  }
};

/// Attacks every sample of T_w. T_a holds the successful samples, or every
/// perturbed sample when keep_all is set. Sample i of the parent set uses
/// RNG stream i, so the outcome does not depend on the thread count.
template <DifferentiableClassifier C>
CorrectionOutcome correct_set(const C& model, const LabeledDataset& train, const SubsetIndices& wrong, AttackKind kind,
                              const AttackConfig& cfg, bool keep_all = false, std::size_t threads = 0) {
  cfg.validate(kind);
  if (cfg.goal != AttackGoal::kCorrect) throw InputError("correct_set needs an attack configured to correct");
  check_compatible(model.input_dim(), model.num_classes(), train);
  wrong.validate(train.size());
  CorrectionOutcome out;
  out.total = wrong.size();
  out.results.resize(wrong.size());
  parallel_for(wrong.size(), threads, [&](std::size_t k) {
    const std::size_t i = wrong.indices[k];
    auto r = run_attack(model, train.input(i), train.label(i), kind, cfg, i);
    r.index = i;
    out.results[k] = std::move(r);
  });
  for (const auto& r : out.results) {
    if (r.success) ++out.successes;
    if (r.success || keep_all) out.corrected.push_back({r.index, r.perturbed});
  }
  return out;
}

}  // namespace adcorda
