#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adcorda/dataset.hpp"
#include "adcorda/error.hpp"
#include "adcorda/mlp.hpp"
#include "adcorda/optim.hpp"
#include "adcorda/tape.hpp"
#include "adcorda/train.hpp"

namespace adcorda {

// Reference weights for 10- and 100-class image benchmarks.
inline constexpr float kCoralLambda10Class = 1.0f / 750.0f;
inline constexpr float kCoralLambda100Class = 1.0f / 25.0f;

namespace detail {

// Column-centred copy of F [n x d], accumulated in double.
template <typename Scalar>
std::vector<double> centered(const BasicTensor<Scalar>& f) {
  const std::size_t n = f.rows(), d = f.cols();
  std::vector<double> mean(d, 0.0), out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += f[i * d + j];
  for (auto& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = f[i * d + j] - mean[j];
  return out;
}

inline std::vector<double> covariance_of_centered(const std::vector<double>& fc, std::size_t n, std::size_t d) {
  std::vector<double> c(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) {
      const double x = fc[i * d + a];
      for (std::size_t b = 0; b < d; ++b) c[a * d + b] += x * fc[i * d + b];
    }
  for (auto& v : c) v /= static_cast<double>(n - 1);
  return c;
}

template <typename Scalar>
void check_features(const BasicTensor<Scalar>& f, const char* what) {
  if (f.rank() != 2) throw ShapeError(std::string(what) + " features must be [n x d], got " + shape_string(f.shape()));
  if (f.rows() < 2) throw InputError(std::string(what) + " covariance needs at least two rows");
}

}  // namespace detail

/// Unbiased covariance (F^T F - (1^T F)^T (1^T F) / n) / (n - 1) of F [n x d].
template <typename Scalar>
BasicTensor<Scalar> feature_covariance(const BasicTensor<Scalar>& f) {
  detail::check_features(f, "covariance");
  const std::size_t n = f.rows(), d = f.cols();
  const auto c = detail::covariance_of_centered(detail::centered(f), n, d);
  return BasicTensor<Scalar>(Shape{d, d}, std::vector<Scalar>(c.begin(), c.end()));
}

/// ||C_S - C_T||_F^2 / (4 d^2).
template <typename Scalar>
Scalar coral_loss(const BasicTensor<Scalar>& fs, const BasicTensor<Scalar>& ft) {
  detail::check_features(fs, "source");
  detail::check_features(ft, "target");
  if (fs.cols() != ft.cols()) {
    throw ShapeError("coral_loss feature width mismatch: " + shape_string(fs.shape()) + " vs " + shape_string(ft.shape()));
  }
  const std::size_t d = fs.cols();
  const auto cs = detail::covariance_of_centered(detail::centered(fs), fs.rows(), d);
  const auto ct = detail::covariance_of_centered(detail::centered(ft), ft.rows(), d);
  double s = 0.0;
  for (std::size_t i = 0; i < cs.size(); ++i) s += (cs[i] - ct[i]) * (cs[i] - ct[i]);
  return static_cast<Scalar>(s / (4.0 * static_cast<double>(d) * static_cast<double>(d)));
}

/// Taped CORAL loss. Backward: dL/dF_S = F_S,c (C_S - C_T) / (d^2 (n_S - 1)) and
/// dL/dF_T = -F_T,c (C_S - C_T) / (d^2 (n_T - 1)), F_c the centred features.
template <typename Scalar>
Var coral_loss(Tape<Scalar>& tape, Var source, Var target) {
  const auto& fs = tape.value(source);
  const auto& ft = tape.value(target);
  const Scalar loss = coral_loss(fs, ft);
  const std::size_t d = fs.cols(), ns = fs.rows(), nt = ft.rows();
  auto fsc = detail::centered(fs);
  auto ftc = detail::centered(ft);
  const auto cs = detail::covariance_of_centered(fsc, ns, d);
  const auto ct = detail::covariance_of_centered(ftc, nt, d);
  std::vector<double> diff(d * d);
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = cs[i] - ct[i];
  const double d2 = static_cast<double>(d) * static_cast<double>(d);
  return tape.custom(
      BasicTensor<Scalar>::scalar(loss), {source, target},
      [=, fsc = std::move(fsc), ftc = std::move(ftc), diff = std::move(diff)](Tape<Scalar>& t, std::span<const Scalar> g) {
        auto push = [&](Var v, const std::vector<double>& fc, std::size_t n, double sign) {
          if (!t.needs_grad(v)) return;
          auto out = t.grad_buffer(v);
          const double k = sign * static_cast<double>(g[0]) / (d2 * static_cast<double>(n - 1));
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t b = 0; b < d; ++b) {
              double acc = 0.0;
              for (std::size_t a = 0; a < d; ++a) acc += fc[i * d + a] * diff[a * d + b];
              out[i * d + b] += static_cast<Scalar>(k * acc);
            }
        };
        push(source, fsc, ns, 1.0);
        push(target, ftc, nt, -1.0);
      });
}

/// class_loss + lambda * coral.
template <typename Scalar>
Scalar total_loss(Scalar class_loss, Scalar coral, Scalar lambda) {
  if (lambda < Scalar(0)) throw InputError("coral lambda must be non-negative");
  return class_loss + lambda * coral;
}

template <typename Scalar>
Var total_loss(Tape<Scalar>& tape, Var class_loss, Var coral, Scalar lambda) {
  if (lambda < Scalar(0)) throw InputError("coral lambda must be non-negative");
  return tape.add(class_loss, tape.scale(coral, lambda));
}

struct CoralConfig {
  std::optional<float> lambda;  // unset: calibrate with a probe epoch
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  float lr = 1e-4f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
  std::uint64_t seed = 1;

  void validate() const {
    if (lambda && !(*lambda >= 0.0f)) throw ConfigError("coral.lambda must be non-negative");
    if (batch_size < 2) throw ConfigError("coral.batch_size must be at least 2");
    if (!(lr > 0.0f)) throw ConfigError("coral.lr must be positive");
    if (momentum < 0.0f || weight_decay < 0.0f) throw ConfigError("coral.momentum and coral.weight_decay must be >= 0");
  }
};

struct AdaptEpochRecord {
  std::size_t epoch = 0;  // 1-based
  double class_loss = 0.0;  // mean over steps
  double coral_loss = 0.0;  // mean over steps, unweighted
  double max_coral_loss = 0.0;
  double valid_accuracy = 0.0;

  friend bool operator==(const AdaptEpochRecord&, const AdaptEpochRecord&) = default;
};

struct AdaptResult {
  Model model;
  std::vector<AdaptEpochRecord> history;
  std::size_t best_epoch = 0;
  double best_valid_accuracy = 0.0;
  float lambda = 0.0f;
};

namespace detail {

// One pass of ceil(|target| / B) steps with the given lambda; updates model.
// A zero lambda skips the target forward pass entirely.
inline AdaptEpochRecord coral_epoch(Model& model, Sgd<float>& opt, CyclicBatcher& src_batches,
                                    CyclicBatcher& tgt_batches, const LabeledDataset& source,
                                    const LabeledDataset& target, float lambda, std::size_t steps) {
  AdaptEpochRecord rec;
  for (std::size_t s = 0; s < steps; ++s) {
    const auto si = src_batches.next();
    const auto ti = tgt_batches.next();
    const auto labels = source.batch_labels(si);
    if (lambda == 0.0f) {
      rec.class_loss += sgd_batch_step(model, opt, source.batch(si), labels);
      continue;
    }
    model.zero_grad();
    const Tensor xs_batch = source.batch(si);
    const Tensor xt_batch = target.batch(ti);
    Tape<float> tape;
    const Var ls = model.forward_trainable(tape, tape.constant_ref(xs_batch));
    const Var lt = model.forward_trainable(tape, tape.constant_ref(xt_batch));
    const Var ce = tape.softmax_cross_entropy(ls, labels);
    const Var co = coral_loss(tape, ls, lt);
    const Var total = total_loss(tape, ce, co, lambda);
    const double c = tape.value(co)[0];
    rec.class_loss += tape.value(ce)[0];
    rec.coral_loss += c;
    rec.max_coral_loss = std::max(rec.max_coral_loss, c);
    tape.backward(total);
    auto params = model.parameters();
    opt.step(params);
  }
  rec.class_loss /= static_cast<double>(steps);
  rec.coral_loss /= static_cast<double>(steps);
  return rec;
}

inline void check_adapt_inputs(const Model& model, const LabeledDataset& source, const LabeledDataset& target,
                               const LabeledDataset& valid) {
  if (source.empty() || target.empty() || valid.empty()) throw InputError("adaptation needs non-empty source, target and validation sets");
  check_compatible(model.input_dim(), model.num_classes(), source);
  check_compatible(model.input_dim(), model.num_classes(), target);
  check_compatible(model.input_dim(), model.num_classes(), valid);
}

}  // namespace detail

/// mean(class loss) / mean(coral loss) over one probe epoch run with
/// lambda = 1 on a copy of the model. Returns 1 when the coral term vanishes.
inline float calibrate_lambda(const Model& model, const LabeledDataset& source, const LabeledDataset& target,
                              const CoralConfig& cfg) {
  cfg.validate();
  CoralConfig probe = cfg;
  probe.lambda = 1.0f;
  probe.validate();
  Model copy = model;
  copy.set_requires_grad(true);
  Sgd<float> opt(cfg.lr, cfg.momentum, cfg.weight_decay);
  CyclicBatcher sb(source.size(), cfg.batch_size, cfg.seed), tb(target.size(), cfg.batch_size, cfg.seed);
  const auto rec = detail::coral_epoch(copy, opt, sb, tb, source, target, 1.0f, tb.steps_per_epoch());
  if (!(rec.coral_loss > 0.0) || !std::isfinite(rec.coral_loss)) return 1.0f;
  return static_cast<float>(rec.class_loss / rec.coral_loss);
}

/// Fine-tunes `model` on the labelled source set while aligning the
/// covariance of its logits with those of the unlabelled target set. Source
/// and target batches come from independent cyclic batchers sharing the
/// seed; an epoch is ceil(|target| / batch_size) steps. The returned model is
/// the epoch snapshot with the highest validation accuracy (earliest on
/// ties); with zero epochs the input model is returned unchanged.
inline AdaptResult adapt(Model model, const LabeledDataset& source, const LabeledDataset& target,
                         const LabeledDataset& valid, const CoralConfig& cfg) {
  cfg.validate();
  detail::check_adapt_inputs(model, source, target, valid);
  const float lambda = cfg.lambda ? *cfg.lambda : calibrate_lambda(model, source, target, cfg);
  AdaptResult result{model, {}, 0, 0.0, lambda};
  if (cfg.epochs == 0) return result;

  model.set_requires_grad(true);
  Sgd<float> opt(cfg.lr, cfg.momentum, cfg.weight_decay);
  CyclicBatcher sb(source.size(), cfg.batch_size, cfg.seed), tb(target.size(), cfg.batch_size, cfg.seed);
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto rec = detail::coral_epoch(model, opt, sb, tb, source, target, lambda, tb.steps_per_epoch());
    rec.epoch = epoch;
    rec.valid_accuracy = evaluate(model, valid).accuracy;
    result.history.push_back(rec);
    if (!have_best || rec.valid_accuracy > result.best_valid_accuracy) {
      have_best = true;
      result.best_valid_accuracy = rec.valid_accuracy;
      result.best_epoch = epoch;
      result.model = model;
    }
  }
  for (auto* p : result.model.parameters()) {
    p->clear_grad();
    p->set_requires_grad(false);
  }
  return result;
}

}  // namespace adcorda
