#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "adcorda/classifier.hpp"
#include "adcorda/dataset.hpp"
#include "adcorda/error.hpp"
#include "adcorda/mlp.hpp"
#include "adcorda/optim.hpp"
#include "adcorda/rng.hpp"
#include "adcorda/tape.hpp"

namespace adcorda {

struct TrainConfig {
  float lr = 1e-4f;
  float momentum = 0.9f;
  float weight_decay = 1e-4f;
  std::size_t batch_size = 128;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(lr > 0.0f)) throw ConfigError("train.lr must be positive");
    if (momentum < 0.0f) throw ConfigError("train.momentum must be non-negative");
    if (weight_decay < 0.0f) throw ConfigError("train.weight_decay must be non-negative");
    if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  }
};

/// Endless stream of minibatch indices: the concatenation of independent
/// seeded permutations of [0, n), cut into consecutive chunks of batch_size.
/// A batch may straddle two permutations; when n < batch_size it contains
/// repeats.
class CyclicBatcher {
 public:
  CyclicBatcher(std::size_t n, std::size_t batch_size, std::uint64_t seed)
      : n_(n), batch_size_(batch_size), rng_(make_rng(seed, stream::kBatches)) {
    if (n_ == 0) throw InputError("cannot draw batches from an empty dataset");
    if (batch_size_ == 0) throw InputError("batch size must be positive");
    order_.resize(n_);
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    out.reserve(batch_size_);
    while (out.size() < batch_size_) {
      if (pos_ == 0) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        std::shuffle(order_.begin(), order_.end(), rng_);
      }
      out.push_back(order_[pos_]);
      pos_ = (pos_ + 1) % n_;
    }
    return out;
  }

  // Batches per epoch: one pass over n samples.
  std::size_t steps_per_epoch() const noexcept { return (n_ + batch_size_ - 1) / batch_size_; }

 private:
  std::size_t n_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;  // mean cross-entropy
};

/// Accuracy (argmax, ties to the lowest class) and mean cross-entropy.
template <BatchClassifier C>
Evaluation evaluate(const C& model, const LabeledDataset& set, std::size_t chunk = 256) {
  if (set.empty()) throw InputError("cannot evaluate on an empty dataset");
  check_compatible(model.input_dim(), model.num_classes(), set);
  std::size_t correct = 0;
  double loss = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += chunk) {
    const std::size_t end = std::min(set.size(), start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = model.batch_logits(set.batch(idx));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto row = logits.row(r);
      const int y = set.label(idx[r]);
      if (static_cast<int>(kernels::argmax<float>(row)) == y) ++correct;
      loss += static_cast<double>(kernels::log_sum_exp<float>(row) - row[static_cast<std::size_t>(y)]);
    }
  }
  const auto n = static_cast<double>(set.size());
  return Evaluation{static_cast<double>(correct) / n, loss / n};
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;  // mean minibatch loss over the epoch
  double train_accuracy = 0.0;
  double valid_accuracy = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainResult {
  Model model;  // best-by-validation snapshot
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  double best_valid_accuracy = 0.0;
};

/// One SGD step on the mean cross-entropy of a batch; returns the loss.
inline float sgd_batch_step(Model& model, Sgd<float>& opt, const Tensor& batch, std::span<const int> labels) {
  model.zero_grad();
  Tape<float> tape;
  const Var x = tape.constant_ref(batch);
  const Var logits = model.forward_trainable(tape, x);
  const Var loss = tape.softmax_cross_entropy(logits, labels);
  const float value = tape.value(loss)[0];
  tape.backward(loss);
  auto params = model.parameters();
  opt.step(params);
  return value;
}

/// Minibatch SGD over CyclicBatcher batches, ceil(N / batch_size) steps per
/// epoch. After each epoch the model is evaluated on both sets; the
/// returned model is the snapshot with the highest validation accuracy
/// (earliest epoch on ties). With zero epochs the input model is returned.
inline TrainResult train(Model model, const LabeledDataset& train_set, const LabeledDataset& valid_set,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty() || valid_set.empty()) throw InputError("training needs non-empty train and validation sets");
  check_compatible(model.input_dim(), model.num_classes(), train_set);
  check_compatible(model.input_dim(), model.num_classes(), valid_set);

  TrainResult result{model, {}, 0, 0.0};
  if (cfg.epochs == 0) return result;

  model.set_requires_grad(true);
  Sgd<float> opt(cfg.lr, cfg.momentum, cfg.weight_decay);
  CyclicBatcher batcher(train_set.size(), cfg.batch_size, cfg.seed);
  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    const std::size_t steps = batcher.steps_per_epoch();
    for (std::size_t s = 0; s < steps; ++s) {
      const auto idx = batcher.next();
      const auto labels = train_set.batch_labels(idx);
      loss_sum += sgd_batch_step(model, opt, train_set.batch(idx), labels);
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(steps), evaluate(model, train_set).accuracy,
                    evaluate(model, valid_set).accuracy};
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
