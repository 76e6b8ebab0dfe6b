#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adcorda/classifier.hpp"
#include "adcorda/error.hpp"
#include "adcorda/rng.hpp"
#include "adcorda/tensor.hpp"

namespace adcorda {

enum class Provenance : std::uint8_t { kOriginal, kCorrected };

/// Immutable set of inputs in [0,1]^dim with labels in [0, num_classes).
class LabeledDataset {
 public:
  LabeledDataset(std::size_t dim, std::size_t num_classes, std::vector<float> inputs, std::vector<int> labels,
                 std::vector<Provenance> provenance = {})
      : dim_(dim), num_classes_(num_classes), inputs_(std::move(inputs)), labels_(std::move(labels)),
        provenance_(std::move(provenance)) {
    if (dim_ == 0) throw InputError("dataset dimension must be positive");
    if (num_classes_ < 2) throw InputError("dataset needs at least two classes");
    if (inputs_.size() != labels_.size() * dim_) {
      throw ShapeError("dataset has " + std::to_string(inputs_.size()) + " input values for " +
                       std::to_string(labels_.size()) + " samples of dimension " + std::to_string(dim_));
    }
    if (provenance_.empty()) provenance_.assign(labels_.size(), Provenance::kOriginal);
    if (provenance_.size() != labels_.size()) throw ShapeError("provenance tags do not match sample count");
    for (std::size_t i = 0; i < inputs_.size(); ++i) {
      const float v = inputs_[i];
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw InputError("sample " + std::to_string(i / dim_) + " has input value " + std::to_string(v) +
                         " outside [0, 1]");
      }
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] < 0 || static_cast<std::size_t>(labels_[i]) >= num_classes_) {
        throw InputError("sample " + std::to_string(i) + " has label " + std::to_string(labels_[i]) +
                         " outside [0, " + std::to_string(num_classes_) + ")");
      }
    }
  }

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_classes() const noexcept { return num_classes_; }

  std::span<const float> input(std::size_t i) const { return std::span<const float>(inputs_).subspan(i * dim_, dim_); }
  int label(std::size_t i) const { return labels_.at(i); }
  Provenance provenance(std::size_t i) const { return provenance_.at(i); }

  const std::vector<float>& inputs() const noexcept { return inputs_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::vector<Provenance>& provenances() const noexcept { return provenance_; }

  std::size_t count(Provenance p) const { return static_cast<std::size_t>(std::count(provenance_.begin(), provenance_.end(), p)); }

  Tensor batch(std::span<const std::size_t> indices) const {
    std::vector<float> data;
    data.reserve(indices.size() * dim_);
    for (auto i : indices) {
      auto row = input(i);
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{indices.size(), dim_}, std::move(data));
  }

  std::vector<int> batch_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(labels_.at(i));
    return out;
  }

  LabeledDataset subset(std::span<const std::size_t> indices) const {
    std::vector<float> data;
    std::vector<int> labels;
    std::vector<Provenance> prov;
    data.reserve(indices.size() * dim_);
    for (auto i : indices) {
      if (i >= size()) throw InputError("subset index " + std::to_string(i) + " out of range");
      auto row = input(i);
      data.insert(data.end(), row.begin(), row.end());
      labels.push_back(labels_[i]);
      prov.push_back(provenance_[i]);
    }
    return LabeledDataset(dim_, num_classes_, std::move(data), std::move(labels), std::move(prov));
  }

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

 private:
  std::size_t dim_;
  std::size_t num_classes_;
  std::vector<float> inputs_;
  std::vector<int> labels_;
  std::vector<Provenance> provenance_;
};

enum class SubsetRole { kCorrect, kWrong, kCorrected };

// Sorted unique indices into a parent dataset.
struct SubsetIndices {
  SubsetRole role = SubsetRole::kCorrect;
  std::vector<std::size_t> indices;

  std::size_t size() const noexcept { return indices.size(); }
  bool empty() const noexcept { return indices.empty(); }

  void validate(std::size_t parent_size) const {
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= parent_size) throw InputError("subset index " + std::to_string(indices[i]) + " out of range");
      if (i > 0 && indices[i] <= indices[i - 1]) throw InputError("subset indices must be sorted and unique");
    }
  }
};

// ---- synthetic data ---------------------------------------------------------

struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::size_t dim = 64;
  std::size_t per_class = 500;
  float noise_std = 0.15f;
  float label_noise = 0.05f;
  // Sample stream (noise and label flips).
  std::uint64_t seed = 1;
  // Class prototypes; datasets sharing it are draws from one distribution.
  std::uint64_t prototype_seed = 20240101;
};

/// Class c gets a prototype drawn uniformly from [0,1]^dim; each sample is
/// its prototype plus N(0, noise_std^2) noise, clamped to [0,1]. Each sample
/// independently gets a uniformly chosen different label with probability
/// label_noise. Noise and label flips use separate streams, so changing
/// label_noise leaves the inputs unchanged.
inline LabeledDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 2) throw InputError("synthetic data needs at least two classes");
  if (spec.dim < 2) throw InputError("synthetic data needs dimension >= 2");
  if (spec.per_class == 0) throw InputError("synthetic data needs at least one sample per class");
  if (!(spec.noise_std >= 0.0f) || !std::isfinite(spec.noise_std)) throw InputError("noise_std must be >= 0");
  if (!(spec.label_noise >= 0.0f && spec.label_noise < 1.0f)) throw InputError("label_noise must lie in [0, 1)");

  auto proto_rng = make_rng(spec.prototype_seed, stream::kPrototypes);
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  std::vector<float> prototypes(spec.num_classes * spec.dim);
  for (auto& p : prototypes) p = unit(proto_rng);

  auto noise_rng = make_rng(spec.seed, stream::kNoise);
  auto label_rng = make_rng(spec.seed, stream::kLabels);
  std::normal_distribution<float> noise(0.0f, 1.0f);
  std::bernoulli_distribution flip(spec.label_noise);
  std::uniform_int_distribution<int> other(0, static_cast<int>(spec.num_classes) - 2);

  const std::size_t n = spec.num_classes * spec.per_class;
  std::vector<float> inputs(n * spec.dim);
  std::vector<int> labels(n);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t k = 0; k < spec.per_class; ++k) {
      const std::size_t i = c * spec.per_class + k;
      for (std::size_t j = 0; j < spec.dim; ++j) {
        const float v = prototypes[c * spec.dim + j] + spec.noise_std * noise(noise_rng);
        inputs[i * spec.dim + j] = std::clamp(v, 0.0f, 1.0f);
      }
      int label = static_cast<int>(c);
      const bool flipped = flip(label_rng);
      const int shift = other(label_rng);
      if (flipped) label = shift >= label ? shift + 1 : shift;
      labels[i] = label;
    }
  }
  return LabeledDataset(spec.dim, spec.num_classes, std::move(inputs), std::move(labels));
}

// ---- splits and permutations ----------------------------------------------

struct TrainValidSplit {
  LabeledDataset train;
  LabeledDataset valid;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> valid_indices;
};

/// Seeded random split; round(N * valid_fraction) samples (at least one on
/// each side) go to validation. Both index lists are returned sorted.
inline TrainValidSplit split_train_valid(const LabeledDataset& ds, double valid_fraction, std::uint64_t seed) {
  if (!(valid_fraction > 0.0 && valid_fraction < 1.0)) throw InputError("valid_fraction must lie in (0, 1)");
  if (ds.size() < 2) throw InputError("cannot split a dataset with fewer than two samples");
  std::vector<std::size_t> perm(ds.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  auto rng = make_rng(seed, stream::kSplit);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(ds.size()) * valid_fraction));
  n_valid = std::clamp<std::size_t>(n_valid, 1, ds.size() - 1);
  std::vector<std::size_t> valid(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_valid));
  std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_valid), perm.end());
  std::sort(valid.begin(), valid.end());
  std::sort(train.begin(), train.end());
  return TrainValidSplit{ds.subset(train), ds.subset(valid), std::move(train), std::move(valid)};
}

inline LabeledDataset shuffle_deterministic(const LabeledDataset& ds, std::uint64_t seed) {
  std::vector<std::size_t> perm(ds.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  auto rng = make_rng(seed, stream::kShuffle);
  std::shuffle(perm.begin(), perm.end(), rng);
  return ds.subset(perm);
}

// ---- AdCorDA set algebra ---------------------------------------------------

struct CorrectnessPartition {
  SubsetIndices correct{SubsetRole::kCorrect, {}};
  SubsetIndices wrong{SubsetRole::kWrong, {}};
};

inline void check_compatible(std::size_t model_in, std::size_t model_k, const LabeledDataset& ds) {
  if (model_in != ds.dim()) {
    throw ShapeError("model input dimension " + std::to_string(model_in) + " does not match dataset dimension " +
                     std::to_string(ds.dim()));
  }
  if (model_k != ds.num_classes()) {
    throw ShapeError("model has " + std::to_string(model_k) + " classes, dataset has " +
                     std::to_string(ds.num_classes()));
  }
}

// Argmax predictions for every sample, computed in fixed-size chunks.
template <BatchClassifier C>
std::vector<int> predict_all(const C& model, const LabeledDataset& ds, std::size_t chunk = 256) {
  check_compatible(model.input_dim(), model.num_classes(), ds);
  std::vector<int> preds;
  preds.reserve(ds.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += chunk) {
    const std::size_t end = std::min(ds.size(), start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = model.batch_logits(ds.batch(idx));
    for (std::size_t r = 0; r < idx.size(); ++r) preds.push_back(static_cast<int>(kernels::argmax<float>(logits.row(r))));
  }
  return preds;
}

/// T_c = samples the model classifies correctly, T_w = the rest.
template <BatchClassifier C>
CorrectnessPartition partition_by_correctness(const C& model, const LabeledDataset& train) {
  const auto preds = predict_all(model, train);
  CorrectnessPartition out;
  for (std::size_t i = 0; i < train.size(); ++i) {
    (preds[i] == train.label(i) ? out.correct : out.wrong).indices.push_back(i);
  }
  return out;
}

// A replacement input for one training sample.
struct CorrectedSample {
  std::size_t index = 0;
  std::vector<float> input;
};

/// T' = T_c (unchanged) plus the corrected samples, which keep their
/// original labels and are tagged Provenance::kCorrected. Samples are kept
/// in parent-index order; samples in neither set are dropped.
inline LabeledDataset merge_corrected(const LabeledDataset& train, const SubsetIndices& correct,
                                      std::span<const CorrectedSample> corrected) {
  correct.validate(train.size());
  std::vector<int> slot(train.size(), -1);  // -1 absent, -2 from T_c, >=0 corrected entry
  for (auto i : correct.indices) slot[i] = -2;
  for (std::size_t k = 0; k < corrected.size(); ++k) {
    const auto& c = corrected[k];
    if (c.index >= train.size()) throw InputError("corrected sample index " + std::to_string(c.index) + " out of range");
    if (slot[c.index] != -1) throw InputError("corrected sample index " + std::to_string(c.index) + " collides");
    if (c.input.size() != train.dim()) throw ShapeError("corrected sample " + std::to_string(c.index) + " has wrong dimension");
    slot[c.index] = static_cast<int>(k);
  }
  std::vector<float> inputs;
  std::vector<int> labels;
  std::vector<Provenance> prov;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (slot[i] == -1) continue;
    std::span<const float> row = slot[i] == -2 ? train.input(i) : std::span<const float>(corrected[static_cast<std::size_t>(slot[i])].input);
    inputs.insert(inputs.end(), row.begin(), row.end());
    labels.push_back(train.label(i));
    prov.push_back(slot[i] == -2 ? train.provenance(i) : Provenance::kCorrected);
  }
  return LabeledDataset(train.dim(), train.num_classes(), std::move(inputs), std::move(labels), std::move(prov));
}

}  // namespace adcorda
