#pragma once

// Small fixtures shared by the unit tests.

#include <filesystem>
#include <string>

#include "adcorda/dataset.hpp"
#include "adcorda/mlp.hpp"
#include "adcorda/train.hpp"

namespace adcorda::testing {

inline std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("adcorda_test_" + name)).string();
}

inline LabeledDataset small_synthetic(std::uint64_t seed, std::size_t per_class = 60, float label_noise = 0.1f) {
  SyntheticSpec s;
  s.num_classes = 5;
  s.dim = 16;
  s.per_class = per_class;
  s.noise_std = 0.2f;
  s.label_noise = label_noise;
  s.seed = seed;
  return generate_synthetic(s);
}

inline TrainConfig quick_train(std::size_t epochs = 10) {
  TrainConfig c;
  c.lr = 0.05f;
  c.batch_size = 16;
  c.epochs = epochs;
  c.seed = 5;
  return c;
}

// A 16-32-5 MLP trained briefly on small_synthetic(1).
inline const Model& trained_model() {
  static const Model m = [] {
    const auto tr = small_synthetic(1), va = small_synthetic(2, 10);
    return train(init_mlp(MlpSpec{16, {32}, 5, 4}), tr, va, quick_train()).model;
  }();
  return m;
}

// Model whose logit j equals x_j.
inline Model coordinate_model(std::size_t d) {
  Model m(MlpSpec{d, {}, d, 1});
  Tensor w(Shape{d, d});
  for (std::size_t i = 0; i < d; ++i) w[i * d + i] = 1.0f;
  m.layers()[0].weight = w;
  return m;
}

// Two inputs, two classes: logit0 = 0, logit1 = x0 - x1. The decision
// boundary is the line x0 = x1.
inline Model diagonal_model() {
  Model m(MlpSpec{2, {}, 2, 1});
  m.layers()[0].weight = Tensor(Shape{2, 2}, {0, 1, 0, -1});
  return m;
}

}  // namespace adcorda::testing
