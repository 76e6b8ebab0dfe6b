#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "adcorda/checkpoint.hpp"
#include "adcorda/grad_check.hpp"
#include "adcorda/mlp.hpp"
#include "adcorda/train.hpp"

using namespace adcorda;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("adcorda_models_" + name)).string();
}

LabeledDataset blobs(std::uint64_t seed, std::size_t per_class = 40) {
  SyntheticSpec s;
  s.num_classes = 4;
  s.dim = 12;
  s.per_class = per_class;
  s.noise_std = 0.05f;
  s.label_noise = 0.0f;
  s.seed = seed;
  return generate_synthetic(s);
}

TrainConfig fast_config(std::size_t epochs) {
  TrainConfig c;
  c.lr = 0.05f;
  c.batch_size = 16;
  c.epochs = epochs;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(Init, SameSeedSameParameters) {
  const MlpSpec spec{20, {16, 8}, 5, 42};
  EXPECT_EQ(init_mlp(spec), init_mlp(spec));
  MlpSpec other = spec;
  other.seed = 43;
  EXPECT_FALSE(init_mlp(spec) == init_mlp(other));
}

TEST(Init, NoHiddenLayersIsLinear) {
  const auto m = init_mlp(MlpSpec{6, {}, 3, 1});
  ASSERT_EQ(m.num_layers(), 1u);
  EXPECT_EQ(m.layers()[0].weight.shape(), (Shape{6, 3}));
  EXPECT_EQ(m.spec().name(), "mlp-6-3");
}

TEST(Init, HeStandardDeviation) {
  const auto m = init_mlp(MlpSpec{1000, {}, 1000, 9});
  const auto& w = m.layers()[0].weight;
  double sum = 0.0, sq = 0.0;
  for (float v : w.data()) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(w.size());
  const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  EXPECT_NEAR(sd, std::sqrt(2.0 / 1000.0), 0.1 * std::sqrt(2.0 / 1000.0));
  for (float b : m.layers()[0].bias.data()) EXPECT_EQ(b, 0.0f);
}

TEST(Init, InvalidSpecsAreRejected) {
  EXPECT_THROW(init_mlp(MlpSpec{0, {4}, 3, 1}), InputError);
  EXPECT_THROW(init_mlp(MlpSpec{4, {0}, 3, 1}), InputError);
  EXPECT_THROW(init_mlp(MlpSpec{4, {4}, 1, 1}), InputError);
}

TEST(Forward, ZeroModelGivesZeroLogits) {
  const Model m(MlpSpec{5, {7}, 3, 1});
  const auto logits = m.predict_logits(std::vector<float>{0.1f, 0.2f, 0.3f, 0.4f, 0.5f});
  EXPECT_EQ(logits, std::vector<float>(3, 0.0f));
}

TEST(Forward, BatchRowsMatchSingleSamples) {
  const auto m = init_mlp(MlpSpec{12, {16}, 4, 2});
  const auto ds = blobs(1, 1);
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  const Tensor logits = m.batch_logits(ds.batch(idx));
  for (std::size_t r = 0; r < 4; ++r) {
    const auto single = m.predict_logits(ds.input(r));
    const auto row = logits.row(r);
    EXPECT_TRUE(std::equal(single.begin(), single.end(), row.begin(), row.end()));
  }
}

TEST(Forward, TapedAndPlainForwardAgree) {
  const auto m = init_mlp(MlpSpec{12, {16, 8}, 4, 2});
  const Tensor x = blobs(1, 2).batch(std::vector<std::size_t>{0, 3, 5});
  Tape<float> tape;
  EXPECT_EQ(tape.value(m.forward(tape, tape.constant(x))), m.batch_logits(x));
}

TEST(Forward, WrongInputWidthIsShapeError) {
  const auto m = init_mlp(MlpSpec{12, {16}, 4, 2});
  EXPECT_THROW(m.batch_logits(Tensor(Shape{2, 11})), ShapeError);
}

TEST(Forward, InputGradientMatchesFiniteDifferences) {
  const auto m = init_mlp(MlpSpec{12, {16}, 4, 2});
  const auto ds = blobs(2, 1);
  const int labels[] = {2};
  auto f = [&](Tape<float>& t, Var x) { return t.softmax_cross_entropy(m.forward(t, x), labels); };
  const Tensor x(Shape{1, 12}, std::vector<float>(ds.input(0).begin(), ds.input(0).end()));
  EXPECT_TRUE(grad_check(f, x).passed);
  const auto ig = m.input_gradient(ds.input(0), 2);
  Tape<float> tape;
  const Var in = tape.variable(x);
  tape.backward(tape.softmax_cross_entropy(m.forward(tape, in), labels));
  EXPECT_TRUE(std::equal(ig.grad.begin(), ig.grad.end(), tape.grad(in).begin()));
}

TEST(Train, ZeroEpochsReturnsInput) {
  const auto ds = blobs(1);
  const auto m = init_mlp(MlpSpec{12, {16}, 4, 2});
  const auto r = train(m, ds, ds, fast_config(0));
  EXPECT_EQ(r.model, m);
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(r.best_epoch, 0u);
}

TEST(Train, SeparableBlobsAreLearned) {
  const auto tr = blobs(1), va = blobs(2, 10);
  const auto r = train(init_mlp(MlpSpec{12, {16}, 4, 2}), tr, va, fast_config(50));
  EXPECT_GE(evaluate(r.model, tr).accuracy, 0.99);
  EXPECT_GE(r.best_valid_accuracy, 0.99);
  ASSERT_EQ(r.history.size(), 50u);
  // The returned snapshot is the earliest epoch achieving the best validation accuracy.
  for (const auto& h : r.history) {
    EXPECT_LE(h.valid_accuracy, r.best_valid_accuracy);
    if (h.epoch < r.best_epoch) {
      EXPECT_LT(h.valid_accuracy, r.best_valid_accuracy);
    }
  }
  EXPECT_DOUBLE_EQ(evaluate(r.model, va).accuracy, r.best_valid_accuracy);
}

TEST(Train, SmoothedLossDecreases) {
  const auto tr = blobs(1), va = blobs(2, 10);
  const auto r = train(init_mlp(MlpSpec{12, {16}, 4, 2}), tr, va, fast_config(30));
  const std::size_t w = 5;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s + w <= r.history.size(); s += w) {
    double m = 0.0;
    for (std::size_t i = s; i < s + w; ++i) m += r.history[i].train_loss;
    m /= static_cast<double>(w);
    EXPECT_LE(m, prev);
    prev = m;
  }
}

TEST(Train, HistoryIsDeterministic) {
  const auto tr = blobs(1), va = blobs(2, 10);
  const auto a = train(init_mlp(MlpSpec{12, {16}, 4, 2}), tr, va, fast_config(5));
  const auto b = train(init_mlp(MlpSpec{12, {16}, 4, 2}), tr, va, fast_config(5));
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.model, b.model);
}

TEST(Train, InvalidConfigIsRejected) {
  const auto ds = blobs(1);
  auto cfg = fast_config(1);
  cfg.batch_size = 0;
  EXPECT_THROW(train(init_mlp(MlpSpec{12, {16}, 4, 2}), ds, ds, cfg), ConfigError);
  EXPECT_THROW(train(init_mlp(MlpSpec{13, {16}, 4, 2}), ds, ds, fast_config(1)), ShapeError);
}

TEST(Evaluate, HandBuiltCases) {
  // Identity-like linear model: logit j = x_j.
  Model m(MlpSpec{2, {}, 2, 1});
  m.layers()[0].weight = Tensor(Shape{2, 2}, {1, 0, 0, 1});
  const LabeledDataset ds(2, 2, {1.0f, 0.0f, 0.0f, 1.0f, 0.5f, 0.5f, 1.0f, 0.0f}, {0, 1, 0, 1});
  // Row 3 ties and goes to class 0 (correct); row 4 is wrong.
  const auto e = evaluate(m, ds);
  EXPECT_DOUBLE_EQ(e.accuracy, 0.75);
  const double l1 = std::log1p(std::exp(-1.0)), l3 = std::log(2.0), l4 = std::log1p(std::exp(1.0));
  EXPECT_NEAR(e.loss, (2 * l1 + l3 + l4) / 4.0, 1e-6);
  EXPECT_THROW(evaluate(m, ds.subset(std::vector<std::size_t>{})), InputError);
}

TEST(Evaluate, MatchesBruteForceRecount) {
  const auto ds = blobs(5, 100);
  const auto m = init_mlp(MlpSpec{12, {16}, 4, 7});
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto l = m.predict_logits(ds.input(i));
    std::size_t best = 0;
    for (std::size_t j = 1; j < l.size(); ++j)
      if (l[j] > l[best]) best = j;
    if (static_cast<int>(best) == ds.label(i)) ++correct;
  }
  EXPECT_DOUBLE_EQ(evaluate(m, ds, 7).accuracy, static_cast<double>(correct) / static_cast<double>(ds.size()));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto m = init_mlp(MlpSpec{12, {16, 8}, 4, 123456789});
  const auto path = temp_path("roundtrip.adcd");
  save_checkpoint(m, path, CheckpointMeta{17, 0.875f});
  const auto c = load_checkpoint(path);
  EXPECT_EQ(c.model, m);
  EXPECT_EQ(c.model.spec().hidden_dims, m.spec().hidden_dims);
  EXPECT_EQ(c.model.spec().seed, m.spec().seed);
  EXPECT_EQ(c.meta.epochs_run, 17u);
  EXPECT_EQ(c.meta.best_valid_accuracy, 0.875f);
  std::filesystem::remove(path);
}

TEST(Checkpoint, TruncatedFileIsRejected) {
  const auto m = init_mlp(MlpSpec{12, {16}, 4, 1});
  io::Writer w;
  encode_checkpoint(w, m);
  const auto& full = w.buffer();
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, full.size() / 2, full.size() - 1}) {
    io::Reader r(std::vector<std::uint8_t>(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(cut)));
    try {
      decode_checkpoint(r);
      FAIL() << "cut at " << cut;
    } catch (const FormatError& e) {
      EXPECT_EQ(e.kind(), FormatError::Kind::kTruncated) << "cut at " << cut;
    }
  }
}

TEST(Checkpoint, BadMagicAndVersion) {
  const auto m = init_mlp(MlpSpec{12, {16}, 4, 1});
  io::Writer w;
  encode_checkpoint(w, m);
  auto bytes = w.buffer();
  auto magic = bytes;
  magic[0] = 'X';
  io::Reader r1(magic);
  try {
    decode_checkpoint(r1);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::kBadMagic);
  }
  auto version = bytes;
  version[4] = 9;
  io::Reader r2(version);
  try {
    decode_checkpoint(r2);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::kVersion);
  }
  EXPECT_THROW(load_checkpoint(temp_path("does_not_exist.adcd")), FormatError);
}
