// Acceptance run on the frozen toy benchmark. Prints one PASS/FAIL line per
// criterion and exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "adcorda/adcorda.hpp"

using namespace adcorda;
namespace fs = std::filesystem;

namespace {

// Frozen thresholds. Pilot values with the default config are listed in README.md.
constexpr double kFdStep = 1e-3;
constexpr double kFdTolerance = 1e-3;
constexpr double kDeltaThreshold = 0.0;     // mean delta_acc must exceed this
constexpr double kKeepAllTolerance = 0.005;  // 0.5 points
constexpr double kInt8MaxDrop = 0.02;
constexpr std::size_t kAttackSamples = 200;

using Clock = std::chrono::steady_clock;
using DTensor = BasicTensor<double>;

struct Verdict {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void criterion(int id, const std::string& name, double time_limit_s, const std::function<Verdict()>& body) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (time_limit_s > 0 && secs >= time_limit_s) {
    v.pass = false;
    v.detail += "; over the " + std::to_string(static_cast<int>(time_limit_s)) + " s budget";
  }
  std::cout << (v.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << id << ". " << name << ": " << v.detail << " ["
            << std::fixed << std::setprecision(1) << secs << " s]" << std::endl;
  std::cout.unsetf(std::ios::floatfield);
  if (!v.pass) ++g_failures;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

std::string pts(double v) {
  std::ostringstream os;
  os << std::showpos << std::fixed << std::setprecision(2) << 100.0 * v;
  return os.str();
}

DTensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  DTensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// ---- finite differences ---------------------------------------------------------

struct FdStats {
  std::size_t checked = 0;
  std::size_t skipped = 0;
  double max_rel = 0.0;
  std::string worst;

  void add(double analytic, double numeric, const std::string& what) {
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1.0});
    ++checked;
    if (rel > max_rel) {
      max_rel = rel;
      worst = what;
    }
  }
};

// Central differences of a taped scalar function against its reverse-mode gradient.
template <typename F>
void fd_tape(F&& f, const DTensor& x, FdStats& s, const std::string& what) {
  Tape<double> tape;
  const Var v = tape.variable(x);
  const Var loss = f(tape, v);
  tape.backward(loss);
  const std::vector<double> analytic(tape.grad(v).begin(), tape.grad(v).end());
  auto eval = [&](const DTensor& at) {
    Tape<double> t;
    const Var c = t.constant(at);
    return t.value(f(t, c))[0];
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    DTensor p = x, m = x;
    p[i] += kFdStep;
    m[i] -= kFdStep;
    s.add(analytic[i], (eval(p) - eval(m)) / (p[i] - m[i]), what);
  }
}

// Independent double-precision MLP forward: mean cross entropy plus the ReLU
// activity pattern, used to skip coordinates whose stencil crosses a kink.
struct OracleOut {
  double loss = 0.0;
  std::vector<bool> active;
};

OracleOut mlp_oracle(const Mlp<double>& m, const DTensor& x, const std::vector<int>& labels) {
  OracleOut out;
  const std::size_t n = x.rows();
  std::vector<double> h(x.data().begin(), x.data().end());
  std::size_t width = x.cols();
  const auto& layers = m.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].weight;
    const std::size_t next = w.cols();
    std::vector<double> z(n * next);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < next; ++j) {
        double acc = layers[l].bias[j];
        for (std::size_t k = 0; k < width; ++k) acc += h[r * width + k] * w[k * next + j];
        z[r * next + j] = acc;
      }
    if (l + 1 < layers.size()) {
      for (auto& v : z) {
        out.active.push_back(v > 0.0);
        v = std::max(v, 0.0);
      }
    }
    h = std::move(z);
    width = next;
  }
  for (std::size_t r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < width; ++j) mx = std::max(mx, h[r * width + j]);
    double se = 0.0;
    for (std::size_t j = 0; j < width; ++j) se += std::exp(h[r * width + j] - mx);
    out.loss += mx + std::log(se) - h[r * width + static_cast<std::size_t>(labels[r])];
  }
  out.loss /= static_cast<double>(n);
  return out;
}

void fd_mlp_input(const Mlp<double>& model, const DTensor& x, const std::vector<int>& labels, FdStats& s) {
  Tape<double> tape;
  const Var v = tape.variable(x);
  tape.backward(tape.softmax_cross_entropy(model.forward(tape, v), labels));
  const std::vector<double> analytic(tape.grad(v).begin(), tape.grad(v).end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    DTensor p = x, m = x;
    p[i] += kFdStep;
    m[i] -= kFdStep;
    const auto op = mlp_oracle(model, p, labels), om = mlp_oracle(model, m, labels);
    if (op.active != om.active) {
      ++s.skipped;
      continue;
    }
    s.add(analytic[i], (op.loss - om.loss) / (p[i] - m[i]), "mlp input");
  }
}

void fd_mlp_params(const Mlp<double>& model, const DTensor& x, const std::vector<int>& labels, FdStats& s) {
  Mlp<double> trained = model;
  trained.set_requires_grad(true);
  trained.zero_grad();
  Tape<double> tape;
  const Var in = tape.constant(x);
  tape.backward(tape.softmax_cross_entropy(trained.forward_trainable(tape, in), labels));
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    for (int which = 0; which < 2; ++which) {
      const auto& param = which == 0 ? trained.layers()[l].weight : trained.layers()[l].bias;
      for (std::size_t i = 0; i < param.size(); ++i) {
        Mlp<double> p = model, m = model;
        (which == 0 ? p.layers()[l].weight : p.layers()[l].bias)[i] += kFdStep;
        (which == 0 ? m.layers()[l].weight : m.layers()[l].bias)[i] -= kFdStep;
        const auto op = mlp_oracle(p, x, labels), om = mlp_oracle(m, x, labels);
        if (op.active != om.active) {
          ++s.skipped;
          continue;
        }
        s.add(param.grad()[i], (op.loss - om.loss) / (2 * kFdStep), "mlp parameters");
      }
    }
  }
}

// Weighted sum reduces any output to a scalar.
Var weighted(Tape<double>& t, Var y, const DTensor& r) { return t.sum(t.mul(y, t.constant(r))); }

Verdict gradient_integrity() {
  FdStats s;
  std::size_t mlp_checked = 0, mlp_skipped = 0;
  for (std::uint64_t inst = 0; inst < 100; ++inst) {
    std::mt19937_64 rng(1000 + inst);
    std::uniform_int_distribution<std::size_t> small(1, 4), wide(2, 6);
    const std::size_t n = small(rng), m = wide(rng), p = wide(rng);
    const DTensor x = random_tensor(rng, {n, m});
    const DTensor c = random_tensor(rng, {n, m}), rw = random_tensor(rng, {n, m});
    const DTensor b = random_tensor(rng, {m, p}), a = random_tensor(rng, {p, n}), rp = random_tensor(rng, {n, p});
    const DTensor ra = random_tensor(rng, {p, m});
    const DTensor bias = random_tensor(rng, {m});
    const double k = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    std::vector<int> labels(n);
    for (auto& y : labels) y = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, m - 1)(rng));
    // ReLU inputs kept clear of the kink.
    DTensor xr = x;
    for (auto& v : xr.data()) v = v < 0 ? v - 0.05 : v + 0.05;

    fd_tape([&](Tape<double>& t, Var v) { return weighted(t, t.add(v, t.constant(c)), rw); }, x, s, "add");
    fd_tape([&](Tape<double>& t, Var v) { return weighted(t, t.sub(t.constant(c), v), rw); }, x, s, "sub");
    fd_tape([&](Tape<double>& t, Var v) { return weighted(t, t.mul(v, t.mul(v, t.constant(c))), rw); }, x, s, "mul");
    fd_tape([&](Tape<double>& t, Var v) { return weighted(t, t.scale(v, k), rw); }, x, s, "scale");
    fd_tape([&](Tape<double>& t, Var v) { return t.sum(t.mul(v, v)); }, x, s, "sum");
    fd_tape([&](Tape<double>& t, Var v) { return t.mean(t.mul(v, t.constant(c))); }, x, s, "mean");
    fd_tape([&](Tape<double>& t, Var v) { return weighted(t, t.matmul(v, t.constant(b)), rp); }, x, s, "matmul lhs");
    fd_tape([&](Tape<double>& t, Var v) { return weighted(t, t.matmul(t.constant(a), v), ra); }, x, s, "matmul rhs");
    fd_tape([&](Tape<double>& t, Var v) { return weighted(t, t.add_bias(v, t.constant(bias)), rw); }, x, s, "add_bias x");
    fd_tape([&](Tape<double>& t, Var v) { return weighted(t, t.add_bias(t.constant(c), v), rw); }, bias, s, "add_bias b");
    fd_tape([&](Tape<double>& t, Var v) { return weighted(t, t.relu(v), rw); }, xr, s, "relu");
    fd_tape([&](Tape<double>& t, Var v) { return t.softmax_cross_entropy(t.scale(v, 3.0), labels); }, x, s, "softmax_ce");

    // Composed MLP with random biases.
    MlpSpec spec{m, {wide(rng), small(rng) + 1}, p, 50 + inst};
    auto model = init_mlp<double>(spec);
    for (auto& l : model.layers())
      for (auto& v : l.bias.data()) v = std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
    std::vector<int> mlp_labels(n);
    for (auto& y : mlp_labels) y = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, p - 1)(rng));
    const DTensor in = random_tensor(rng, {n, m}, 0.0, 1.0);
    FdStats ms;
    fd_mlp_input(model, in, mlp_labels, ms);
    fd_mlp_params(model, in, mlp_labels, ms);
    mlp_checked += ms.checked;
    mlp_skipped += ms.skipped;
    if (ms.max_rel > s.max_rel) {
      s.max_rel = ms.max_rel;
      s.worst = ms.worst;
    }
  }
  const bool pass = s.max_rel < kFdTolerance && mlp_skipped * 10 < mlp_checked;
  return {pass, "100 instances, " + std::to_string(s.checked + mlp_checked) + " coordinates (" +
                    std::to_string(mlp_skipped) + " MLP coordinates at ReLU kinks skipped), max rel err " +
                    fmt(s.max_rel, 3) + (s.worst.empty() ? "" : " (" + s.worst + ")")};
}

// ---- toy benchmark experiment -------------------------------------------------

struct Experiment {
  ExperimentConfig cfg;
  Benchmark bench;
  std::vector<BaselineRun> bases;
  RunReport rep;
  double seconds = 0.0;
};

const Experiment& experiment() {
  static const Experiment e = [] {
    const auto t0 = Clock::now();
    ExperimentConfig cfg;
    cfg.validate();
    Experiment x{cfg, load_benchmark(cfg.data), {}, {}, 0.0};
    ExperimentConfig quiet = x.cfg;
    quiet.robust.enabled = false;
    for (auto seed : x.cfg.seeds) {
      x.bases.push_back(run_baseline(x.cfg, x.bench, seed, &x.rep.log));
      const auto& base = x.bases.back();
      add_baseline_rows(x.cfg, x.bench, base, x.rep);
      run_adcorda_seed(x.cfg, x.bench, base, x.rep, AttackKind::DDN, false);
      run_adcorda_seed(quiet, x.bench, base, x.rep, AttackKind::VBI, false);
      run_adcorda_seed(quiet, x.bench, base, x.rep, std::nullopt, false);
      run_adcorda_seed(quiet, x.bench, base, x.rep, AttackKind::DDN, true);
    }
    x.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return x;
  }();
  return e;
}

std::vector<double> deltas(const RunReport& rep, const std::string& approach, const std::string& attack) {
  std::vector<double> out;
  for (const auto& r : rep.rows)
    if (r.approach == approach && r.attack == attack && r.delta_acc) out.push_back(*r.delta_acc);
  return out;
}

// ---- attacks --------------------------------------------------------------------

int argmax_lowest(std::span<const float> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return static_cast<int>(best);
}

Verdict attack_contracts() {
  const auto& e = experiment();
  const Model& model = e.bases.front().trained.model;
  const auto& pool = e.bench.pool;
  auto wrong = partition_by_correctness(model, pool).wrong;
  if (wrong.size() < kAttackSamples) {
    return {false, "only " + std::to_string(wrong.size()) + " misclassified samples available"};
  }
  wrong.indices.resize(kAttackSamples);

  std::vector<std::string> problems;
  std::size_t checked = 0;
  std::map<AttackKind, std::vector<CorrectionResult>> by_kind;
  for (auto kind : kAllAttackKinds) {
    const auto cfg = e.cfg.attack_for(kind, 1);
    const auto out = correct_set(model, pool, wrong, kind, cfg, true, e.cfg.threads);
    std::size_t bad_range = 0, bad_ball = 0, bad_norm = 0, bad_flag = 0;
    std::vector<std::size_t> rows(out.results.size());
    Tensor batch(Shape{out.results.size(), pool.dim()});
    for (std::size_t r = 0; r < out.results.size(); ++r) {
      const auto& res = out.results[r];
      const auto x0 = pool.input(res.index);
      double l2 = 0.0;
      float linf = 0.0f;
      for (std::size_t i = 0; i < x0.size(); ++i) {
        const float v = res.perturbed[i];
        batch[r * pool.dim() + i] = v;
        if (!(v >= 0.0f && v <= 1.0f)) ++bad_range;
        const double dv = static_cast<double>(v) - x0[i];
        l2 += dv * dv;
        linf = std::max(linf, std::abs(v - x0[i]));
        if (is_sign_attack(kind)) {
          if (v < std::max(0.0f, x0[i] - cfg.epsilon) || v > std::min(1.0f, x0[i] + cfg.epsilon)) ++bad_ball;
        } else if (kind == AttackKind::SP) {
          if (v != x0[i] && v != 0.0f && v != 1.0f) ++bad_ball;
        }
      }
      if (kind == AttackKind::DDN && std::abs(std::sqrt(l2) - res.l2) > 1e-5 * std::max(1.0, std::sqrt(l2))) ++bad_norm;
      if (linf != res.linf) ++bad_norm;
    }
    // Success flags against a separate batched forward pass.
    const Tensor logits = model.batch_logits(batch);
    for (std::size_t r = 0; r < out.results.size(); ++r) {
      const auto& res = out.results[r];
      const int pred = argmax_lowest(logits.row(r));
      if (res.success != (pred == pool.label(res.index)) || res.final_prediction != pred) ++bad_flag;
    }
    checked += out.results.size();
    const std::string k = to_string(kind);
    if (out.results.size() != kAttackSamples) problems.push_back(k + ": " + std::to_string(out.results.size()) + " results");
    if (bad_range) problems.push_back(k + ": " + std::to_string(bad_range) + " values outside [0,1]");
    if (bad_ball) problems.push_back(k + ": " + std::to_string(bad_ball) + " values outside the perturbation set");
    if (bad_norm) problems.push_back(k + ": " + std::to_string(bad_norm) + " misreported norms");
    if (bad_flag) problems.push_back(k + ": " + std::to_string(bad_flag) + " success flags disagree");
    by_kind[kind] = out.results;
  }

  // VBI1 against VBI with max_iter = 1.
  auto one = e.cfg.attack_for(AttackKind::VBI, 1);
  one.max_iter = 1;
  const auto vbi_one = correct_set(model, pool, wrong, AttackKind::VBI, one, true, e.cfg.threads).results;
  const auto& vbi1 = by_kind[AttackKind::VBI1];
  std::size_t differ = 0;
  for (std::size_t r = 0; r < vbi1.size(); ++r) {
    const auto& a = vbi1[r];
    const auto& b = vbi_one[r];
    if (a.perturbed.size() != b.perturbed.size() ||
        std::memcmp(a.perturbed.data(), b.perturbed.data(), a.perturbed.size() * sizeof(float)) != 0 ||
        a.success != b.success || a.iterations != b.iterations || a.final_prediction != b.final_prediction) {
      ++differ;
    }
  }
  if (differ) problems.push_back("VBI1 differs from VBI(max_iter=1) on " + std::to_string(differ) + " samples");

  std::string detail = std::to_string(kAttackSamples) + " misclassified samples x " +
                       std::to_string(std::size(kAllAttackKinds)) + " kinds (" + std::to_string(checked) +
                       " results); VBI1 == VBI(max_iter=1) bitwise on " + std::to_string(vbi1.size() - differ) + "/" +
                       std::to_string(vbi1.size());
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

// Two inputs, two classes: logit0 = 0, logit1 = x0 - x1.
Model diagonal_model() {
  Model m(MlpSpec{2, {}, 2, 1});
  m.layers()[0].weight = Tensor(Shape{2, 2}, {0, 1, 0, -1});
  return m;
}

Verdict analytic_oracles() {
  const auto m = diagonal_model();
  const std::vector<float> x0{0.2f, 0.6f};
  // VBI steps (x0, x1) by (+0.1, -0.1): margins -0.4, -0.2, 0 (tie goes to class 0), +0.2.
  auto cfg = AttackConfig::defaults(AttackKind::VBI, 0.5f);
  cfg.alpha = 0.1f;
  const auto v = iterative_sign_attack(m, x0, 1, AttackKind::VBI, cfg);
  const bool vbi_ok = v.success && v.iterations == 3 && std::abs(v.perturbed[0] - 0.5f) <= 1e-6f &&
                      std::abs(v.perturbed[1] - 0.3f) <= 1e-6f;
  const auto d = ddn_attack(m, x0, 1, AttackConfig::defaults(AttackKind::DDN));
  const double target = 0.4 / std::sqrt(2.0);
  const double rel = std::abs(d.l2 - target) / target;
  const bool ddn_ok = d.success && rel <= 0.15;
  return {vbi_ok && ddn_ok, "VBI success=" + std::to_string(v.success) + " in " + std::to_string(v.iterations) +
                                " steps at (" + fmt(v.perturbed[0]) + ", " + fmt(v.perturbed[1]) +
                                ") vs (0.5, 0.3) in 3; DDN norm " + fmt(d.l2) + " vs " + fmt(target) + " (" +
                                fmt(100 * rel, 3) + "% off, limit 15%)"};
}

// ---- CORAL ----------------------------------------------------------------------

Verdict coral_correctness() {
  std::mt19937_64 rng(77);
  double self_max = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto f = random_tensor(rng, {5 + static_cast<std::size_t>(i % 4), 3});
    self_max = std::max(self_max, coral_loss(f, f));
    Tensor ff(f.shape());
    for (std::size_t j = 0; j < f.size(); ++j) ff[j] = static_cast<float>(f[j]);
    self_max = std::max(self_max, static_cast<double>(coral_loss(ff, ff)));
  }
  const Tensor fs(Shape{2, 2}, {1, 0, 0, 1}), ft(Shape{2, 2}, {1, 0, 1, 0});
  const float hand = coral_loss(fs, ft);
  FdStats s;
  for (int i = 0; i < 20; ++i) {
    const auto a = random_tensor(rng, {6, 4}), b = random_tensor(rng, {5, 4});
    fd_tape([&](Tape<double>& t, Var x) { return coral_loss(t, x, t.constant(b)); }, a, s, "coral source");
    fd_tape([&](Tape<double>& t, Var x) { return coral_loss(t, t.constant(a), x); }, b, s, "coral target");
  }
  const bool pass = self_max == 0.0 && std::abs(hand - 0.0625f) <= 1e-6f && s.max_rel < kFdTolerance;
  return {pass, "coral(F,F) max " + fmt(self_max) + "; hand case " + fmt(hand, 9) + " vs 0.0625; FD " +
                    std::to_string(s.checked) + " coordinates, max rel err " + fmt(s.max_rel, 3)};
}

// ---- T' accuracy ----------------------------------------------------------------

Verdict tprime_accuracy() {
  const auto& e = experiment();
  std::size_t runs = 0, perfect = 0;
  std::string failures;
  for (const auto& base : e.bases) {
    const auto& model = base.trained.model;
    const auto part = partition_by_correctness(model, base.split.train);
    for (auto kind : kAllAttackKinds) {
      const auto out = correct_set(model, base.split.train, part.wrong, kind, e.cfg.attack_for(kind, base.seed), false,
                                   e.cfg.threads);
      const auto tprime = merge_corrected(base.split.train, part.correct, out.corrected);
      const double acc = evaluate(model, tprime).accuracy;
      ++runs;
      if (acc == 1.0) ++perfect;
      else failures += " " + to_string(kind) + "/seed" + std::to_string(base.seed) + "=" + fmt(acc, 6);
    }
  }
  return {perfect == runs, std::to_string(perfect) + "/" + std::to_string(runs) +
                               " (attack, seed) pairs with accuracy 1 on T'" + (failures.empty() ? "" : ";" + failures)};
}

// ---- quantization ---------------------------------------------------------------

double max_logit_error(const QuantizedModel& q, const Model& fp, const LabeledDataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const Tensor x = ds.batch(idx);
  const Tensor a = q.batch_logits(x), b = fp.batch_logits(x);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

Verdict quantization_algebra() {
  const auto& e = experiment();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(-3.0f, 3.0f);
  std::size_t roundtrip_bad = 0, endpoint_bad = 0, values = 0;
  std::vector<QuantParams> params;
  for (int bits : {8, 12, 16}) {
    const auto bw = signed_range(bits);
    for (int i = 0; i < 50; ++i) {
      float lo = u(rng), hi = u(rng);
      if (lo > hi) std::swap(lo, hi);
      params.push_back(params_for_range(lo, hi, bw));
    }
    for (const auto& [name, t] : e.bases.front().trained.model.named_parameters()) {
      const auto [lo, hi] = std::minmax_element(t->data().begin(), t->data().end());
      params.push_back(params_for_range(*lo, *hi, bw));
    }
  }
  for (const auto& p : params) {
    if (std::abs(quantize(p.min, p) - p.qmin) > 1 || std::abs(quantize(p.max, p) - p.qmax) > 1) ++endpoint_bad;
    std::uniform_real_distribution<float> in(p.min, p.max);
    for (int i = 0; i < 200; ++i) {
      const float v = i == 0 ? p.min : i == 1 ? p.max : in(rng);
      ++values;
      // The dequantized value is a float, so the bound holds to one ulp of v.
      const double ulp = std::nextafter(std::abs(v), 4.0f) - std::abs(v);
      if (std::abs(static_cast<double>(dequantize(quantize(v, p), p)) - v) > 0.5 * p.scale + ulp) ++roundtrip_bad;
    }
  }

  // Precision sweep on calibrated inputs, and the int8 accuracy drop per seed.
  bool monotone = true;
  std::string sweep;
  double worst_drop = -1.0;
  for (const auto& base : e.bases) {
    const auto& model = base.trained.model;
    const auto& calib = base.split.train;
    double prev = std::numeric_limits<double>::infinity();
    for (int bits : {8, 12, 16}) {
      const double err = max_logit_error(quantize_model(model, calib, signed_range(bits)), model, calib);
      monotone = monotone && err <= prev;
      prev = err;
      if (base.seed == e.bases.front().seed) sweep += (sweep.empty() ? "" : " > ") + fmt(err, 3);
    }
    const double i8 = evaluate(quantize_model(model, calib, signed_range(8)), e.bench.test).accuracy;
    worst_drop = std::max(worst_drop, base.acc_test - i8);
  }
  const bool pass = roundtrip_bad == 0 && endpoint_bad == 0 && monotone && worst_drop <= kInt8MaxDrop;
  return {pass, "round trip <= s/2 (+1 ulp) on " + std::to_string(values - roundtrip_bad) + "/" + std::to_string(values) +
                    " values; endpoints within 1 on " + std::to_string(params.size() - endpoint_bad) + "/" +
                    std::to_string(params.size()) + " ranges; max logit error 8/12/16 bits " + sweep +
                    (monotone ? " (monotone)" : " (NOT monotone)") + "; worst int8 drop " + pts(worst_drop) +
                    " points (limit 2)"};
}

// ---- directional criteria -------------------------------------------------------

Verdict directional_gain() {
  const auto& e = experiment();
  bool pass = true;
  std::string detail;
  for (const char* attack : {"DDN", "VBI", "None"}) {
    const auto d = deltas(e.rep, "BL-IST", attack);
    const double mean = mean_std(d).first;
    pass = pass && d.size() == e.cfg.seeds.size() && mean > kDeltaThreshold;
    detail += std::string(detail.empty() ? "" : "; ") + attack + " mean delta " + pts(mean);
  }
  return {pass, detail + " points over seeds 1,2,5 (must be > " + fmt(kDeltaThreshold) + "); experiment took " +
                    fmt(e.seconds, 3) + " s"};
}

Verdict keep_all_ordering() {
  const auto& e = experiment();
  const double strict = mean_std(deltas(e.rep, "BL-IST", "DDN")).first;
  const double all = mean_std(deltas(e.rep, "BL-IST-A", "DDN")).first;
  return {all <= strict + kKeepAllTolerance,
          "DDN keep-all mean delta " + pts(all) + " vs success-only " + pts(strict) + " points (tolerance 0.5)"};
}

Verdict robustness_direction(double& robust_seconds) {
  const auto& e = experiment();
  std::vector<double> base, refined;
  for (const auto& r : e.rep.robust) {
    if (r.approach == "BL") base.push_back(r.robust_acc);
    else if (r.approach == "BL-IST" && r.attack == "DDN") refined.push_back(r.robust_acc);
  }
  robust_seconds = 0.0;
  for (const auto& line : e.rep.log) {
    if (!line.starts_with("event=robust")) continue;
    const auto pos = line.find("seconds=");
    if (pos != std::string::npos) robust_seconds += std::stod(line.substr(pos + 8));
  }
  const double mb = mean_std(base).first, mr = mean_std(refined).first;
  const bool pass = base.size() == e.cfg.seeds.size() && refined.size() == e.cfg.seeds.size() && mr >= mb &&
                    robust_seconds < 600.0;
  return {pass, "robust accuracy at eps " + fmt(e.cfg.robust.epsilon) + " under " + ensemble_name(e.cfg.robust.ensemble) +
                    ": refined " + fmt(mr) + " vs baseline " + fmt(mb) + " (seed mean); evaluation took " +
                    fmt(robust_seconds, 3) + " s"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const ExperimentConfig cfg;
  const auto dir = fs::temp_directory_path() / "adcorda_acceptance";
  fs::remove_all(dir);
  emit_report(run_adcorda(cfg), dir / "a");
  emit_report(run_adcorda(cfg), dir / "b");
  bool same = true;
  std::string detail;
  for (const char* f : {"report.csv", "robustness.csv"}) {
    const auto a = slurp(dir / "a" / f), b = slurp(dir / "b" / f);
    const bool eq = !a.empty() && a == b;
    same = same && eq;
    detail += std::string(detail.empty() ? "" : ", ") + f + (eq ? " identical (" : " DIFFERS (") +
              std::to_string(a.size()) + " bytes)";
  }
  fs::remove_all(dir);
  return {same, "two full runs: " + detail};
}

}  // namespace

int main() {
  std::cout << "acceptance: toy benchmark K=10, d=64, 500/class, seeds 1,2,5" << std::endl;
  criterion(1, "gradient integrity", 60, gradient_integrity);
  // The shared experiment runs on first use; keep its cost out of criterion 2's budget.
  experiment();
  criterion(2, "attack contracts", 300, attack_contracts);
  criterion(3, "analytic attack oracles", 10, analytic_oracles);
  criterion(4, "CORAL correctness", 10, coral_correctness);
  criterion(5, "accuracy on T' is 100%", 0, tprime_accuracy);
  criterion(6, "quantization algebra", 60, quantization_algebra);
  criterion(7, "directional gain", 0, [] {
    auto v = directional_gain();
    if (experiment().seconds >= 900.0) {
      v.pass = false;
      v.detail += "; over the 900 s budget";
    }
    return v;
  });
  criterion(8, "keep-all ordering", 0, keep_all_ordering);
  double robust_seconds = 0.0;
  criterion(9, "robustness direction", 0, [&] { return robustness_direction(robust_seconds); });
  criterion(10, "determinism", 0, determinism);
  std::cout << (g_failures == 0 ? "all criteria passed" : std::to_string(g_failures) + " criteria failed") << std::endl;
  return g_failures == 0 ? 0 : 1;
}
