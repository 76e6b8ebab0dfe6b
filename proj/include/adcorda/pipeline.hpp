#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "adcorda/attacks.hpp"
#include "adcorda/config.hpp"
#include "adcorda/coral.hpp"
#include "adcorda/dataset.hpp"
#include "adcorda/dataset_io.hpp"
#include "adcorda/mlp.hpp"
#include "adcorda/quantization.hpp"
#include "adcorda/text.hpp"
#include "adcorda/train.hpp"

namespace adcorda {

// ---- report records ---------------------------------------------------------

inline constexpr const char* kReportHeader =
    "model,approach,attack,seed,corr_success,corr_total,acc_Tprime,acc_train,acc_valid,acc_test,delta_acc";
inline constexpr const char* kRobustHeader = "model,approach,attack,seed,epsilon,ensemble,clean_acc,robust_acc";

/// One row per (model, approach, seed). delta_acc is acc_test minus the
/// acc_test of the "BL" row with the same model and seed; it is empty on
/// baseline rows. corr_* and acc_Tprime are empty where no correction ran.
struct ReportRow {
  std::string model;
  std::string approach;
  std::string attack;
  std::uint64_t seed = 0;
  std::optional<std::size_t> corr_success;
  std::optional<std::size_t> corr_total;
  std::optional<double> acc_tprime;
  double acc_train = 0.0;
  double acc_valid = 0.0;
  double acc_test = 0.0;
  std::optional<double> delta_acc;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct RobustRow {
  std::string model;
  std::string approach;
  std::string attack;
  std::uint64_t seed = 0;
  float epsilon = 0.0f;
  std::string ensemble;
  double clean_acc = 0.0;
  double robust_acc = 0.0;

  friend bool operator==(const RobustRow&, const RobustRow&) = default;
};

struct RunReport {
  std::vector<ReportRow> rows;
  std::vector<RobustRow> robust;
  std::vector<std::string> log;  // key=value records
  std::vector<std::pair<std::string, Model>> models;  // e.g. baseline_seed1
};

// Mean and population standard deviation.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

// ---- logging ------------------------------------------------------------------

/// Builds one `event=<name> key=value ...` record.
class LogRecord {
 public:
  explicit LogRecord(std::string event) { line_ = "event=" + std::move(event); }

  template <typename T>
  LogRecord& kv(const std::string& key, const T& value) {
    line_ += ' ' + key + '=';
    if constexpr (std::is_same_v<T, bool>) {
      line_ += value ? "true" : "false";
    } else if constexpr (std::is_arithmetic_v<T>) {
      line_ += text::to_text(value);
    } else {
      line_ += quoted(std::string(value));
    }
    return *this;
  }

  const std::string& str() const noexcept { return line_; }

 private:
  static std::string quoted(const std::string& s) {
    if (!s.empty() && s.find_first_of(" \"=") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    return out + '"';
  }

  std::string line_;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---- data ---------------------------------------------------------------------

struct Benchmark {
  LabeledDataset pool;  // split into train / valid per seed
  LabeledDataset test;
};

inline Benchmark load_benchmark(const DataConfig& data) {
  if (data.source == "file") {
    auto pool = load_dataset(data.train_path);
    auto test = load_dataset(data.test_path, pool.num_classes());
    if (test.dim() != pool.dim()) throw InputError("test set dimension differs from the training set");
    return {std::move(pool), std::move(test)};
  }
  SyntheticSpec test_spec = data.synthetic;
  test_spec.per_class = data.test_per_class;
  test_spec.seed = data.test_seed;
  return {generate_synthetic(data.synthetic), generate_synthetic(test_spec)};
}

// ---- robustness -------------------------------------------------------------------

struct RobustResult {
  std::size_t total = 0;
  std::size_t clean_correct = 0;
  std::size_t robust = 0;

  double clean_accuracy() const { return total ? static_cast<double>(clean_correct) / static_cast<double>(total) : 0.0; }
  double robust_accuracy() const { return total ? static_cast<double>(robust) / static_cast<double>(total) : 0.0; }
};

/// Untargeted sequential ensemble: a sample is robust when it is classified
/// correctly and no attack in `ensemble` flips its prediction within the
/// L-inf ball of radius epsilon. Sign attacks use alpha = epsilon / 4 and
/// their default iteration count; salt and pepper values are pulled into
/// the same ball. Sample i seeds its RNG with (seed, i).
template <DifferentiableClassifier C>
RobustResult robustness_eval(const C& model, const LabeledDataset& test, float epsilon,
                             const std::vector<AttackKind>& ensemble, std::uint64_t seed = 1, std::size_t threads = 0) {
  check_compatible(model.input_dim(), model.num_classes(), test);
  if (test.empty()) throw InputError("robustness evaluation needs a non-empty test set");
  const auto preds = predict_all(model, test);
  std::vector<char> robust(test.size(), 0);
  parallel_for(test.size(), threads, [&](std::size_t i) {
    if (preds[i] != test.label(i)) return;
    for (auto kind : ensemble) {
      AttackConfig cfg = AttackConfig::defaults(kind, epsilon);
      if (kind == AttackKind::DDN) cfg.ddn_init_norm = std::max(epsilon, 1e-6f);
      if (kind == AttackKind::SP) cfg.sp_linf_bound = epsilon;
      if (is_sign_attack(kind) && epsilon == 0.0f) cfg.alpha = 1e-6f;
      cfg.seed = seed;
      cfg.goal = AttackGoal::kEvade;
      const auto r = run_attack(model, test.input(i), test.label(i), kind, cfg, i);
      if (r.success) return;
    }
    robust[i] = 1;
  });
  RobustResult out;
  out.total = test.size();
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (preds[i] == test.label(i)) ++out.clean_correct;
    if (robust[i]) ++out.robust;
  }
  return out;
}

inline std::string ensemble_name(const std::vector<AttackKind>& e) {
  std::string s;
  for (std::size_t i = 0; i < e.size(); ++i) s += (i ? "+" : "") + to_string(e[i]);
  return s;
}

// ---- stages -----------------------------------------------------------------------

struct BaselineRun {
  std::uint64_t seed = 0;
  TrainValidSplit split;
  TrainResult trained;
  double acc_train = 0.0;
  double acc_valid = 0.0;
  double acc_test = 0.0;
};

/// Baseline: split the pool with `seed`, initialise with `seed` and train.
inline BaselineRun run_baseline(const ExperimentConfig& cfg, const Benchmark& bench, std::uint64_t seed,
                                std::vector<std::string>* log = nullptr) {
  Stopwatch sw;
  auto split = split_train_valid(bench.pool, cfg.data.valid_fraction, seed);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  auto model = init_mlp(cfg.model_spec(bench.pool.dim(), bench.pool.num_classes(), seed));
  auto trained = train(std::move(model), split.train, split.valid, tc);
  BaselineRun run{seed, std::move(split), std::move(trained), 0.0, 0.0, 0.0};
  run.acc_train = evaluate(run.trained.model, run.split.train).accuracy;
  run.acc_valid = evaluate(run.trained.model, run.split.valid).accuracy;
  run.acc_test = evaluate(run.trained.model, bench.test).accuracy;
  if (log) {
    for (const auto& h : run.trained.history) {
      log->push_back(LogRecord("train_epoch").kv("seed", seed).kv("epoch", h.epoch).kv("train_loss", h.train_loss)
                         .kv("train_acc", h.train_accuracy).kv("valid_acc", h.valid_accuracy).str());
    }
    log->push_back(LogRecord("baseline").kv("seed", seed).kv("model", run.trained.model.spec().name())
                       .kv("epochs", tc.epochs).kv("best_epoch", run.trained.best_epoch).kv("acc_train", run.acc_train)
                       .kv("acc_valid", run.acc_valid).kv("acc_test", run.acc_test).kv("seconds", sw.seconds()).str());
  }
  return run;
}

struct RefineOutcome {
  Model refined;
  LabeledDataset tprime;
  CorrectnessPartition partition;
  std::optional<CorrectionOutcome> correction;
  double acc_tprime = 0.0;  // classifier that partitioned, evaluated on T'
  AdaptResult adapted;
};

namespace detail {

inline void log_correction(std::vector<std::string>* log, std::uint64_t seed, const CorrectionOutcome& out) {
  if (!log) return;
  for (const auto& r : out.results) {
    log->push_back(LogRecord("correction").kv("seed", seed).kv("index", r.index).kv("label", r.label)
                       .kv("initial", r.initial_prediction).kv("final", r.final_prediction).kv("success", r.success)
                       .kv("iterations", r.iterations).kv("linf", r.linf).kv("l2", r.l2)
                       .kv("margin_before", r.margin_before).kv("margin_after", r.margin_after).str());
  }
}

inline void log_adapt(std::vector<std::string>* log, std::uint64_t seed, const AdaptResult& a) {
  if (!log) return;
  for (const auto& h : a.history) {
    log->push_back(LogRecord("adapt_epoch").kv("seed", seed).kv("epoch", h.epoch).kv("class_loss", h.class_loss)
                       .kv("coral_loss", h.coral_loss).kv("weighted_coral", h.coral_loss * a.lambda)
                       .kv("max_coral", h.max_coral_loss).kv("valid_acc", h.valid_accuracy).str());
  }
}

}  // namespace detail

/// Refinement against `judge`, the classifier whose predictions define T_c /
/// T_w and attack success (the baseline itself, or its quantized form):
/// partition, correct, merge, shuffle, then adapt the full-precision
/// baseline from T' (source) to T (target).
template <DifferentiableClassifier C>
RefineOutcome refine(const ExperimentConfig& cfg, const BaselineRun& base, const C& judge,
                     const std::optional<AttackKind>& attack, bool keep_all, std::vector<std::string>* log) {
  const auto seed = base.seed;
  const auto& train_set = base.split.train;
  Stopwatch sw;
  auto part = partition_by_correctness(judge, train_set);
  if (log) {
    log->push_back(LogRecord("partition").kv("seed", seed).kv("correct", part.correct.size())
                       .kv("wrong", part.wrong.size()).str());
  }
  std::optional<CorrectionOutcome> correction;
  std::optional<LabeledDataset> tprime;
  if (!attack) {
    tprime = train_set.subset(part.correct.indices);
  } else if (part.wrong.empty()) {
    if (log) log->push_back(LogRecord("skip_correction").kv("seed", seed).kv("reason", "empty_wrong_set").str());
    tprime = train_set;
  } else {
    correction = correct_set(judge, train_set, part.wrong, *attack, cfg.attack_for(*attack, seed), keep_all, cfg.threads);
    detail::log_correction(log, seed, *correction);
    tprime = merge_corrected(train_set, part.correct, correction->corrected);
  }
  const double acc_tprime = evaluate(judge, *tprime).accuracy;
  if (log) {
    log->push_back(LogRecord("merge").kv("seed", seed).kv("tprime", tprime->size())
                       .kv("corrected", tprime->count(Provenance::kCorrected)).kv("acc_tprime", acc_tprime)
                       .kv("seconds", sw.seconds()).str());
  }
  Stopwatch asw;
  const auto source = shuffle_deterministic(*tprime, seed);
  CoralConfig cc = cfg.coral;
  cc.seed = seed;
  auto adapted = adapt(base.trained.model, source, train_set, base.split.valid, cc);
  detail::log_adapt(log, seed, adapted);
  if (log) {
    log->push_back(LogRecord("adapt").kv("seed", seed).kv("lambda", adapted.lambda).kv("best_epoch", adapted.best_epoch)
                       .kv("best_valid_acc", adapted.best_valid_accuracy).kv("seconds", asw.seconds()).str());
  }
  Model refined = adapted.model;
  return RefineOutcome{std::move(refined), std::move(*tprime), std::move(part), std::move(correction), acc_tprime,
                       std::move(adapted)};
}

namespace detail {

template <BatchClassifier C>
ReportRow make_row(const std::string& model, const std::string& approach, const std::string& attack, std::uint64_t seed,
                   const C& clf, const BaselineRun& base, const Benchmark& bench) {
  ReportRow row;
  row.model = model;
  row.approach = approach;
  row.attack = attack;
  row.seed = seed;
  row.acc_train = evaluate(clf, base.split.train).accuracy;
  row.acc_valid = evaluate(clf, base.split.valid).accuracy;
  row.acc_test = evaluate(clf, bench.test).accuracy;
  return row;
}

inline void fill_correction(ReportRow& row, const RefineOutcome& o) {
  row.acc_tprime = o.acc_tprime;
  if (o.correction) {
    row.corr_success = o.correction->successes;
    row.corr_total = o.correction->total;
  } else {
    row.corr_success = 0;
    row.corr_total = 0;
  }
}

template <DifferentiableClassifier C>
void add_robust(RunReport& rep, const ExperimentConfig& cfg, const C& clf, const std::string& model,
                const std::string& approach, const std::string& attack, std::uint64_t seed, const Benchmark& bench) {
  if (!cfg.robust.enabled) return;
  Stopwatch sw;
  const auto r = robustness_eval(clf, bench.test, cfg.robust.epsilon, cfg.robust.ensemble, seed, cfg.threads);
  rep.robust.push_back(RobustRow{model, approach, attack, seed, cfg.robust.epsilon, ensemble_name(cfg.robust.ensemble),
                                 r.clean_accuracy(), r.robust_accuracy()});
  rep.log.push_back(LogRecord("robust").kv("seed", seed).kv("model", model).kv("approach", approach)
                        .kv("clean_acc", r.clean_accuracy()).kv("robust_acc", r.robust_accuracy())
                        .kv("seconds", sw.seconds()).str());
}

inline void config_echo(RunReport& rep, const ExperimentConfig& cfg) {
  for (const auto& [k, v] : config_entries(cfg)) rep.log.push_back(LogRecord("config").kv("key", k).kv("value", v).str());
}

inline std::string approach_name(bool keep_all) { return keep_all ? "BL-IST-A" : "BL-IST"; }

}  // namespace detail

/// One seed of the full-precision pipeline on an existing baseline; appends
/// the refined row (and robustness rows) to `rep`.
inline void run_adcorda_seed(const ExperimentConfig& cfg, const Benchmark& bench, const BaselineRun& base, RunReport& rep,
                             const std::optional<AttackKind>& attack, bool keep_all) {
  const auto name = base.trained.model.spec().name();
  auto outcome = refine(cfg, base, base.trained.model, attack, keep_all, &rep.log);
  auto row = detail::make_row(name, detail::approach_name(keep_all), attack_name(attack), base.seed, outcome.refined, base, bench);
  detail::fill_correction(row, outcome);
  row.delta_acc = row.acc_test - base.acc_test;
  rep.rows.push_back(row);
  rep.log.push_back(LogRecord("refined").kv("seed", base.seed).kv("approach", row.approach).kv("attack", row.attack)
                        .kv("acc_train", row.acc_train).kv("acc_valid", row.acc_valid).kv("acc_test", row.acc_test)
                        .kv("delta_acc", *row.delta_acc).str());
  detail::add_robust(rep, cfg, outcome.refined, name, row.approach, row.attack, base.seed, bench);
  rep.models.emplace_back("refined_seed" + std::to_string(base.seed), std::move(outcome.refined));
}

inline void add_baseline_rows(const ExperimentConfig& cfg, const Benchmark& bench, const BaselineRun& base, RunReport& rep) {
  const auto name = base.trained.model.spec().name();
  ReportRow row{name, "BL", "-", base.seed, {}, {}, {}, base.acc_train, base.acc_valid, base.acc_test, {}};
  rep.rows.push_back(row);
  detail::add_robust(rep, cfg, base.trained.model, name, "BL", "-", base.seed, bench);
  rep.models.emplace_back("baseline_seed" + std::to_string(base.seed), base.trained.model);
}

/// Baseline plus refinement for every seed: a baseline row and a refined row per seed.
inline RunReport run_adcorda(const ExperimentConfig& cfg) {
  cfg.validate();
  RunReport rep;
  detail::config_echo(rep, cfg);
  const auto bench = load_benchmark(cfg.data);
  for (auto seed : cfg.seeds) {
    const auto base = run_baseline(cfg, bench, seed, &rep.log);
    add_baseline_rows(cfg, bench, base, rep);
    run_adcorda_seed(cfg, bench, base, rep, cfg.attack, cfg.keep_all_perturbed);
  }
  return rep;
}

/// Quantized workflow per seed: quantize the baseline, partition and judge
/// corrections with quantized predictions (attack gradients from the
/// full-precision companion), adapt the full-precision model, re-quantize.
/// Rows: FP baseline, quantized baseline, refined before quantization and
/// refined after quantization (model name suffixed with -int<bits>).
inline RunReport run_quantized_adcorda(const ExperimentConfig& cfg) {
  cfg.validate();
  RunReport rep;
  detail::config_echo(rep, cfg);
  const auto bench = load_benchmark(cfg.data);
  const auto bits = signed_range(cfg.quant_bits);
  const auto attack = attack_name(cfg.attack);
  for (auto seed : cfg.seeds) {
    const auto base = run_baseline(cfg, bench, seed, &rep.log);
    const auto name = base.trained.model.spec().name();
    const auto qname = name + "-int" + std::to_string(cfg.quant_bits);
    add_baseline_rows(cfg, bench, base, rep);

    const auto qbase = quantize_model(base.trained.model, base.split.train, bits);
    auto qrow = detail::make_row(qname, "BL", "-", seed, qbase, base, bench);
    rep.rows.push_back(qrow);
    detail::add_robust(rep, cfg, qbase, qname, "BL", "-", seed, bench);

    auto outcome = refine(cfg, base, qbase, cfg.attack, cfg.keep_all_perturbed, &rep.log);
    auto before = detail::make_row(name, "PTSQ-IST", attack, seed, outcome.refined, base, bench);
    detail::fill_correction(before, outcome);
    before.delta_acc = before.acc_test - base.acc_test;
    rep.rows.push_back(before);

    const auto qrefined = quantize_model(outcome.refined, base.split.train, bits);
    auto after = detail::make_row(qname, "PTSQ-IST", attack, seed, qrefined, base, bench);
    detail::fill_correction(after, outcome);
    after.delta_acc = after.acc_test - qrow.acc_test;
    rep.rows.push_back(after);
    rep.log.push_back(LogRecord("quantized").kv("seed", seed).kv("fp_baseline", base.acc_test)
                          .kv("q_baseline", qrow.acc_test).kv("fp_refined", before.acc_test)
                          .kv("q_refined", after.acc_test).str());
    detail::add_robust(rep, cfg, qrefined, qname, "PTSQ-IST", attack, seed, bench);
    rep.models.emplace_back("refined_seed" + std::to_string(seed), std::move(outcome.refined));
  }
  return rep;
}

// ---- emission ---------------------------------------------------------------------

namespace detail {

inline std::string cell(const std::optional<double>& v) { return v ? text::to_text(*v) : ""; }
inline std::string cell(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : ""; }

inline std::string agg_cell(const std::vector<std::optional<double>>& vals) {
  std::vector<double> xs;
  for (const auto& v : vals) {
    if (!v) return "";
    xs.push_back(*v);
  }
  const auto [m, s] = mean_std(xs);
  return text::to_text(m) + "±" + text::to_text(s);
}

}  // namespace detail

/// CSV text: one row per report row, then per (model, approach, attack)
/// group, in order of first appearance, an "agg" row of mean±std cells.
inline std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << kReportHeader << '\n';
  using detail::cell;
  for (const auto& r : rows) {
    os << r.model << ',' << r.approach << ',' << r.attack << ',' << r.seed << ',' << cell(r.corr_success) << ','
       << cell(r.corr_total) << ',' << cell(r.acc_tprime) << ',' << text::to_text(r.acc_train) << ','
       << text::to_text(r.acc_valid) << ',' << text::to_text(r.acc_test) << ',' << cell(r.delta_acc) << '\n';
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ReportRow*>> groups;
  for (const auto& r : rows) {
    const auto key = r.model + ',' + r.approach + ',' + r.attack;
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  for (const auto& key : order) {
    const auto& g = groups[key];
    auto col = [&](auto get) {
      std::vector<std::optional<double>> v;
      for (const auto* r : g) v.push_back(get(*r));
      return detail::agg_cell(v);
    };
    auto opt_size = [](const std::optional<std::size_t>& s) -> std::optional<double> {
      return s ? std::optional<double>(static_cast<double>(*s)) : std::nullopt;
    };
    os << key << ",agg," << col([&](const ReportRow& r) { return opt_size(r.corr_success); }) << ','
       << col([&](const ReportRow& r) { return opt_size(r.corr_total); }) << ','
       << col([](const ReportRow& r) { return r.acc_tprime; }) << ','
       << col([](const ReportRow& r) { return std::optional<double>(r.acc_train); }) << ','
       << col([](const ReportRow& r) { return std::optional<double>(r.acc_valid); }) << ','
       << col([](const ReportRow& r) { return std::optional<double>(r.acc_test); }) << ','
       << col([](const ReportRow& r) { return r.delta_acc; }) << '\n';
  }
  return os.str();
}

inline std::string robust_csv(const std::vector<RobustRow>& rows) {
  std::ostringstream os;
  os << kRobustHeader << '\n';
  for (const auto& r : rows) {
    os << r.model << ',' << r.approach << ',' << r.attack << ',' << r.seed << ',' << text::to_text(r.epsilon) << ','
       << r.ensemble << ',' << text::to_text(r.clean_acc) << ',' << text::to_text(r.robust_acc) << '\n';
  }
  return os.str();
}

struct ParsedReport {
  std::vector<ReportRow> rows;
  std::vector<std::vector<std::string>> agg;  // raw cells of the agg rows
};

/// Reads report CSV text produced by report_csv().
inline ParsedReport parse_report_csv(const std::string& content) {
  ParsedReport out;
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != kReportHeader) {
    throw FormatError(FormatError::Kind::kHeader, "report CSV must start with the report header");
  }
  std::size_t line_no = 1;
  auto fail = [&](const std::string& what) {
    throw FormatError(FormatError::Kind::kHeader, "report line " + std::to_string(line_no) + ": " + what);
  };
  auto num = [&](std::string_view s) {
    const auto v = text::parse_number<double>(s);
    if (!v) fail("bad number '" + std::string(s) + "'");
    return *v;
  };
  auto opt_num = [&](std::string_view s) { return s.empty() ? std::optional<double>() : std::optional<double>(num(s)); };
  auto opt_count = [&](std::string_view s) -> std::optional<std::size_t> {
    if (s.empty()) return std::nullopt;
    const auto v = text::parse_number<std::size_t>(s);
    if (!v) fail("bad count '" + std::string(s) + "'");
    return *v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = text::trim(line);
    if (t.empty()) continue;
    const auto c = text::split(t, ',');
    if (c.size() != 11) fail("expected 11 fields");
    if (c[3] == "agg") {
      out.agg.emplace_back(c.begin(), c.end());
      continue;
    }
    ReportRow r;
    r.model = std::string(c[0]);
    r.approach = std::string(c[1]);
    r.attack = std::string(c[2]);
    const auto seed = text::parse_number<std::uint64_t>(c[3]);
    if (!seed) fail("bad seed");
    r.seed = *seed;
    r.corr_success = opt_count(c[4]);
    r.corr_total = opt_count(c[5]);
    r.acc_tprime = opt_num(c[6]);
    r.acc_train = num(c[7]);
    r.acc_valid = num(c[8]);
    r.acc_test = num(c[9]);
    r.delta_acc = opt_num(c[10]);
    out.rows.push_back(std::move(r));
  }
  return out;
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw FormatError(FormatError::Kind::kIo, "write to '" + path.string() + "' failed");
}

}  // namespace detail

/// Writes report.csv, robustness.csv (when present) and run.log into `dir`.
inline void emit_report(const RunReport& rep, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FormatError(FormatError::Kind::kIo, "cannot create '" + dir.string() + "': " + ec.message());
  detail::write_text(dir / "report.csv", report_csv(rep.rows));
  if (!rep.robust.empty()) detail::write_text(dir / "robustness.csv", robust_csv(rep.robust));
  std::string log;
  for (const auto& l : rep.log) log += l + '\n';
  detail::write_text(dir / "run.log", log);
}

}  // namespace adcorda
