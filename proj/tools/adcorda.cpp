// adcorda command line: train, correct, adapt, quantize, robust-eval,
// pipeline and report subcommands over one experiment config.

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "adcorda/adcorda.hpp"

namespace fs = std::filesystem;
using namespace adcorda;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

ExperimentConfig load(const Globals& g) {
  ExperimentConfig cfg = g.config_path.empty() ? ExperimentConfig{} : load_config(g.config_path);
  if (g.seed) cfg.seeds = {*g.seed};
  cfg.validate();
  return cfg;
}

void apply_attack_flag(ExperimentConfig& cfg, const std::string& attack) {
  if (attack.empty()) return;
  set_config_value(cfg, "attack.kind", attack);
}

std::string seed_file(const std::string& stem, std::uint64_t seed, const std::string& ext) {
  return stem + "_seed" + std::to_string(seed) + ext;
}

void print_rows(const std::vector<ReportRow>& rows) {
  std::cout << std::left << std::setw(22) << "model" << std::setw(10) << "approach" << std::setw(7) << "attack"
            << std::setw(6) << "seed" << std::setw(12) << "corr" << std::right << std::setw(9) << "T'" << std::setw(9)
            << "train" << std::setw(9) << "valid" << std::setw(9) << "test" << std::setw(9) << "dacc" << '\n';
  auto pct = [](std::optional<double> v) {
    std::ostringstream os;
    if (v) os << std::fixed << std::setprecision(2) << 100.0 * *v;
    else os << "-";
    return os.str();
  };
  for (const auto& r : rows) {
    std::string corr = "-";
    if (r.corr_total && *r.corr_total > 0) corr = std::to_string(*r.corr_success) + "/" + std::to_string(*r.corr_total);
    std::cout << std::left << std::setw(22) << r.model << std::setw(10) << r.approach << std::setw(7) << r.attack
              << std::setw(6) << r.seed << std::setw(12) << corr << std::right << std::setw(9) << pct(r.acc_tprime)
              << std::setw(9) << pct(r.acc_train) << std::setw(9) << pct(r.acc_valid) << std::setw(9)
              << pct(r.acc_test) << std::setw(9) << pct(r.delta_acc) << '\n';
  }
}

void save_models(const RunReport& rep, const fs::path& dir) {
  for (const auto& [name, model] : rep.models) save_checkpoint(model, (dir / (name + ".adcd")).string());
}

// Baseline for one seed, either trained or loaded from a checkpoint.
BaselineRun baseline_for(const ExperimentConfig& cfg, const Benchmark& bench, std::uint64_t seed,
                         const std::string& model_path) {
  if (model_path.empty()) return run_baseline(cfg, bench, seed);
  auto ckpt = load_checkpoint(model_path);
  auto split = split_train_valid(bench.pool, cfg.data.valid_fraction, seed);
  BaselineRun run{seed, std::move(split), TrainResult{ckpt.model, {}, ckpt.meta.epochs_run, ckpt.meta.best_valid_accuracy}};
  run.acc_train = evaluate(run.trained.model, run.split.train).accuracy;
  run.acc_valid = evaluate(run.trained.model, run.split.valid).accuracy;
  run.acc_test = evaluate(run.trained.model, bench.test).accuracy;
  return run;
}

int cmd_train(const Globals& g) {
  const auto cfg = load(g);
  const auto bench = load_benchmark(cfg.data);
  fs::create_directories(g.out);
  RunReport rep;
  for (auto seed : cfg.seeds) {
    const auto base = run_baseline(cfg, bench, seed, &rep.log);
    rep.rows.push_back({base.trained.model.spec().name(), "BL", "-", seed, {}, {}, {}, base.acc_train, base.acc_valid,
                        base.acc_test, {}});
    save_checkpoint(base.trained.model, (fs::path(g.out) / seed_file("baseline", seed, ".adcd")).string(),
                    CheckpointMeta{cfg.train.epochs, static_cast<float>(base.trained.best_valid_accuracy)});
  }
  emit_report(rep, g.out);
  print_rows(rep.rows);
  return kExitOk;
}

int cmd_correct(const Globals& g, const std::string& model_path, const std::string& attack, bool keep_all) {
  auto cfg = load(g);
  apply_attack_flag(cfg, attack);
  if (!cfg.attack) throw ConfigError("correct needs an attack (--attack or attack.kind)");
  const auto bench = load_benchmark(cfg.data);
  fs::create_directories(g.out);
  RunReport rep;
  for (auto seed : cfg.seeds) {
    const auto base = baseline_for(cfg, bench, seed, model_path);
    const auto& model = base.trained.model;
    const auto part = partition_by_correctness(model, base.split.train);
    const auto out = correct_set(model, base.split.train, part.wrong, *cfg.attack, cfg.attack_for(*cfg.attack, seed),
                                 keep_all, cfg.threads);
    const auto tprime = merge_corrected(base.split.train, part.correct, out.corrected);
    save_dataset(tprime, (fs::path(g.out) / seed_file("tprime", seed, ".adds")).string());
    for (const auto& r : out.results) {
      rep.log.push_back(LogRecord("correction").kv("seed", seed).kv("index", r.index).kv("success", r.success)
                            .kv("iterations", r.iterations).kv("l2", r.l2).kv("margin_before", r.margin_before)
                            .kv("margin_after", r.margin_after).str());
    }
    std::cout << "seed " << seed << ": corrected " << out.successes << "/" << out.total << ", |T'| = " << tprime.size()
              << ", accuracy on T' = " << evaluate(model, tprime).accuracy << '\n';
  }
  emit_report(rep, g.out);
  return kExitOk;
}

int cmd_adapt(const Globals& g, const std::string& model_path, const std::string& source_path) {
  const auto cfg = load(g);
  const auto bench = load_benchmark(cfg.data);
  const auto seed = cfg.seeds.front();
  const auto base = baseline_for(cfg, bench, seed, model_path);
  const auto source = shuffle_deterministic(load_dataset(source_path, bench.pool.num_classes()), seed);
  CoralConfig cc = cfg.coral;
  cc.seed = seed;
  const auto adapted = adapt(base.trained.model, source, base.split.train, base.split.valid, cc);
  fs::create_directories(g.out);
  save_checkpoint(adapted.model, (fs::path(g.out) / seed_file("refined", seed, ".adcd")).string(),
                  CheckpointMeta{adapted.best_epoch, static_cast<float>(adapted.best_valid_accuracy)});
  const double test = evaluate(adapted.model, bench.test).accuracy;
  std::cout << "lambda " << adapted.lambda << ", best epoch " << adapted.best_epoch << ", test " << test
            << ", delta " << test - base.acc_test << '\n';
  return kExitOk;
}

int cmd_quantize(const Globals& g, const std::string& model_path, int bits) {
  auto cfg = load(g);
  if (bits) cfg.quant_bits = bits;
  cfg.validate();
  const auto bench = load_benchmark(cfg.data);
  const auto seed = cfg.seeds.front();
  const auto base = baseline_for(cfg, bench, seed, model_path);
  const auto q = quantize_model(base.trained.model, base.split.train, signed_range(cfg.quant_bits));
  fs::create_directories(g.out);
  save_quantized(q, (fs::path(g.out) / seed_file("quantized", seed, ".qnt")).string());
  std::cout << "fp32 test " << base.acc_test << ", int" << cfg.quant_bits << " test " << evaluate(q, bench.test).accuracy
            << '\n';
  return kExitOk;
}

int cmd_robust(const Globals& g, const std::string& model_path, std::optional<float> epsilon) {
  auto cfg = load(g);
  if (epsilon) cfg.robust.epsilon = *epsilon;
  cfg.validate();
  const auto bench = load_benchmark(cfg.data);
  RunReport rep;
  for (auto seed : cfg.seeds) {
    const auto base = baseline_for(cfg, bench, seed, model_path);
    const auto r = robustness_eval(base.trained.model, bench.test, cfg.robust.epsilon, cfg.robust.ensemble, seed, cfg.threads);
    rep.robust.push_back({base.trained.model.spec().name(), model_path.empty() ? "BL" : "model", "-", seed,
                          cfg.robust.epsilon, ensemble_name(cfg.robust.ensemble), r.clean_accuracy(), r.robust_accuracy()});
    std::cout << "seed " << seed << ": clean " << r.clean_accuracy() << ", robust " << r.robust_accuracy() << '\n';
  }
  emit_report(rep, g.out);
  return kExitOk;
}

int cmd_pipeline(const Globals& g, const std::string& attack, bool quantized, bool keep_all) {
  auto cfg = load(g);
  apply_attack_flag(cfg, attack);
  if (quantized) cfg.quantize = true;
  if (keep_all) cfg.keep_all_perturbed = true;
  cfg.validate();
  const auto rep = cfg.quantize ? run_quantized_adcorda(cfg) : run_adcorda(cfg);
  emit_report(rep, g.out);
  save_models(rep, g.out);
  print_rows(rep.rows);
  return kExitOk;
}

int cmd_report(const std::string& in_path) {
  const auto bytes = io::read_file(in_path);
  const auto parsed = parse_report_csv(std::string(bytes.begin(), bytes.end()));
  print_rows(parsed.rows);
  if (!parsed.agg.empty()) {
    std::cout << "\nmean ± std over seeds\n";
    for (const auto& a : parsed.agg) {
      std::cout << a[0] << ' ' << a[1] << ' ' << a[2] << "  test " << a[9] << "  delta " << (a[10].empty() ? "-" : a[10])
                << '\n';
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial correction and domain adaptation of small classifiers"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Experiment config (key = value lines)");
  app.add_option("--seed", g.seed, "Run a single seed instead of run.seeds");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();

  std::string model_path, source_path, attack, in_path;
  bool quantized = false, keep_all = false;
  int bits = 0;
  std::optional<float> epsilon;
  const std::vector<std::string> attacks{"none", "bi", "bih", "vbi", "vbi1", "ll", "ddn", "sp"};

  auto* train = app.add_subcommand("train", "Train baselines and save checkpoints");
  auto* correct = app.add_subcommand("correct", "Correct misclassified training samples and save T'");
  correct->add_option("--model", model_path, "Baseline checkpoint (trained in-run when omitted)");
  correct->add_option("--attack", attack, "Attack kind")->check(CLI::IsMember(attacks, CLI::ignore_case));
  correct->add_flag("--keep-all-perturbed", keep_all, "Keep failed corrections too");
  auto* adapt_cmd = app.add_subcommand("adapt", "Adapt a baseline from T' to the training set");
  adapt_cmd->add_option("--model", model_path, "Baseline checkpoint (trained in-run when omitted)");
  adapt_cmd->add_option("--source", source_path, "T' dataset file")->required();
  auto* quantize = app.add_subcommand("quantize", "Quantize a model and report its accuracy");
  quantize->add_option("--model", model_path, "Checkpoint (trained in-run when omitted)");
  quantize->add_option("--bits", bits, "Bit width (default quantize.bits)");
  auto* robust = app.add_subcommand("robust-eval", "Robust accuracy under the attack ensemble");
  robust->add_option("--model", model_path, "Checkpoint (trained in-run when omitted)");
  robust->add_option("--epsilon", epsilon, "L-inf radius (default robust.epsilon)");
  auto* pipeline = app.add_subcommand("pipeline", "Run the full refinement pipeline over all seeds");
  pipeline->add_option("--attack", attack, "Attack kind")->check(CLI::IsMember(attacks, CLI::ignore_case));
  pipeline->add_flag("--quantized", quantized, "Quantized workflow");
  pipeline->add_flag("--keep-all-perturbed", keep_all, "Keep failed corrections in T'");
  auto* report = app.add_subcommand("report", "Summarise a report CSV");
  report->add_option("--in", in_path, "report.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(g);
    if (*correct) return cmd_correct(g, model_path, attack, keep_all);
    if (*adapt_cmd) return cmd_adapt(g, model_path, source_path);
    if (*quantize) return cmd_quantize(g, model_path, bits);
    if (*robust) return cmd_robust(g, model_path, epsilon);
    if (*pipeline) return cmd_pipeline(g, attack, quantized, keep_all);
    if (*report) return cmd_report(in_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
