// dnclab command-line tool: train, eval, extend, trace, hist, sample.
// Exit codes: 0 success, 2 usage or configuration error, 3 runtime or numeric failure.

#include "dnclab/checkpoint.hpp"
#include "dnclab/config.hpp"
#include "dnclab/evaluation.hpp"
#include "dnclab/instrumentation.hpp"
#include "dnclab/training.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace dnclab;

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 3;

/// Inclusive "A:B" range of input lengths.
std::vector<Index> parse_range(const std::string& text) {
  const auto colon = text.find(':');
  auto parse = [&](std::string_view s) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("bad length range '" + text + "'");
    return static_cast<Index>(v);
  };
  const std::string_view all(text);
  const Index lo = parse(colon == std::string::npos ? all : all.substr(0, colon));
  const Index hi = colon == std::string::npos ? lo : parse(all.substr(colon + 1));
  if (lo < 1 || hi < lo) throw ConfigError("bad length range '" + text + "': need 1 <= A <= B");
  std::vector<Index> out;
  for (Index n = lo; n <= hi; ++n) out.push_back(n);
  return out;
}

/// Writes through a temporary file renamed into place on commit(); "-" is stdout.
class Output {
 public:
  explicit Output(const std::string& path) : path_(path) {
    if (path_ == "-") return;
    const fs::path p(path_);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    file_.open(path_ + ".tmp", std::ios::trunc);
    if (!file_) throw std::runtime_error("cannot write '" + path_ + "'");
  }
  std::ostream& stream() { return path_ == "-" ? std::cout : file_; }
  void commit() {
    if (path_ == "-") {
      std::cout.flush();
      return;
    }
    file_.close();
    if (!file_) throw std::runtime_error("write failed for '" + path_ + "'");
    fs::rename(path_ + ".tmp", path_);
  }

 private:
  std::string path_;
  std::ofstream file_;
};

void remove_stale_blobs(const fs::path& dir, const std::string& keep) {
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name != keep && name.starts_with("ckpt_") && name.ends_with(".bin")) fs::remove(entry.path());
  }
}

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<long> iterations;
};

void run_train(const TrainArgs& args) {
  ExperimentConfig cfg = load_experiment_config(args.config);
  if (args.iterations) cfg.training.iterations = *args.iterations;
  const std::vector<std::uint64_t> seeds = args.seed ? std::vector<std::uint64_t>{*args.seed} : cfg.trial_seeds;
  const fs::path root = args.out.empty() ? fs::path(cfg.output_dir) : fs::path(args.out);

  for (std::uint64_t seed : seeds) {
    ExperimentConfig resolved = cfg;
    resolved.training.seed = seed;
    resolved.training.validate();
    resolved.trial_seeds = {seed};
    const fs::path dir = root / cfg.name / ("seed" + std::to_string(seed));
    fs::create_directories(dir);

    Output config_out((dir / "config.json").string());
    config_out.stream() << to_json(resolved).dump(2) << '\n';
    config_out.commit();

    Output log((dir / "log.csv").string());
    write_log_header(log.stream());
    std::string blob;
    auto save = [&](const DncParams& params, long it) {
      const std::string name = "ckpt_" + std::to_string(it) + ".bin";
      save_checkpoint(dir / "best.ckpt", Checkpoint{resolved.task, resolved.dnc, params, it}, name);
      if (!blob.empty() && blob != name) fs::remove(dir / blob);
      blob = name;
    };
    TrainCallbacks callbacks;
    callbacks.on_row = [&](const LogRow& row) {
      write_log_row(log.stream(), row);
      if (row.iteration % 1000 == 0) {
        std::cerr << cfg.name << " seed " << seed << ": iteration " << row.iteration << ", loss "
                  << format_double(row.train_loss) << '\n';
      }
    };
    callbacks.on_best = save;
    const TrainResult result = train(resolved.training, resolved.dnc, resolved.task, callbacks);
    if (blob.empty()) save(result.best, result.best_iteration);
    log.commit();
    remove_stale_blobs(dir, blob);
    std::cout << (dir / "best.ckpt").string() << " iteration " << result.best_iteration;
    if (result.best_ood_mean) std::cout << " ood_running_mean " << format_double(*result.best_ood_mean);
    std::cout << '\n';
  }
}

struct SweepArgs {
  std::string checkpoint;
  std::string lengths;
  Index batches = 10;
  Index batch_size = 64;
  std::uint64_t seed = 0;
  int trial = 0;
  std::string out = "-";
  Index mem_slots = 500;
};

void write_sweep(const SweepArgs& args, const Checkpoint& ckpt, const std::vector<LengthResult>& records) {
  Output out(args.out);
  write_results_header(out.stream());
  write_results(out.stream(), TrialResult{ckpt.task, ckpt.config.variant, args.trial, records, args.checkpoint});
  out.commit();
}

void run_eval(const SweepArgs& args) {
  const Checkpoint ckpt = load_checkpoint(args.checkpoint);
  const auto lengths = parse_range(args.lengths);
  write_sweep(args, ckpt,
              length_sweep(ckpt.params, ckpt.config, ckpt.task, lengths, args.batches, args.batch_size, args.seed));
}

void run_extend(const SweepArgs& args) {
  const Checkpoint ckpt = load_checkpoint(args.checkpoint);
  const auto lengths = args.lengths.empty() ? extension_grid() : parse_range(args.lengths);
  write_sweep(args, ckpt,
              extension_sweep(ckpt.params, ckpt.config, ckpt.task, args.mem_slots, lengths, args.batches,
                              args.batch_size, args.seed));
}

struct TraceArgs {
  std::string checkpoint;
  Index length = 30;
  Index samples = 64;
  Index bins = 50;
  std::uint64_t seed = 0;
  int trial = 0;
  std::string out = "-";
};

void run_trace(const TraceArgs& args) {
  const Checkpoint ckpt = load_checkpoint(args.checkpoint);
  const auto records =
      record_traces(ckpt.params, ckpt.config, ckpt.task, args.length, args.samples, args.seed, args.trial);
  Output out(args.out);
  write_traces_jsonl(out.stream(), records, ckpt.task, ckpt.config.variant, args.length);
  out.commit();
}

void run_hist(const TraceArgs& args) {
  const Checkpoint ckpt = load_checkpoint(args.checkpoint);
  const auto records =
      record_traces(ckpt.params, ckpt.config, ckpt.task, args.length, args.samples, args.seed, args.trial);
  Output out(args.out);
  write_modes_csv(out.stream(), mode_histograms(records, args.bins), ckpt.task, ckpt.config.variant, args.length);
  out.commit();
}

struct SampleArgs {
  std::string task;
  Index length = 5;
  Index count = 1;
  std::uint64_t seed = 0;
  std::string out = "-";
};

void run_sample(const SampleArgs& args) {
  const TaskKind task = task_kind_from_string(args.task);
  if (args.count < 1) throw ConfigError("--count must be >= 1");
  Output out(args.out);
  for (Index i = 0; i < args.count; ++i) {
    Rng rng(derive_seed(args.seed, static_cast<std::uint64_t>(args.length), static_cast<std::uint64_t>(i)));
    write_sample_jsonl(out.stream(), generate(task, args.length, rng));
  }
  out.commit();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable Neural Computer lab"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train one model per seed and keep the best OOD checkpoint");
  train_cmd->add_option("--config", train_args.config, "Experiment config (JSON)")->required();
  train_cmd->add_option("--seed", train_args.seed, "Trial seed (default: every seed in the config)");
  train_cmd->add_option("--out", train_args.out, "Output root (default: output_dir of the config)");
  train_cmd->add_option("--iterations", train_args.iterations, "Override training.iterations");

  SweepArgs eval_args, extend_args;
  extend_args.batches = 3;
  auto add_sweep_options = [](CLI::App* cmd, SweepArgs& a) {
    cmd->add_option("--checkpoint", a.checkpoint, "Checkpoint manifest (best.ckpt)")->required();
    cmd->add_option("--batches", a.batches, "Batches per length")->capture_default_str();
    cmd->add_option("--batch-size", a.batch_size, "Samples per batch")->capture_default_str();
    cmd->add_option("--seed", a.seed, "Evaluation seed")->capture_default_str();
    cmd->add_option("--trial", a.trial, "Trial id written to the results")->capture_default_str();
    cmd->add_option("--out", a.out, "Results CSV, '-' for stdout")->capture_default_str();
  };
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint over a range of input lengths");
  add_sweep_options(eval_cmd, eval_args);
  eval_cmd->add_option("--lengths", eval_args.lengths, "Inclusive range A:B")->required();
  auto* extend_cmd = app.add_subcommand("extend", "Swap in a larger memory and sweep input lengths");
  add_sweep_options(extend_cmd, extend_args);
  extend_cmd->add_option("--mem-slots", extend_args.mem_slots, "New number of memory slots")->capture_default_str();
  extend_cmd->add_option("--lengths", extend_args.lengths, "Inclusive range A:B (default: the extension grid)");

  TraceArgs trace_args, hist_args;
  hist_args.length = 15;
  auto add_trace_options = [](CLI::App* cmd, TraceArgs& a) {
    cmd->add_option("--checkpoint", a.checkpoint, "Checkpoint manifest (best.ckpt)")->required();
    cmd->add_option("--len", a.length, "Input length")->capture_default_str();
    cmd->add_option("--samples", a.samples, "Number of episodes")->capture_default_str();
    cmd->add_option("--seed", a.seed, "Sample seed")->capture_default_str();
    cmd->add_option("--trial", a.trial, "Trial id written to the records")->capture_default_str();
    cmd->add_option("--out", a.out, "Output file, '-' for stdout")->capture_default_str();
  };
  auto* trace_cmd = app.add_subcommand("trace", "Record controller states and attention modes as JSON lines");
  add_trace_options(trace_cmd, trace_args);
  auto* hist_cmd = app.add_subcommand("hist", "Histogram allocation gates and content read modes per phase");
  add_trace_options(hist_cmd, hist_args);
  hist_cmd->add_option("--bins", hist_args.bins, "Uniform bins on [0, 1]")->capture_default_str();

  SampleArgs sample_args;
  auto* sample_cmd = app.add_subcommand("sample", "Print generated episodes as JSON lines");
  sample_cmd->add_option("--task", sample_args.task, "Task name")->required();
  sample_cmd->add_option("--len", sample_args.length, "Input length")->capture_default_str();
  sample_cmd->add_option("--count", sample_args.count, "Number of episodes")->capture_default_str();
  sample_cmd->add_option("--seed", sample_args.seed, "Sample seed")->capture_default_str();
  sample_cmd->add_option("--out", sample_args.out, "Output file, '-' for stdout")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*train_cmd) run_train(train_args);
    if (*eval_cmd) run_eval(eval_args);
    if (*extend_cmd) run_extend(extend_args);
    if (*trace_cmd) run_trace(trace_args);
    if (*hist_cmd) run_hist(hist_args);
    if (*sample_cmd) run_sample(sample_args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}
