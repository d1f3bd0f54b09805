#include "dnclab/evaluation.hpp"

#include "dnclab/parallel.hpp"
#include "dnclab/training.hpp"

#include <algorithm>
#include <ostream>
#include <set>

namespace dnclab {

double score_sample(TaskKind task, const MatrixXd& outputs, const TaskSample& sample) {
  const auto decoded = decode_output(task, outputs, sample.meta);
  const auto& truth = sample.meta.result;
  if (task == TaskKind::Search) {
    const std::set<int> hits(decoded.begin(), decoded.end());
    Index covered = 0;
    for (int p : truth) covered += hits.count(p);
    return static_cast<double>(covered) / static_cast<double>(truth.size());
  }
  Index correct = 0;
  for (std::size_t j = 0; j < truth.size(); ++j) correct += decoded[j] == truth[j];
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

Index evaluation_steps(TaskKind task, Index n, const TaskSample& sample) {
  // SEARCH leaves room for up to N positions plus the stop flag.
  return task == TaskKind::Search ? n + 3 + n + 1 : sample.steps();
}

std::vector<LengthResult> length_sweep(const DncParams& params, const DncConfig& cfg, TaskKind task,
                                       std::span<const Index> lengths, Index batches, Index batch_size,
                                       std::uint64_t seed) {
  if (batches < 1 || batch_size < 1) throw ConfigError("length_sweep: batches and batch_size must be >= 1");
  for (Index n : lengths) {
    if (n < min_input_length(task)) {
      throw ConfigError("length_sweep: length " + std::to_string(n) + " is invalid for task '" +
                        std::string(to_string(task)) + "'");
    }
  }
  const Index units = static_cast<Index>(lengths.size()) * batches;
  std::vector<double> sums(static_cast<std::size_t>(units), 0.0);
  parallel_for(units, [&](Index unit) {
    const Index n = lengths[static_cast<std::size_t>(unit / batches)];
    const Index batch = unit % batches;
    std::vector<TaskSample> samples;
    samples.reserve(static_cast<std::size_t>(batch_size));
    for (Index b = 0; b < batch_size; ++b) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(batch * batch_size + b)));
      samples.push_back(generate(task, n, rng));
    }
    const auto rollouts = unroll_batch(padded_inputs(samples, evaluation_steps(task, n, samples.front())), params, cfg);
    double sum = 0.0;
    for (std::size_t b = 0; b < samples.size(); ++b) sum += score_sample(task, rollouts[b].outputs, samples[b]);
    sums[static_cast<std::size_t>(unit)] = sum;
  });
  std::vector<LengthResult> out;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    double sum = 0.0;
    for (Index batch = 0; batch < batches; ++batch) sum += sums[i * static_cast<std::size_t>(batches) + static_cast<std::size_t>(batch)];
    const Index count = batches * batch_size;
    out.push_back({lengths[i], sum / static_cast<double>(count), count});
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median: no values");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

Index max_generalization_length(const std::vector<std::vector<LengthResult>>& trials, double threshold) {
  if (trials.empty()) throw ConfigError("max_generalization_length: need at least one trial");
  const auto& first = trials.front();
  for (const auto& trial : trials) {
    if (trial.size() != first.size()) throw ConfigError("max_generalization_length: trials swept different lengths");
    for (std::size_t i = 0; i < trial.size(); ++i)
      if (trial[i].length != first[i].length) throw ConfigError("max_generalization_length: trials swept different lengths");
  }
  std::vector<std::size_t> order(first.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return first[a].length < first[b].length; });

  Index best = 0;
  for (std::size_t i : order) {
    std::vector<double> metrics;
    for (const auto& trial : trials) metrics.push_back(trial[i].metric);
    if (!(median(metrics) > threshold)) break;
    best = first[i].length;
  }
  return best;
}

std::vector<Index> extension_grid() {
  std::vector<Index> grid{2};
  for (Index n = 5; n <= 50; n += 5) grid.push_back(n);
  for (Index n = 60; n <= 100; n += 10) grid.push_back(n);
  for (Index n = 125; n <= 250; n += 25) grid.push_back(n);
  for (Index n = 300; n <= 500; n += 50) grid.push_back(n);
  for (Index n = 600; n <= 1000; n += 100) grid.push_back(n);
  return grid;
}

std::vector<LengthResult> extension_sweep(const DncParams& params, const DncConfig& cfg, TaskKind task,
                                          Index new_slots, std::span<const Index> lengths, Index batches,
                                          Index batch_size, std::uint64_t seed) {
  const auto [extended, extended_cfg] = extend_memory(params, cfg, new_slots);
  return length_sweep(extended, extended_cfg, task, lengths, batches, batch_size, seed);
}

void write_results_header(std::ostream& out) { out << "task,variant,trial,length,metric,n\n"; }

void write_results(std::ostream& out, const TrialResult& result) {
  for (const auto& r : result.records) {
    out << to_string(result.task) << ',' << to_string(result.variant) << ',' << result.trial << ',' << r.length << ','
        << format_double(r.metric) << ',' << r.samples << '\n';
  }
}

}  // namespace dnclab
