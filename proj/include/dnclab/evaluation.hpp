#pragma once

// Per-sample scoring, input-length sweeps, memory-extension sweeps and the
// results table.

#include "dnclab/dnc.hpp"
#include "dnclab/tasks.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dnclab {

/// Fraction of correctly decoded answer steps; the hit rate for SEARCH.
double score_sample(TaskKind task, const MatrixXd& outputs, const TaskSample& sample);

/// Number of rollout steps used when scoring an episode of input length `n`.
Index evaluation_steps(TaskKind task, Index n, const TaskSample& sample);

struct LengthResult {
  Index length = 0;
  double metric = 0.0;  // mean score
  Index samples = 0;
};

/// Mean score per length over batches * batch_size fresh samples. The samples
/// of a length depend only on (seed, length), never on the other lengths.
std::vector<LengthResult> length_sweep(const DncParams& params, const DncConfig& cfg, TaskKind task,
                                       std::span<const Index> lengths, Index batches, Index batch_size,
                                       std::uint64_t seed);

/// Largest L with the across-trial median strictly above `threshold` at every
/// swept length <= L; 0 if the shortest length already fails.
Index max_generalization_length(const std::vector<std::vector<LengthResult>>& trials, double threshold = 0.95);

/// 2, 5..50 by 5, 60..100 by 10, 125..250 by 25, 300..500 by 50, 600..1000 by 100.
std::vector<Index> extension_grid();

std::vector<LengthResult> extension_sweep(const DncParams& params, const DncConfig& cfg, TaskKind task,
                                          Index new_slots, std::span<const Index> lengths, Index batches,
                                          Index batch_size, std::uint64_t seed);

struct TrialResult {
  TaskKind task = TaskKind::Copy;
  Variant variant = Variant::ComprReg;
  int trial = 0;
  std::vector<LengthResult> records;
  std::string checkpoint;
};

/// `task,variant,trial,length,metric,n`
void write_results_header(std::ostream& out);
void write_results(std::ostream& out, const TrialResult& result);

double median(std::vector<double> values);

}  // namespace dnclab
