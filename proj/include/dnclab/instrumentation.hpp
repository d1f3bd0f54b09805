#pragma once

// Controller-state traces and attention-mode histograms for offline analysis.

#include "dnclab/dnc.hpp"
#include "dnclab/tasks.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dnclab {

enum class Phase { Encoding, Query, Decoding };
std::string_view to_string(Phase phase);

/// Phase of 0-based step `t` in an episode of input length `n`: input plus the
/// end-of-input flag are encoding; SEARCH then has two query steps.
Phase phase_of(TaskKind task, Index n, Index t);

struct TraceRecord {
  int trial = 0;
  Index sample = 0;
  Index step = 0;  // 1-based
  Phase phase = Phase::Encoding;
  VectorXd cell;  // c~ for compressed cells, c otherwise
  double allocation_gate = 0.0;
  VectorXd read_mode_content;  // one entry per read head
};

/// Rolls out `samples` episodes of input length `n` and returns one record per (sample, step).
std::vector<TraceRecord> record_traces(const DncParams& params, const DncConfig& cfg, TaskKind task, Index n,
                                       Index samples, std::uint64_t seed, int trial = 0);

/// Header line then one JSON object per record.
void write_traces_jsonl(std::ostream& out, std::span<const TraceRecord> records, TaskKind task, Variant variant,
                        Index n);

struct ModeHistogram {
  Phase phase = Phase::Encoding;
  std::string variable;        // "allocation_gate" or "read_mode_content"
  std::vector<Index> counts;   // uniform bins on [0, 1]
};

/// Per-phase histograms of g_a and of the content read mode (all heads pooled).
std::vector<ModeHistogram> mode_histograms(std::span<const TraceRecord> records, Index bins = 50);

/// `# schema` comment line, then `phase,variable,bin_lo,bin_hi,count`.
void write_modes_csv(std::ostream& out, std::span<const ModeHistogram> histograms, TaskKind task, Variant variant,
                     Index n);

}  // namespace dnclab
