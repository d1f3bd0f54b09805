#include "dnclab/instrumentation.hpp"

#include "dnclab/evaluation.hpp"
#include "dnclab/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <ostream>

namespace dnclab {

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Encoding: return "encoding";
    case Phase::Query: return "query";
    case Phase::Decoding: return "decoding";
  }
  return "?";
}

Phase phase_of(TaskKind task, Index n, Index t) {
  if (t <= n) return Phase::Encoding;
  if (task == TaskKind::Search && t <= n + 2) return Phase::Query;
  return Phase::Decoding;
}

std::vector<TraceRecord> record_traces(const DncParams& params, const DncConfig& cfg, TaskKind task, Index n,
                                       Index samples, std::uint64_t seed, int trial) {
  if (samples < 1) throw ConfigError("record_traces: need at least one sample");
  std::vector<TaskSample> batch;
  for (Index b = 0; b < samples; ++b) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(b)));
    batch.push_back(generate(task, n, rng));
  }
  const auto rollouts = unroll_batch(padded_inputs(batch), params, cfg, true);
  std::vector<TraceRecord> out;
  for (Index b = 0; b < samples; ++b) {
    const auto& traces = rollouts[static_cast<std::size_t>(b)].traces;
    for (Index t = 0; t < batch[static_cast<std::size_t>(b)].steps(); ++t) {
      const StepTrace& tr = traces[static_cast<std::size_t>(t)];
      out.push_back({trial, b, t + 1, phase_of(task, n, t), tr.c_record, tr.allocation_gate, tr.read_mode_content});
    }
  }
  return out;
}

void write_traces_jsonl(std::ostream& out, std::span<const TraceRecord> records, TaskKind task, Variant variant,
                        Index n) {
  nlohmann::json header{{"schema", "dnclab.traces"}, {"version", 1},       {"task", to_string(task)},
                        {"variant", to_string(variant)}, {"input_length", n}, {"records", records.size()}};
  out << header.dump() << '\n';
  for (const auto& r : records) {
    nlohmann::json j{{"trial", r.trial},
                     {"sample", r.sample},
                     {"step", r.step},
                     {"phase", to_string(r.phase)},
                     {"cell", std::vector<double>(r.cell.begin(), r.cell.end())},
                     {"allocation_gate", r.allocation_gate},
                     {"read_mode_content", std::vector<double>(r.read_mode_content.begin(), r.read_mode_content.end())}};
    out << j.dump() << '\n';
  }
}

std::vector<ModeHistogram> mode_histograms(std::span<const TraceRecord> records, Index bins) {
  if (bins < 1) throw ConfigError("mode_histograms: need at least one bin");
  auto bin_of = [bins](double v) {
    const auto b = static_cast<Index>(v * static_cast<double>(bins));
    return std::clamp<Index>(b, 0, bins - 1);
  };
  std::vector<ModeHistogram> out;
  for (Phase phase : {Phase::Encoding, Phase::Query, Phase::Decoding}) {
    const bool present = std::any_of(records.begin(), records.end(), [&](const TraceRecord& r) { return r.phase == phase; });
    if (!present) continue;
    ModeHistogram gate{phase, "allocation_gate", std::vector<Index>(static_cast<std::size_t>(bins), 0)};
    ModeHistogram read{phase, "read_mode_content", std::vector<Index>(static_cast<std::size_t>(bins), 0)};
    for (const auto& r : records) {
      if (r.phase != phase) continue;
      ++gate.counts[static_cast<std::size_t>(bin_of(r.allocation_gate))];
      for (double v : r.read_mode_content) ++read.counts[static_cast<std::size_t>(bin_of(v))];
    }
    out.push_back(std::move(gate));
    out.push_back(std::move(read));
  }
  return out;
}

void write_modes_csv(std::ostream& out, std::span<const ModeHistogram> histograms, TaskKind task, Variant variant,
                     Index n) {
  out << "# schema dnclab.modes v1 task=" << to_string(task) << " variant=" << to_string(variant)
      << " input_length=" << n << '\n';
  out << "phase,variable,bin_lo,bin_hi,count\n";
  for (const auto& h : histograms) {
    const auto bins = static_cast<double>(h.counts.size());
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      out << to_string(h.phase) << ',' << h.variable << ',' << format_double(static_cast<double>(b) / bins) << ','
          << format_double(static_cast<double>(b + 1) / bins) << ',' << h.counts[b] << '\n';
    }
  }
}

}  // namespace dnclab
