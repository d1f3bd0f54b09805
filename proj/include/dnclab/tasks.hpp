#pragma once

// Episode generators for the seven algorithmic tasks, their ground-truth
// functions, and the inverse map from network outputs back to symbols.
//
// Time steps are 0-based rows here. With N = input length, the end-of-input
// flag sits on row N and decoding starts on row N + 1 (row N + 3 for SEARCH).

#include "dnclab/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dnclab {

using Rng = std::mt19937_64;

enum class TaskKind { Sort, Copy, Differentiation, Shift, Add, Search, Logic };

inline constexpr TaskKind kAllTasks[] = {TaskKind::Sort,  TaskKind::Copy,   TaskKind::Differentiation, TaskKind::Shift,
                                         TaskKind::Add,   TaskKind::Search, TaskKind::Logic};

std::string_view to_string(TaskKind kind);
TaskKind task_kind_from_string(std::string_view name);

struct TaskDims {
  Index input;   // X
  Index output;  // Y
};
TaskDims task_dims(TaskKind kind);
Index min_input_length(TaskKind kind);

enum class LogicToken : int { True, False, Not, Or, And, Implies, Iff, LParen, RParen };
inline constexpr Index kLogicTokenCount = 9;

struct TaskMeta {
  TaskKind task = TaskKind::Copy;
  Index input_length = 0;   // N_in
  Index output_length = 0;  // N_out
  std::vector<int> input;   // digits, first ADD operand, or LOGIC token indices
  std::vector<int> operand; // second ADD operand
  std::vector<int> result;  // ground truth: digits, ADD sums, SEARCH match indices, or {truth}
  int query = -1;           // SEARCH
  bool truth = false;       // LOGIC
};

struct TaskSample {
  MatrixXd inputs;   // N_total x X
  MatrixXd targets;  // N_total x Y
  std::vector<bool> loss_mask;
  TaskMeta meta;

  Index steps() const { return inputs.rows(); }
};

// Ground truths.
std::vector<int> sort_result(std::span<const int> digits);
std::vector<int> differentiation_result(std::span<const int> digits);  // 0 prepended
std::vector<int> shift_result(std::span<const int> digits);            // rotate right by floor(N/2)
std::vector<int> add_result(std::span<const int> a, std::span<const int> b);
std::vector<int> search_result(std::span<const int> data, int query);  // ascending match indices

// Encoders: fixed symbols to an episode.
TaskSample encode_sequence_task(TaskKind kind, std::vector<int> digits);  // SORT, COPY, DIFFERENTIATION, SHIFT
TaskSample encode_add(std::vector<int> a, std::vector<int> b);
TaskSample encode_search(std::vector<int> data, int query);
TaskSample encode_logic(std::span<const LogicToken> formula);

// Random generators.
TaskSample generate_sort(Index n, Rng& rng);
TaskSample generate_copy(Index n, Rng& rng);
TaskSample generate_differentiation(Index n, Rng& rng);
TaskSample generate_shift(Index n, Rng& rng);
TaskSample generate_add(Index n, Rng& rng);
TaskSample generate_search(Index n, Rng& rng);
TaskSample generate_logic(Index n, Rng& rng);
TaskSample generate(TaskKind kind, Index n, Rng& rng);

/// Seed of sample `index` within a stream keyed by (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

// Propositional formulas.
struct FormulaError : ConfigError {
  Index position;
  FormulaError(const std::string& what, Index pos)
      : ConfigError(what + " at token " + std::to_string(pos)), position(pos) {}
};

/// Recursive descent over  formula := term [op term],  term := T | F | !term | (formula).
/// Throws FormulaError naming the offending token position.
bool evaluate_formula(std::span<const LogicToken> tokens);
/// Random formula of exactly `n` tokens from  F := T | F | !F | (F op F).
std::vector<LogicToken> random_formula(Index n, Rng& rng);
/// Accepts both ASCII (T F ! | & > = ( )) and the usual logic symbols; whitespace is ignored.
std::vector<LogicToken> parse_tokens(std::string_view text);
std::string format_formula(std::span<const LogicToken> tokens);

/// Reads the answer symbols out of a rollout (T x Y), in the layout of `meta`.
std::vector<int> decode_output(TaskKind kind, const MatrixXd& outputs, const TaskMeta& meta);
/// Outputs of a perfect model: the targets, with the LOGIC answer as a logit of +-1.
MatrixXd ideal_outputs(const TaskSample& sample);

/// One JSON object per line: task, inputs, targets, loss_mask and meta.
void write_sample_jsonl(std::ostream& out, const TaskSample& sample);

}  // namespace dnclab
