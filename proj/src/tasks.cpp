#include "dnclab/tasks.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace dnclab {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Sort: return "sort";
    case TaskKind::Copy: return "copy";
    case TaskKind::Differentiation: return "differentiation";
    case TaskKind::Shift: return "shift";
    case TaskKind::Add: return "add";
    case TaskKind::Search: return "search";
    case TaskKind::Logic: return "logic";
  }
  return "?";
}

TaskKind task_kind_from_string(std::string_view name) {
  for (auto k : kAllTasks)
    if (to_string(k) == name) return k;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

TaskDims task_dims(TaskKind kind) {
  switch (kind) {
    case TaskKind::Add: return {3, 3};
    case TaskKind::Logic: return {kLogicTokenCount + 1, 1};
    default: return {2, 2};
  }
}

Index min_input_length(TaskKind kind) { return kind == TaskKind::Differentiation ? 2 : 1; }

namespace {

double quinary(int digit) { return digit / 2.0 - 1.0; }
double signed_bit(int bit) { return bit ? 1.0 : -1.0; }

void require_length(TaskKind kind, Index n) {
  if (n < min_input_length(kind)) {
    throw ConfigError(std::string(to_string(kind)) + ": input length must be >= " +
                      std::to_string(min_input_length(kind)) + ", got " + std::to_string(n));
  }
}

void require_digits(std::span<const int> digits, int hi) {
  for (int d : digits)
    if (d < 0 || d > hi) throw ConfigError("symbol " + std::to_string(d) + " outside 0.." + std::to_string(hi));
}

/// Episode skeleton shared by the tasks that answer right after the end-of-input flag.
TaskSample answer_after_flag(TaskKind kind, Index n, Index n_out) {
  const auto dims = task_dims(kind);
  TaskSample s;
  s.inputs = MatrixXd::Zero(2 * n + 2, dims.input);
  s.targets = MatrixXd::Zero(2 * n + 2, dims.output);
  s.inputs(n, dims.input - 1) = 1.0;
  s.targets(2 * n + 1, dims.output - 1) = 1.0;
  s.loss_mask.assign(static_cast<std::size_t>(2 * n + 2), false);
  for (Index t = n + 1; t < 2 * n + 2; ++t) s.loss_mask[static_cast<std::size_t>(t)] = true;
  s.meta.task = kind;
  s.meta.input_length = n;
  s.meta.output_length = n_out;
  return s;
}

std::vector<int> random_digits(Index n, int hi, Rng& rng) {
  std::uniform_int_distribution<int> dist(0, hi);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (auto& d : out) d = dist(rng);
  return out;
}

}  // namespace

std::vector<int> sort_result(std::span<const int> digits) {
  std::vector<int> out(digits.begin(), digits.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> differentiation_result(std::span<const int> digits) {
  std::vector<int> out{0};
  for (std::size_t j = 1; j < digits.size(); ++j) out.push_back(std::abs(digits[j] - digits[j - 1]));
  return out;
}

std::vector<int> shift_result(std::span<const int> digits) {
  const std::size_t n = digits.size();
  std::vector<int> out(n);
  for (std::size_t j = 0; j < n; ++j) out[(j + n / 2) % n] = digits[j];
  return out;
}

std::vector<int> add_result(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ConfigError("add: operands differ in length");
  std::vector<int> out(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) out[j] = a[j] + b[j];
  return out;
}

std::vector<int> search_result(std::span<const int> data, int query) {
  std::vector<int> out;
  for (std::size_t j = 0; j < data.size(); ++j)
    if (data[j] == query) out.push_back(static_cast<int>(j));
  return out;
}

TaskSample encode_sequence_task(TaskKind kind, std::vector<int> digits) {
  const Index n = static_cast<Index>(digits.size());
  require_length(kind, n);
  require_digits(digits, 4);
  std::vector<int> result;
  switch (kind) {
    case TaskKind::Sort: result = sort_result(digits); break;
    case TaskKind::Copy: result = digits; break;
    case TaskKind::Differentiation: result = differentiation_result(digits); break;
    case TaskKind::Shift: result = shift_result(digits); break;
    default: throw ConfigError("encode_sequence_task: not a digit-sequence task");
  }
  TaskSample s = answer_after_flag(kind, n, n);
  for (Index j = 0; j < n; ++j) {
    s.inputs(j, 0) = quinary(digits[static_cast<std::size_t>(j)]);
    s.targets(n + 1 + j, 0) = quinary(result[static_cast<std::size_t>(j)]);
  }
  s.meta.input = std::move(digits);
  s.meta.result = std::move(result);
  return s;
}

TaskSample encode_add(std::vector<int> a, std::vector<int> b) {
  const Index n = static_cast<Index>(a.size());
  require_length(TaskKind::Add, n);
  require_digits(a, 1);
  require_digits(b, 1);
  std::vector<int> result = add_result(a, b);
  TaskSample s = answer_after_flag(TaskKind::Add, n, n);
  for (Index j = 0; j < n; ++j) {
    const auto u = static_cast<std::size_t>(j);
    s.inputs(j, 0) = signed_bit(a[u]);
    s.inputs(j, 1) = signed_bit(b[u]);
    s.targets(n + 1 + j, 0) = signed_bit(result[u] >> 1);
    s.targets(n + 1 + j, 1) = signed_bit(result[u] & 1);
  }
  s.meta.input = std::move(a);
  s.meta.operand = std::move(b);
  s.meta.result = std::move(result);
  return s;
}

TaskSample encode_search(std::vector<int> data, int query) {
  const Index n = static_cast<Index>(data.size());
  require_length(TaskKind::Search, n);
  require_digits(data, 4);
  std::vector<int> matches = search_result(data, query);
  if (matches.empty()) throw ConfigError("search: query " + std::to_string(query) + " does not occur in the data");
  const Index n_out = static_cast<Index>(matches.size());
  const Index total = n + 3 + n_out + 1;

  TaskSample s;
  s.inputs = MatrixXd::Zero(total, 2);
  s.targets = MatrixXd::Zero(total, 2);
  for (Index j = 0; j < n; ++j) s.inputs(j, 0) = data[static_cast<std::size_t>(j)] / 4.0;
  s.inputs(n, 1) = 1.0;
  s.inputs(n + 1, 0) = query / 4.0;
  s.inputs(n + 2, 1) = 1.0;
  for (Index k = 0; k < n_out; ++k) {
    s.targets(n + 3 + k, 0) = n == 1 ? 0.0 : matches[static_cast<std::size_t>(k)] / static_cast<double>(n - 1);
  }
  s.targets(total - 1, 1) = 1.0;
  s.loss_mask.assign(static_cast<std::size_t>(total), false);
  for (Index t = n + 3; t < total; ++t) s.loss_mask[static_cast<std::size_t>(t)] = true;
  s.meta.task = TaskKind::Search;
  s.meta.input_length = n;
  s.meta.output_length = n_out;
  s.meta.input = std::move(data);
  s.meta.result = std::move(matches);
  s.meta.query = query;
  return s;
}

TaskSample encode_logic(std::span<const LogicToken> formula) {
  const Index n = static_cast<Index>(formula.size());
  require_length(TaskKind::Logic, n);
  const bool truth = evaluate_formula(formula);
  TaskSample s;
  s.inputs = MatrixXd::Zero(n + 2, kLogicTokenCount + 1);
  s.targets = MatrixXd::Zero(n + 2, 1);
  for (Index j = 0; j < n; ++j) {
    const int token = static_cast<int>(formula[static_cast<std::size_t>(j)]);
    s.inputs(j, token) = 1.0;
    s.meta.input.push_back(token);
  }
  s.inputs(n, kLogicTokenCount) = 1.0;
  s.targets(n + 1, 0) = truth ? 1.0 : 0.0;
  s.loss_mask.assign(static_cast<std::size_t>(n + 2), false);
  s.loss_mask.back() = true;
  s.meta.task = TaskKind::Logic;
  s.meta.input_length = n;
  s.meta.output_length = 1;
  s.meta.result = {truth ? 1 : 0};
  s.meta.truth = truth;
  return s;
}

TaskSample generate_sort(Index n, Rng& rng) {
  require_length(TaskKind::Sort, n);
  return encode_sequence_task(TaskKind::Sort, random_digits(n, 4, rng));
}

TaskSample generate_copy(Index n, Rng& rng) {
  require_length(TaskKind::Copy, n);
  return encode_sequence_task(TaskKind::Copy, random_digits(n, 4, rng));
}

TaskSample generate_differentiation(Index n, Rng& rng) {
  require_length(TaskKind::Differentiation, n);
  return encode_sequence_task(TaskKind::Differentiation, random_digits(n, 4, rng));
}

TaskSample generate_shift(Index n, Rng& rng) {
  require_length(TaskKind::Shift, n);
  return encode_sequence_task(TaskKind::Shift, random_digits(n, 4, rng));
}

TaskSample generate_add(Index n, Rng& rng) {
  require_length(TaskKind::Add, n);
  auto a = random_digits(n, 1, rng);
  auto b = random_digits(n, 1, rng);
  return encode_add(std::move(a), std::move(b));
}

TaskSample generate_search(Index n, Rng& rng) {
  require_length(TaskKind::Search, n);
  auto data = random_digits(n, 4, rng);
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  const int query = data[pick(rng)];
  return encode_search(std::move(data), query);
}

TaskSample generate_logic(Index n, Rng& rng) {
  require_length(TaskKind::Logic, n);
  // Draw the answer first so both classes are equally likely.
  const bool want = std::bernoulli_distribution(0.5)(rng);
  for (;;) {
    auto formula = random_formula(n, rng);
    if (evaluate_formula(formula) == want) return encode_logic(formula);
  }
}

TaskSample generate(TaskKind kind, Index n, Rng& rng) {
  switch (kind) {
    case TaskKind::Sort: return generate_sort(n, rng);
    case TaskKind::Copy: return generate_copy(n, rng);
    case TaskKind::Differentiation: return generate_differentiation(n, rng);
    case TaskKind::Shift: return generate_shift(n, rng);
    case TaskKind::Add: return generate_add(n, rng);
    case TaskKind::Search: return generate_search(n, rng);
    case TaskKind::Logic: return generate_logic(n, rng);
  }
  throw ConfigError("generate: unknown task");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

// ---------------------------------------------------------------------------
// Formulas

namespace {

class FormulaParser {
 public:
  explicit FormulaParser(std::span<const LogicToken> tokens) : tokens_(tokens) {}

  bool parse() {
    if (tokens_.empty()) throw FormulaError("empty formula", 0);
    const bool value = formula();
    if (pos_ != tokens_.size()) fail("unexpected trailing token");
    return value;
  }

 private:
  bool formula() {
    const bool lhs = term();
    if (pos_ < tokens_.size()) {
      switch (tokens_[pos_]) {
        case LogicToken::Or:
        case LogicToken::And:
        case LogicToken::Implies:
        case LogicToken::Iff: {
          const LogicToken op = tokens_[pos_++];
          const bool rhs = term();
          return apply(op, lhs, rhs);
        }
        default: break;
      }
    }
    return lhs;
  }

  bool term() {
    if (pos_ >= tokens_.size()) fail("unexpected end of formula");
    switch (tokens_[pos_++]) {
      case LogicToken::True: return true;
      case LogicToken::False: return false;
      case LogicToken::Not: return !term();
      case LogicToken::LParen: {
        const bool value = formula();
        if (pos_ >= tokens_.size() || tokens_[pos_] != LogicToken::RParen) fail("expected ')'");
        ++pos_;
        return value;
      }
      default: --pos_; fail("expected a value, '!' or '('");
    }
    return false;
  }

  static bool apply(LogicToken op, bool a, bool b) {
    switch (op) {
      case LogicToken::Or: return a || b;
      case LogicToken::And: return a && b;
      case LogicToken::Implies: return !a || b;
      default: return a == b;
    }
  }

  [[noreturn]] void fail(const std::string& what) const { throw FormulaError(what, static_cast<Index>(pos_)); }

  std::span<const LogicToken> tokens_;
  std::size_t pos_ = 0;
};

void sample_formula(Index n, Rng& rng, std::vector<LogicToken>& out) {
  if (n == 1) {
    out.push_back(std::bernoulli_distribution(0.5)(rng) ? LogicToken::True : LogicToken::False);
    return;
  }
  // A binary node costs 3 tokens plus two operands of at least one token each.
  const bool binary = n >= 5 && std::bernoulli_distribution(2.0 / 3.0)(rng);
  if (!binary) {
    out.push_back(LogicToken::Not);
    sample_formula(n - 1, rng, out);
    return;
  }
  const Index left = std::uniform_int_distribution<Index>(1, n - 4)(rng);
  static constexpr LogicToken ops[] = {LogicToken::Or, LogicToken::And, LogicToken::Implies, LogicToken::Iff};
  out.push_back(LogicToken::LParen);
  sample_formula(left, rng, out);
  out.push_back(ops[std::uniform_int_distribution<int>(0, 3)(rng)]);
  sample_formula(n - 3 - left, rng, out);
  out.push_back(LogicToken::RParen);
}

constexpr std::string_view kAscii = "TF!|&>=()";
constexpr std::string_view kSymbols[] = {"⊤", "⊥", "¬", "∨", "∧", "→", "↔", "(", ")"};

}  // namespace

bool evaluate_formula(std::span<const LogicToken> tokens) { return FormulaParser(tokens).parse(); }

std::vector<LogicToken> random_formula(Index n, Rng& rng) {
  if (n < 1) throw ConfigError("random_formula: length must be >= 1");
  std::vector<LogicToken> out;
  out.reserve(static_cast<std::size_t>(n));
  sample_formula(n, rng, out);
  return out;
}

std::vector<LogicToken> parse_tokens(std::string_view text) {
  std::vector<LogicToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == ' ') {
      ++i;
      continue;
    }
    bool matched = false;
    for (int k = 0; k < kLogicTokenCount && !matched; ++k) {
      if (text[i] == kAscii[static_cast<std::size_t>(k)]) {
        out.push_back(static_cast<LogicToken>(k));
        i += 1;
        matched = true;
      } else if (text.substr(i).starts_with(kSymbols[k])) {
        out.push_back(static_cast<LogicToken>(k));
        i += kSymbols[k].size();
        matched = true;
      }
    }
    if (!matched) throw FormulaError("unknown symbol in '" + std::string(text) + "'", static_cast<Index>(out.size()));
  }
  return out;
}

std::string format_formula(std::span<const LogicToken> tokens) {
  std::string out;
  for (auto t : tokens) out += kSymbols[static_cast<int>(t)];
  return out;
}

// ---------------------------------------------------------------------------
// Decoding

std::vector<int> decode_output(TaskKind kind, const MatrixXd& outputs, const TaskMeta& meta) {
  const Index n = meta.input_length;
  std::vector<int> out;
  switch (kind) {
    case TaskKind::Logic: {
      if (outputs.rows() < n + 2) throw ConfigError("decode_output: rollout too short");
      out.push_back(sigmoid(outputs(n + 1, 0)) >= 0.5 ? 1 : 0);
      return out;
    }
    case TaskKind::Search: {
      const Index first = n + 3;
      for (Index t = first; t < outputs.rows() && t - first < n; ++t) {
        if (outputs(t, 1) > 0.8) break;
        const double pos = std::round(outputs(t, 0) * static_cast<double>(n - 1));
        out.push_back(static_cast<int>(std::clamp(pos, 0.0, static_cast<double>(n - 1))));
      }
      return out;
    }
    case TaskKind::Add: {
      if (outputs.rows() < 2 * n + 1) throw ConfigError("decode_output: rollout too short");
      for (Index j = 0; j < meta.output_length; ++j) {
        out.push_back(2 * (outputs(n + 1 + j, 0) >= 0.0) + (outputs(n + 1 + j, 1) >= 0.0));
      }
      return out;
    }
    default: {
      if (outputs.rows() < 2 * n + 1) throw ConfigError("decode_output: rollout too short");
      for (Index j = 0; j < meta.output_length; ++j) {
        const double digit = std::round((outputs(n + 1 + j, 0) + 1.0) * 2.0);
        out.push_back(static_cast<int>(std::clamp(digit, 0.0, 4.0)));
      }
      return out;
    }
  }
}

MatrixXd ideal_outputs(const TaskSample& sample) {
  MatrixXd out = sample.targets;
  if (sample.meta.task == TaskKind::Logic) {
    const Index t = sample.meta.input_length + 1;
    out(t, 0) = 2.0 * out(t, 0) - 1.0;
  }
  return out;
}

void write_sample_jsonl(std::ostream& out, const TaskSample& sample) {
  auto rows = [](const MatrixXd& m) {
    nlohmann::json j = nlohmann::json::array();
    for (Index t = 0; t < m.rows(); ++t) {
      std::vector<double> row(m.row(t).begin(), m.row(t).end());
      j.push_back(row);
    }
    return j;
  };
  nlohmann::json j;
  j["task"] = to_string(sample.meta.task);
  j["input_length"] = sample.meta.input_length;
  j["output_length"] = sample.meta.output_length;
  j["inputs"] = rows(sample.inputs);
  j["targets"] = rows(sample.targets);
  j["loss_mask"] = sample.loss_mask;
  j["symbols"] = sample.meta.input;
  if (!sample.meta.operand.empty()) j["operand"] = sample.meta.operand;
  j["result"] = sample.meta.result;
  if (sample.meta.task == TaskKind::Search) j["query"] = sample.meta.query;
  if (sample.meta.task == TaskKind::Logic) {
    std::vector<LogicToken> tokens;
    for (int t : sample.meta.input) tokens.push_back(static_cast<LogicToken>(t));
    j["formula"] = format_formula(tokens);
    j["truth"] = sample.meta.truth;
  }
  out << j.dump() << '\n';
}

}  // namespace dnclab
