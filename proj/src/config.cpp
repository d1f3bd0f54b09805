#include "dnclab/config.hpp"

#include <fstream>
#include <set>

namespace dnclab {

namespace {

void expect_object(const Json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const Json& j, const char* key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  const std::string path = where + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean");
    out = v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
    if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
      throw ConfigError(path + ": expected a non-negative integer");
    }
    out = v.get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(path + ": expected a number");
    out = v.get<T>();
  } else {
    if (!v.is_string()) throw ConfigError(path + ": expected a string");
    out = v.get<std::string>();
  }
}

Json memory_json(const MemoryConfig& m) {
  return {{"slots", m.num_slots}, {"width", m.slot_width}, {"read_heads", m.num_read_heads}};
}

MemoryConfig memory_from_json(const Json& j) {
  expect_object(j, "memory", {"slots", "width", "read_heads"});
  MemoryConfig m;
  read(j, "slots", "memory", m.num_slots);
  read(j, "width", "memory", m.slot_width);
  read(j, "read_heads", "memory", m.num_read_heads);
  m.validate();
  return m;
}

/// Sections shared by the model and experiment documents.
DncConfig model_from_sections(const Json& j, Variant variant, TaskDims dims) {
  MemoryConfig memory;
  if (j.contains("memory")) memory = memory_from_json(j.at("memory"));

  Index hidden = 128, layers = 3;
  std::string kind;
  if (j.contains("controller")) {
    const Json& c = j.at("controller");
    expect_object(c, "controller", {"kind", "hidden_size", "ffnn_layers"});
    read(c, "hidden_size", "controller", hidden);
    read(c, "ffnn_layers", "controller", layers);
    read(c, "kind", "controller", kind);
  }
  RegConfig reg;
  bool state_loss = uses_state_loss(variant);
  if (j.contains("regularization")) {
    const Json& r = j.at("regularization");
    expect_object(r, "regularization", {"alpha", "top_k", "enabled"});
    read(r, "alpha", "regularization", reg.alpha);
    read(r, "top_k", "regularization", reg.top_k);
    read(r, "enabled", "regularization", state_loss);
  }
  reg.validate();
  ControllerConfig probe;
  probe.hidden_size = hidden;
  probe.ffnn_layers = layers;
  probe.input_size = 1;
  probe.validate();

  DncConfig cfg = DncConfig::make(variant, dims.input, dims.output, memory, hidden, layers, reg);
  if (!kind.empty()) cfg.controller.kind = controller_kind_from_string(kind);
  cfg.state_loss = state_loss;
  cfg.validate();
  return cfg;
}

Json model_sections(const DncConfig& cfg) {
  return {{"memory", memory_json(cfg.memory)},
          {"controller",
           {{"kind", to_string(cfg.controller.kind)},
            {"hidden_size", cfg.controller.hidden_size},
            {"ffnn_layers", cfg.controller.ffnn_layers}}},
          {"regularization", {{"alpha", cfg.reg.alpha}, {"top_k", cfg.reg.top_k}, {"enabled", cfg.state_loss}}}};
}

Variant read_variant(const Json& j, const std::string& where) {
  std::string name = "COMPR&REG";
  read(j, "variant", where, name);
  return variant_from_string(name);
}

}  // namespace

Json to_json(const DncConfig& cfg) {
  Json j = model_sections(cfg);
  j["variant"] = to_string(cfg.variant);
  j["input_size"] = cfg.input_size;
  j["output_size"] = cfg.output_size;
  return j;
}

DncConfig dnc_config_from_json(const Json& j) {
  expect_object(j, "model", {"variant", "input_size", "output_size", "memory", "controller", "regularization"});
  TaskDims dims{2, 2};
  read(j, "input_size", "model", dims.input);
  read(j, "output_size", "model", dims.output);
  if (dims.input < 1 || dims.output < 1) throw ConfigError("model: input_size and output_size must be >= 1");
  return model_from_sections(j, read_variant(j, "model"), dims);
}

Json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},       {"iterations", c.iterations},       {"train_len_min", c.train_len_min},
          {"train_len_max", c.train_len_max}, {"ood_eval_len", c.ood_eval_len},   {"ood_eval_every", c.ood_eval_every},
          {"ood_window", c.ood_window},       {"learning_rate", c.learning_rate}, {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},       {"adam_eps", c.adam_eps},           {"clip_value", c.clip_value},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const Json& j) {
  expect_object(j, "training",
                {"batch_size", "iterations", "train_len_min", "train_len_max", "ood_eval_len", "ood_eval_every",
                 "ood_window", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps", "clip_value", "seed"});
  TrainConfig c;
  read(j, "batch_size", "training", c.batch_size);
  read(j, "iterations", "training", c.iterations);
  read(j, "train_len_min", "training", c.train_len_min);
  read(j, "train_len_max", "training", c.train_len_max);
  read(j, "ood_eval_len", "training", c.ood_eval_len);
  read(j, "ood_eval_every", "training", c.ood_eval_every);
  read(j, "ood_window", "training", c.ood_window);
  read(j, "learning_rate", "training", c.learning_rate);
  read(j, "adam_beta1", "training", c.adam_beta1);
  read(j, "adam_beta2", "training", c.adam_beta2);
  read(j, "adam_eps", "training", c.adam_eps);
  read(j, "clip_value", "training", c.clip_value);
  read(j, "seed", "training", c.seed);
  c.validate();
  return c;
}

Json to_json(const ExperimentConfig& cfg) {
  Json j = model_sections(cfg.dnc);
  j["name"] = cfg.name;
  j["task"] = to_string(cfg.task);
  j["variant"] = to_string(cfg.dnc.variant);
  j["training"] = to_json(cfg.training);
  j["trial_seeds"] = cfg.trial_seeds;
  j["output_dir"] = cfg.output_dir;
  return j;
}

ExperimentConfig experiment_config_from_json(const Json& j, const std::string& fallback_name) {
  expect_object(j, "config",
                {"name", "task", "variant", "memory", "controller", "regularization", "training", "trial_seeds",
                 "output_dir"});
  ExperimentConfig cfg;
  cfg.name = fallback_name;
  read(j, "name", "config", cfg.name);
  if (cfg.name.empty() || cfg.name.find('/') != std::string::npos) {
    throw ConfigError("config.name: must be a non-empty name without '/'");
  }
  if (!j.contains("task")) throw ConfigError("config: missing required key 'task'");
  std::string task;
  read(j, "task", "config", task);
  cfg.task = task_kind_from_string(task);
  cfg.dnc = model_from_sections(j, read_variant(j, "config"), task_dims(cfg.task));
  if (j.contains("training")) cfg.training = train_config_from_json(j.at("training"));
  if (cfg.training.train_len_min < min_input_length(cfg.task)) {
    throw ConfigError("training.train_len_min: below the minimum input length of task '" + task + "'");
  }
  if (j.contains("trial_seeds")) {
    const Json& seeds = j.at("trial_seeds");
    if (!seeds.is_array() || seeds.empty()) throw ConfigError("config.trial_seeds: expected a non-empty array");
    cfg.trial_seeds.clear();
    for (const auto& s : seeds) {
      if (!s.is_number_unsigned()) throw ConfigError("config.trial_seeds: expected non-negative integers");
      cfg.trial_seeds.push_back(s.get<std::uint64_t>());
    }
  }
  read(j, "output_dir", "config", cfg.output_dir);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j, path.stem().string());
}

}  // namespace dnclab
