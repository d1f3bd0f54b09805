#include "dnclab/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace dnclab {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
  if (iterations < 0) throw ConfigError("training: iterations must be >= 0");
  if (train_len_min < 1 || train_len_max < train_len_min) {
    throw ConfigError("training: need 1 <= train_len_min <= train_len_max");
  }
  if (ood_eval_len < 1 || ood_eval_every < 1 || ood_window < 1) {
    throw ConfigError("training: OOD length, cadence and window must be >= 1");
  }
  if (!(learning_rate > 0) || !(adam_eps > 0) || !(clip_value > 0)) {
    throw ConfigError("training: learning_rate, adam_eps and clip_value must be positive");
  }
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ConfigError("training: ADAM betas must lie in [0, 1)");
  }
}

namespace {

Index masked_steps(const TaskSample& s) {
  const auto n = std::count(s.loss_mask.begin(), s.loss_mask.end(), true);
  if (n == 0) throw ConfigError("task_loss: empty loss mask");
  return static_cast<Index>(n);
}

void check_shape(const MatrixXd& outputs, const TaskSample& s) {
  if (outputs.rows() < s.steps() || outputs.cols() != s.targets.cols()) {
    throw ConfigError("task_loss: outputs " + std::to_string(outputs.rows()) + " x " + std::to_string(outputs.cols()) +
                      " do not cover targets " + std::to_string(s.steps()) + " x " +
                      std::to_string(s.targets.cols()));
  }
}

}  // namespace

double task_loss(const MatrixXd& outputs, const TaskSample& sample) {
  check_shape(outputs, sample);
  const Index count = masked_steps(sample);
  double sum = 0.0;
  for (Index t = 0; t < sample.steps(); ++t) {
    if (!sample.loss_mask[static_cast<std::size_t>(t)]) continue;
    if (sample.meta.task == TaskKind::Logic) {
      const double z = outputs(t, 0), y = sample.targets(t, 0);
      sum += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    } else {
      sum += (outputs.row(t) - sample.targets.row(t)).squaredNorm();
    }
  }
  if (sample.meta.task == TaskKind::Logic) return sum / static_cast<double>(count);
  return sum / static_cast<double>(count * sample.targets.cols());
}

MatrixXd task_loss_grad(const MatrixXd& outputs, const TaskSample& sample) {
  check_shape(outputs, sample);
  const Index count = masked_steps(sample);
  MatrixXd grad = MatrixXd::Zero(outputs.rows(), outputs.cols());
  const bool logic = sample.meta.task == TaskKind::Logic;
  const double scale = logic ? 1.0 / static_cast<double>(count)
                             : 2.0 / static_cast<double>(count * sample.targets.cols());
  for (Index t = 0; t < sample.steps(); ++t) {
    if (!sample.loss_mask[static_cast<std::size_t>(t)]) continue;
    if (logic) {
      grad(t, 0) = scale * (sigmoid(outputs(t, 0)) - sample.targets(t, 0));
    } else {
      grad.row(t) = scale * (outputs.row(t) - sample.targets.row(t));
    }
  }
  return grad;
}

void clip_gradients(DncParams& grads, double clip) {
  if (!(clip > 0)) throw ConfigError("clip_gradients: clip value must be positive");
  for (auto span : grads.tensor_spans())
    for (double& g : span) g = std::clamp(g, -clip, clip);
}

AdamMoments AdamMoments::zeros(const DncConfig& cfg) { return {DncParams::zeros(cfg), DncParams::zeros(cfg)}; }

void adam_update(DncParams& params, const DncParams& grads, AdamMoments& moments, long t, const TrainConfig& cfg) {
  if (t < 1) throw ConfigError("adam_update: step number must be >= 1");
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  auto p = params.tensor_spans();
  auto m = moments.m.tensor_spans();
  auto v = moments.v.tensor_spans();
  const auto g = grads.tensor_spans();
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
    throw ConfigError("adam_update: parameter, gradient and moment layouts differ");
  }
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k].size() != g[k].size()) throw ConfigError("adam_update: tensor size mismatch");
    for (std::size_t i = 0; i < p[k].size(); ++i) {
      m[k][i] = b1 * m[k][i] + (1.0 - b1) * g[k][i];
      v[k][i] = b2 * v[k][i] + (1.0 - b2) * g[k][i] * g[k][i];
      const double m_hat = m[k][i] / c1, v_hat = v[k][i] / c2;
      p[k][i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

std::vector<MatrixXd> padded_inputs(std::span<const TaskSample> samples, Index min_steps) {
  Index steps = min_steps;
  for (const auto& s : samples) steps = std::max(steps, s.steps());
  std::vector<MatrixXd> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    MatrixXd in = MatrixXd::Zero(steps, s.inputs.cols());
    in.topRows(s.steps()) = s.inputs;
    out.push_back(std::move(in));
  }
  return out;
}

BatchLoss loss_and_gradients(const DncParams& params, const DncConfig& cfg, std::span<const TaskSample> samples) {
  if (samples.empty()) throw ConfigError("loss_and_gradients: empty batch");
  const Index batch = static_cast<Index>(samples.size());
  const auto episodes = padded_inputs(samples);
  const Index steps = episodes.front().rows();

  std::vector<MatrixXd> inputs(static_cast<std::size_t>(steps), MatrixXd(cfg.input_size, batch));
  for (Index t = 0; t < steps; ++t)
    for (Index b = 0; b < batch; ++b) inputs[static_cast<std::size_t>(t)].col(b) = episodes[static_cast<std::size_t>(b)].row(t).transpose();

  const Tape tape = forward_batch(inputs, params, cfg);
  const double alpha = cfg.state_loss ? cfg.reg.alpha : 1.0;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const Index h = cfg.controller.hidden_size;

  std::vector<MatrixXd> grad_y(static_cast<std::size_t>(steps), MatrixXd::Zero(cfg.output_size, batch));
  std::vector<MatrixXd> grad_c(static_cast<std::size_t>(steps), MatrixXd::Zero(h, batch));
  BatchLoss out;
  for (Index b = 0; b < batch; ++b) {
    const TaskSample& s = samples[static_cast<std::size_t>(b)];
    const Index len = s.steps();
    MatrixXd y(len, cfg.output_size);
    for (Index t = 0; t < len; ++t) y.row(t) = tape.outputs[static_cast<std::size_t>(t)].col(b).transpose();
    const double task = task_loss(y, s);
    const MatrixXd gy = task_loss_grad(y, s);
    for (Index t = 0; t < len; ++t) grad_y[static_cast<std::size_t>(t)].col(b) = alpha * inv_batch * gy.row(t).transpose();
    out.task_loss += task * inv_batch;

    double state = 0.0;
    if (cfg.state_loss) {
      MatrixXd cells(h, len);
      for (Index t = 0; t < len; ++t) cells.col(t) = tape.cells[static_cast<std::size_t>(t)].col(b);
      state = state_regularization_loss(cells, cfg.reg.top_k);
      const MatrixXd gc = state_regularization_grad(cells, cfg.reg.top_k);
      for (Index t = 0; t < len; ++t) grad_c[static_cast<std::size_t>(t)].col(b) = (1.0 - alpha) * inv_batch * gc.col(t);
      out.state_loss += state * inv_batch;
    }
    out.loss += (alpha * task + (1.0 - alpha) * state) * inv_batch;
  }
  out.grads = backward_batch(tape, grad_y, grad_c, params, cfg);
  return out;
}

double batch_task_loss(const DncParams& params, const DncConfig& cfg, std::span<const TaskSample> samples) {
  if (samples.empty()) throw ConfigError("batch_task_loss: empty batch");
  const auto rollouts = unroll_batch(padded_inputs(samples), params, cfg, false);
  double sum = 0.0;
  for (std::size_t b = 0; b < samples.size(); ++b) sum += task_loss(rollouts[b].outputs, samples[b]);
  return sum / static_cast<double>(samples.size());
}

void RunningMean::push(double value) {
  values_.push_back(value);
  while (values_.size() > window_) values_.pop_front();
}

double RunningMean::mean() const {
  if (values_.empty()) throw ConfigError("RunningMean: no values");
  return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(values_.size());
}

namespace {

constexpr std::uint64_t kOodStream = std::uint64_t{1} << 63;

std::vector<TaskSample> make_batch(TaskKind task, Index length, Index count, std::uint64_t seed, std::uint64_t stream) {
  std::vector<TaskSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Index b = 0; b < count; ++b) {
    Rng rng(derive_seed(seed, stream, static_cast<std::uint64_t>(b)));
    out.push_back(generate(task, length, rng));
  }
  return out;
}

[[noreturn]] void numeric_failure(long iteration, double loss, const DncParams& grads) {
  std::string worst = "none";
  double worst_value = 0.0;
  const auto names = grads.tensor_names();
  const auto spans = grads.tensor_spans();
  for (std::size_t k = 0; k < spans.size(); ++k) {
    for (double g : spans[k]) {
      const double a = std::isfinite(g) ? std::abs(g) : std::numeric_limits<double>::infinity();
      if (a > worst_value || (worst == "none" && !std::isfinite(g))) {
        worst_value = a;
        worst = names[k];
      }
    }
  }
  throw NumericError("non-finite training loss at iteration " + std::to_string(iteration) + " (loss " +
                     format_double(loss) + "); largest |grad| " + format_double(worst_value) + " in " + worst);
}

bool all_finite(const DncParams& p) {
  for (auto span : p.tensor_spans())
    for (double v : span)
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const DncConfig& dnc_cfg, TaskKind task, const TrainCallbacks& callbacks) {
  cfg.validate();
  dnc_cfg.validate();
  const auto dims = task_dims(task);
  if (dims.input != dnc_cfg.input_size || dims.output != dnc_cfg.output_size) {
    throw ConfigError("train: DNC input/output sizes do not match task '" + std::string(to_string(task)) + "'");
  }
  if (cfg.train_len_min < min_input_length(task)) {
    throw ConfigError("train: train_len_min is below the minimum input length of the task");
  }

  TrainResult result;
  DncParams params = init_params(dnc_cfg, cfg.seed);
  AdamMoments moments = AdamMoments::zeros(dnc_cfg);
  RunningMean ood(static_cast<std::size_t>(cfg.ood_window));
  result.best = params;

  for (long it = 1; it <= cfg.iterations; ++it) {
    const auto stream = static_cast<std::uint64_t>(it);
    Rng length_rng(derive_seed(cfg.seed, stream, static_cast<std::uint64_t>(cfg.batch_size)));
    const Index length = std::uniform_int_distribution<Index>(cfg.train_len_min, cfg.train_len_max)(length_rng);
    const auto batch = make_batch(task, length, cfg.batch_size, cfg.seed, stream);

    BatchLoss step = loss_and_gradients(params, dnc_cfg, batch);
    if (!std::isfinite(step.loss) || !all_finite(step.grads)) numeric_failure(it, step.loss, step.grads);
    clip_gradients(step.grads, cfg.clip_value);
    adam_update(params, step.grads, moments, it, cfg);

    LogRow row;
    row.iteration = it;
    row.train_loss = step.loss;
    if (it % cfg.ood_eval_every == 0) {
      const auto ood_batch = make_batch(task, cfg.ood_eval_len, cfg.batch_size, cfg.seed, kOodStream | stream);
      const double loss = batch_task_loss(params, dnc_cfg, ood_batch);
      if (!std::isfinite(loss)) throw NumericError("non-finite OOD loss at iteration " + std::to_string(it));
      ood.push(loss);
      row.ood_loss = loss;
      row.ood_running_mean = ood.mean();
      if (!result.best_ood_mean || *row.ood_running_mean < *result.best_ood_mean) {
        result.best_ood_mean = row.ood_running_mean;
        result.best = params;
        result.best_iteration = it;
        if (callbacks.on_best) callbacks.on_best(params, it);
      }
    }
    if (callbacks.on_row) callbacks.on_row(row);
    result.log.push_back(row);
  }
  result.last = std::move(params);
  return result;
}

std::string format_double(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

void write_log_header(std::ostream& out) { out << "iteration,train_loss,ood_loss,ood_running_mean\n"; }

void write_log_row(std::ostream& out, const LogRow& row) {
  out << row.iteration << ',' << format_double(row.train_loss) << ',';
  if (row.ood_loss) out << format_double(*row.ood_loss);
  out << ',';
  if (row.ood_running_mean) out << format_double(*row.ood_running_mean);
  out << '\n';
}

}  // namespace dnclab
