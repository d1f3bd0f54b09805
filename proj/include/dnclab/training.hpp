#pragma once

// Losses, ADAM with value clipping, and the training loop with
// out-of-distribution checkpoint selection.

#include "dnclab/dnc.hpp"
#include "dnclab/tasks.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace dnclab {

struct TrainConfig {
  Index batch_size = 64;
  long iterations = 300000;
  Index train_len_min = 5;
  Index train_len_max = 15;
  Index ood_eval_len = 30;
  long ood_eval_every = 10;
  Index ood_window = 500;
  double learning_rate = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_value = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Masked MSE over all output channels, or sigmoid cross-entropy for LOGIC.
double task_loss(const MatrixXd& outputs, const TaskSample& sample);
/// d task_loss / d outputs (T x Y, zero outside the mask).
MatrixXd task_loss_grad(const MatrixXd& outputs, const TaskSample& sample);

/// Clamps every entry to [-clip, clip].
void clip_gradients(DncParams& grads, double clip);

struct AdamMoments {
  DncParams m, v;
  static AdamMoments zeros(const DncConfig& cfg);
};

/// Bias-corrected ADAM step number `t` (1-based).
void adam_update(DncParams& params, const DncParams& grads, AdamMoments& moments, long t, const TrainConfig& cfg);

/// Episodes of one batch, zero-padded at the end to a common length (T x X each).
std::vector<MatrixXd> padded_inputs(std::span<const TaskSample> samples, Index min_steps = 0);

struct BatchLoss {
  double loss = 0.0;        // combined objective
  double task_loss = 0.0;   // batch mean
  double state_loss = 0.0;  // batch mean (0 when the variant has no regularizer)
  DncParams grads;
};

/// Forward + backward over one batch. The objective is the batch mean of
/// alpha * task + (1 - alpha) * state, or of the task loss alone.
BatchLoss loss_and_gradients(const DncParams& params, const DncConfig& cfg, std::span<const TaskSample> samples);

/// Mean task loss of a batch, forward pass only.
double batch_task_loss(const DncParams& params, const DncConfig& cfg, std::span<const TaskSample> samples);

/// Mean of the most recent `window` values.
class RunningMean {
 public:
  explicit RunningMean(std::size_t window) : window_(window) {}
  void push(double value);
  double mean() const;
  std::size_t size() const { return values_.size(); }

 private:
  std::size_t window_;
  std::deque<double> values_;
};

struct LogRow {
  long iteration = 0;
  double train_loss = 0.0;
  std::optional<double> ood_loss;
  std::optional<double> ood_running_mean;
};

struct TrainResult {
  DncParams best;
  long best_iteration = 0;
  std::optional<double> best_ood_mean;
  DncParams last;
  std::vector<LogRow> log;
};

struct TrainCallbacks {
  std::function<void(const LogRow&)> on_row;
  std::function<void(const DncParams&, long iteration)> on_best;
};

/// Samples one batch length per iteration, steps ADAM on clipped gradients, and
/// keeps the parameters with the lowest running mean of the OOD task loss.
/// Throws NumericError on a non-finite loss or gradient.
TrainResult train(const TrainConfig& cfg, const DncConfig& dnc_cfg, TaskKind task, const TrainCallbacks& callbacks = {});

/// `iteration,train_loss,ood_loss,ood_running_mean`; OOD cells stay empty between evaluations.
void write_log_header(std::ostream& out);
void write_log_row(std::ostream& out, const LogRow& row);

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);

}  // namespace dnclab
