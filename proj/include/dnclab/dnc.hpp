#pragma once

// The full DNC: controller + memory, output/readout/interface projections,
// batched rollouts with a reverse-mode tape, and post-hoc memory extension.

#include "dnclab/controllers.hpp"
#include "dnclab/memory.hpp"
#include "dnclab/regularization.hpp"
#include "dnclab/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dnclab {

enum class Variant { StatefulBaseline, StatelessBaseline, Compr, Reg, ComprReg };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view name);
/// Canonical controller for a variant tag.
ControllerKind controller_for(Variant v);
bool uses_state_loss(Variant v);

struct DncConfig {
  MemoryConfig memory;
  ControllerConfig controller;
  Index input_size = 2;   // X
  Index output_size = 2;  // Y
  RegConfig reg;
  Variant variant = Variant::ComprReg;
  bool state_loss = true;  // add the regularizer to the training loss

  /// Builds the canonical configuration of a variant tag.
  static DncConfig make(Variant variant, Index input_size, Index output_size, MemoryConfig memory = {},
                        Index hidden_size = 128, Index ffnn_layers = 3, RegConfig reg = {});

  Index interface_size() const { return memory.interface_size(); }
  Index chi_size() const { return input_size + memory.num_read_heads * memory.slot_width; }
  void validate() const;
};

struct DncParams {
  ControllerParams<double> controller;
  MatrixXd w_output;     // Y x H
  MatrixXd w_readout;    // Y x RW
  MatrixXd w_interface;  // I x H
  VectorXd b_output;     // Y
  VectorXd b_interface;  // I

  static DncParams zeros(const DncConfig& cfg);

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    self.controller.for_each_tensor(f);
    f("w_output", self.w_output);
    f("w_readout", self.w_readout);
    f("w_interface", self.w_interface);
    f("b_output", self.b_output);
    f("b_interface", self.b_interface);
  }
  template <typename F> void for_each_tensor(F&& f) { visit(*this, f); }
  template <typename F> void for_each_tensor(F&& f) const { visit(*this, f); }

  /// Contiguous storage of every tensor, in visiting order.
  std::vector<std::span<double>> tensor_spans();
  std::vector<std::span<const double>> tensor_spans() const;
  std::vector<std::string> tensor_names() const;
  Index parameter_count() const;
};

/// State of one episode.
struct DncState {
  MemoryState<double> memory;
  ControllerState<double> controller;  // single column
};

struct StepTrace {
  VectorXd y;
  InterfaceFields<double> fields;
  VectorXd c_record;  // c~ for compressed cells, c otherwise (h for FFNN)
  double allocation_gate = 0.0;
  VectorXd read_mode_content;  // pi[content] per read head
};

struct StepResult {
  VectorXd y;
  DncState state;
  StepTrace trace;
};

/// Fresh episode state: zeroed memory, learned controller initial state.
DncState initial_state(const DncConfig& cfg, const DncParams& params);

/// One step: chi = [x; r_prev] -> controller -> interface -> write, link, read -> y.
StepResult dnc_step(const VectorXd& x, const DncState& state, const DncParams& params, const DncConfig& cfg);

struct Rollout {
  MatrixXd outputs;  // T x Y
  std::vector<StepTrace> traces;
};

/// Runs one episode from a fresh state. `inputs` is T x X.
Rollout unroll(const MatrixXd& inputs, const DncParams& params, const DncConfig& cfg, bool record_traces = true);

/// Runs several equal-length episodes in lockstep; results match per-episode unroll.
std::vector<Rollout> unroll_batch(std::span<const MatrixXd> inputs, const DncParams& params, const DncConfig& cfg,
                                  bool record_traces = false);

/// Reverse-mode record of a batched rollout.
struct Tape {
  struct Step {
    MatrixXd h;            // H x B
    MatrixXd read_concat;  // RW x B, current read vectors
    MatrixXd xi_raw;       // I x B
    ControllerCache<double> controller;
    std::vector<InterfaceFields<double>> fields;
    std::vector<MemoryStepCache<double>> memory;
    std::vector<MemoryState<double>> next;
  };
  std::vector<Step> steps;
  std::vector<MatrixXd> outputs;  // per step, Y x B
  std::vector<MatrixXd> cells;    // per step carried cell state, H x B
};

/// Forward pass over a batch; `inputs[t]` is X x B.
Tape forward_batch(std::span<const MatrixXd> inputs, const DncParams& params, const DncConfig& cfg);

/// Parameter gradients given adjoints of the outputs and of the carried cell states (per step).
DncParams backward_batch(const Tape& tape, std::span<const MatrixXd> grad_outputs,
                         std::span<const MatrixXd> grad_cells, const DncParams& params, const DncConfig& cfg);

/// Swaps in a larger memory. Parameters do not depend on N, so only the config changes.
std::pair<DncParams, DncConfig> extend_memory(const DncParams& params, const DncConfig& cfg, Index new_slots);

/// LeCun normal for LSTM-family and projection weights, Glorot uniform for FFNN
/// layers, zero biases, h0/c0 ~ N(0, 1).
DncParams init_params(const DncConfig& cfg, std::uint64_t seed);

}  // namespace dnclab
