#include "dnclab/dnc.hpp"

#include <cmath>
#include <random>

namespace dnclab {

std::string_view to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Lstm: return "lstm";
    case ControllerKind::Peephole: return "peephole";
    case ControllerKind::PeepholeCompressed: return "peephole_compressed";
    case ControllerKind::Ffnn: return "ffnn";
    case ControllerKind::LstmCompressed: return "lstm_compressed";
  }
  return "?";
}

ControllerKind controller_kind_from_string(std::string_view name) {
  for (auto k : {ControllerKind::Lstm, ControllerKind::Peephole, ControllerKind::PeepholeCompressed,
                 ControllerKind::Ffnn, ControllerKind::LstmCompressed}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown controller kind '" + std::string(name) + "'");
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::StatefulBaseline: return "STATEFUL-BASELINE";
    case Variant::StatelessBaseline: return "STATELESS-BASELINE";
    case Variant::Compr: return "COMPR";
    case Variant::Reg: return "REG";
    case Variant::ComprReg: return "COMPR&REG";
  }
  return "?";
}

Variant variant_from_string(std::string_view name) {
  for (auto v : {Variant::StatefulBaseline, Variant::StatelessBaseline, Variant::Compr, Variant::Reg,
                 Variant::ComprReg}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

ControllerKind controller_for(Variant v) {
  switch (v) {
    case Variant::StatefulBaseline: return ControllerKind::Lstm;
    case Variant::StatelessBaseline: return ControllerKind::Ffnn;
    case Variant::Compr: return ControllerKind::PeepholeCompressed;
    case Variant::Reg: return ControllerKind::Peephole;
    case Variant::ComprReg: return ControllerKind::PeepholeCompressed;
  }
  return ControllerKind::Lstm;
}

bool uses_state_loss(Variant v) { return v == Variant::Reg || v == Variant::ComprReg; }

DncConfig DncConfig::make(Variant variant, Index input_size, Index output_size, MemoryConfig memory,
                          Index hidden_size, Index ffnn_layers, RegConfig reg) {
  DncConfig cfg;
  cfg.memory = memory;
  cfg.input_size = input_size;
  cfg.output_size = output_size;
  cfg.reg = reg;
  cfg.variant = variant;
  cfg.state_loss = uses_state_loss(variant);
  cfg.controller.kind = controller_for(variant);
  cfg.controller.hidden_size = hidden_size;
  cfg.controller.ffnn_layers = ffnn_layers;
  cfg.controller.input_size = cfg.chi_size();
  cfg.validate();
  return cfg;
}

void DncConfig::validate() const {
  memory.validate();
  controller.validate();
  reg.validate();
  if (input_size < 1 || output_size < 1) throw ConfigError("dnc config: input and output sizes must be >= 1");
  if (controller.input_size != chi_size()) {
    throw ConfigError("dnc config: controller input size " + std::to_string(controller.input_size) +
                      " does not match X + R*W = " + std::to_string(chi_size()));
  }
  if (state_loss && !controller.recurrent()) {
    throw ConfigError("dnc config: the state regularizer needs a recurrent controller");
  }
}

DncParams DncParams::zeros(const DncConfig& cfg) {
  DncParams p;
  const Index h = cfg.controller.hidden_size, y = cfg.output_size;
  const Index rw = cfg.memory.num_read_heads * cfg.memory.slot_width;
  p.controller = ControllerParams<double>::zeros(cfg.controller);
  p.w_output = MatrixXd::Zero(y, h);
  p.w_readout = MatrixXd::Zero(y, rw);
  p.w_interface = MatrixXd::Zero(cfg.interface_size(), h);
  p.b_output = VectorXd::Zero(y);
  p.b_interface = VectorXd::Zero(cfg.interface_size());
  return p;
}

std::vector<std::span<double>> DncParams::tensor_spans() {
  std::vector<std::span<double>> out;
  for_each_tensor([&](const std::string&, auto& t) { out.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
  return out;
}

std::vector<std::span<const double>> DncParams::tensor_spans() const {
  std::vector<std::span<const double>> out;
  for_each_tensor(
      [&](const std::string&, const auto& t) { out.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
  return out;
}

std::vector<std::string> DncParams::tensor_names() const {
  std::vector<std::string> out;
  for_each_tensor([&](const std::string& name, const auto&) { out.push_back(name); });
  return out;
}

Index DncParams::parameter_count() const {
  Index n = 0;
  for_each_tensor([&](const std::string&, const auto& t) { n += t.size(); });
  return n;
}

DncState initial_state(const DncConfig& cfg, const DncParams& params) {
  return {MemoryState<double>::zeros(cfg.memory), ControllerState<double>::initial(cfg.controller, params.controller, 1)};
}

namespace {

MatrixXd record_of(const DncConfig& cfg, const ControllerState<double>& s) {
  if (!cfg.controller.recurrent()) return s.h;
  return cfg.controller.compressed() ? s.c_raw : s.c;
}

/// Shared forward loop. Batch columns run in lockstep.
struct BatchRunner {
  const DncParams& params;
  const DncConfig& cfg;
  Index batch;
  std::vector<MemoryState<double>> memory;
  ControllerState<double> controller;

  BatchRunner(const DncParams& p, const DncConfig& c, Index b)
      : params(p), cfg(c), batch(b),
        memory(static_cast<std::size_t>(b), MemoryState<double>::zeros(c.memory)),
        controller(ControllerState<double>::initial(c.controller, p.controller, b)) {}

  MatrixXd chi(const MatrixXd& x) const {
    const Index rw = cfg.memory.num_read_heads * cfg.memory.slot_width;
    if (x.rows() != cfg.input_size || x.cols() != batch) {
      throw ConfigError("dnc step: expected input of " + std::to_string(cfg.input_size) + " x " +
                        std::to_string(batch) + ", got " + std::to_string(x.rows()) + " x " + std::to_string(x.cols()));
    }
    MatrixXd out(cfg.input_size + rw, batch);
    out.topRows(cfg.input_size) = x;
    for (Index b = 0; b < batch; ++b) {
      out.col(b).tail(rw) = memory[static_cast<std::size_t>(b)].read_vectors.reshaped();
    }
    return out;
  }

  /// Advances one step; returns y (Y x B). Fills `step` when taping, `traces` when tracing.
  MatrixXd advance(const MatrixXd& x, Tape::Step* step, std::vector<StepTrace>* traces) {
    const Index rw = cfg.memory.num_read_heads * cfg.memory.slot_width;
    const MatrixXd z = chi(x);
    controller = controller_step(cfg.controller, z, controller, params.controller, step ? &step->controller : nullptr);
    MatrixXd xi = (params.w_interface * controller.h).colwise() + params.b_interface;

    MatrixXd reads(rw, batch);
    if (step) {
      step->fields.resize(static_cast<std::size_t>(batch));
      step->memory.resize(static_cast<std::size_t>(batch));
      step->next.resize(static_cast<std::size_t>(batch));
    }
    if (traces) traces->resize(static_cast<std::size_t>(batch));
    for (Index b = 0; b < batch; ++b) {
      const auto ub = static_cast<std::size_t>(b);
      InterfaceFields<double> fields = parse_interface(xi.col(b), cfg.memory);
      memory[ub] = memory_step(memory[ub], fields, step ? &step->memory[ub] : nullptr);
      reads.col(b) = memory[ub].read_vectors.reshaped();
      if (traces) {
        StepTrace& tr = (*traces)[ub];
        tr.allocation_gate = fields.allocation_gate;
        tr.read_mode_content = fields.read_modes.row(kContent).transpose();
        tr.fields = fields;
      }
      if (step) {
        step->fields[ub] = std::move(fields);
        step->next[ub] = memory[ub];
      }
    }
    MatrixXd y = params.w_output * controller.h;
    y.noalias() += params.w_readout * reads;
    y.colwise() += params.b_output;

    if (traces) {
      const MatrixXd rec = record_of(cfg, controller);
      for (Index b = 0; b < batch; ++b) {
        (*traces)[static_cast<std::size_t>(b)].y = y.col(b);
        (*traces)[static_cast<std::size_t>(b)].c_record = rec.col(b);
      }
    }
    if (step) {
      step->h = controller.h;
      step->read_concat = std::move(reads);
      step->xi_raw = std::move(xi);
    }
    return y;
  }
};

}  // namespace

StepResult dnc_step(const VectorXd& x, const DncState& state, const DncParams& params, const DncConfig& cfg) {
  BatchRunner runner(params, cfg, 1);
  runner.memory[0] = state.memory;
  runner.controller = state.controller;
  std::vector<StepTrace> traces;
  MatrixXd y = runner.advance(x, nullptr, &traces);
  StepResult out;
  out.y = y.col(0);
  out.state = {std::move(runner.memory[0]), std::move(runner.controller)};
  out.trace = std::move(traces[0]);
  return out;
}

std::vector<Rollout> unroll_batch(std::span<const MatrixXd> inputs, const DncParams& params, const DncConfig& cfg,
                                  bool record_traces) {
  const Index batch = static_cast<Index>(inputs.size());
  if (batch == 0) return {};
  const Index steps = inputs[0].rows();
  if (steps < 1) throw ConfigError("unroll: need at least one time step");
  for (const auto& in : inputs) {
    if (in.rows() != steps) throw ConfigError("unroll_batch: episodes must share one length");
    if (in.cols() != cfg.input_size) throw ConfigError("unroll: input width does not match X");
  }
  std::vector<Rollout> out(static_cast<std::size_t>(batch));
  for (auto& r : out) {
    r.outputs.resize(steps, cfg.output_size);
    if (record_traces) r.traces.reserve(static_cast<std::size_t>(steps));
  }
  BatchRunner runner(params, cfg, batch);
  MatrixXd x(cfg.input_size, batch);
  std::vector<StepTrace> traces;
  for (Index t = 0; t < steps; ++t) {
    for (Index b = 0; b < batch; ++b) x.col(b) = inputs[static_cast<std::size_t>(b)].row(t).transpose();
    const MatrixXd y = runner.advance(x, nullptr, record_traces ? &traces : nullptr);
    for (Index b = 0; b < batch; ++b) {
      auto& r = out[static_cast<std::size_t>(b)];
      r.outputs.row(t) = y.col(b).transpose();
      if (record_traces) r.traces.push_back(std::move(traces[static_cast<std::size_t>(b)]));
    }
  }
  return out;
}

Rollout unroll(const MatrixXd& inputs, const DncParams& params, const DncConfig& cfg, bool record_traces) {
  return std::move(unroll_batch(std::span<const MatrixXd>(&inputs, 1), params, cfg, record_traces)[0]);
}

Tape forward_batch(std::span<const MatrixXd> inputs, const DncParams& params, const DncConfig& cfg) {
  if (inputs.empty()) throw ConfigError("forward_batch: need at least one time step");
  const Index batch = inputs[0].cols();
  Tape tape;
  tape.steps.resize(inputs.size());
  BatchRunner runner(params, cfg, batch);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    tape.outputs.push_back(runner.advance(inputs[t], &tape.steps[t], nullptr));
    tape.cells.push_back(runner.controller.c);
  }
  return tape;
}

DncParams backward_batch(const Tape& tape, std::span<const MatrixXd> grad_outputs, std::span<const MatrixXd> grad_cells,
                         const DncParams& params, const DncConfig& cfg) {
  const std::size_t steps = tape.steps.size();
  if (grad_outputs.size() != steps || grad_cells.size() != steps) {
    throw ConfigError("backward_batch: adjoint count does not match the number of steps");
  }
  const Index batch = tape.outputs.front().cols();
  const Index h = cfg.controller.hidden_size, x = cfg.input_size;
  const Index w = cfg.memory.slot_width, r = cfg.memory.num_read_heads;

  DncParams grads = DncParams::zeros(cfg);
  std::vector<MemoryState<double>> grad_mem(static_cast<std::size_t>(batch), MemoryState<double>::zeros(cfg.memory));
  MatrixXd grad_h_carry = MatrixXd::Zero(h, batch);
  MatrixXd grad_c_carry = MatrixXd::Zero(h, batch);
  MatrixXd grad_xi(cfg.interface_size(), batch);

  for (std::size_t t = steps; t-- > 0;) {
    const Tape::Step& st = tape.steps[t];
    const MatrixXd& dy = grad_outputs[t];

    grads.w_output.noalias() += dy * st.h.transpose();
    grads.w_readout.noalias() += dy * st.read_concat.transpose();
    grads.b_output += dy.rowwise().sum();
    MatrixXd grad_h = params.w_output.transpose() * dy;
    grad_h += grad_h_carry;
    const MatrixXd grad_reads = params.w_readout.transpose() * dy;

    for (Index b = 0; b < batch; ++b) {
      const auto ub = static_cast<std::size_t>(b);
      MemoryState<double>& g = grad_mem[ub];
      g.read_vectors += grad_reads.col(b).reshaped(w, r);
      InterfaceFields<double> grad_fields;
      g = memory_step_backward(st.memory[ub], st.next[ub], st.fields[ub], std::move(g), grad_fields);
      grad_xi.col(b) = parse_interface_backward(st.xi_raw.col(b), st.fields[ub], grad_fields, cfg.memory);
    }
    grads.w_interface.noalias() += grad_xi * st.h.transpose();
    grads.b_interface += grad_xi.rowwise().sum();
    grad_h.noalias() += params.w_interface.transpose() * grad_xi;

    const MatrixXd grad_c = grad_c_carry + grad_cells[t];
    auto cg = controller_backward(cfg.controller, params.controller, st.controller, grad_h, grad_c, grads.controller);
    grad_h_carry = std::move(cg.h_prev);
    grad_c_carry = std::move(cg.c_prev);
    for (Index b = 0; b < batch; ++b) {
      grad_mem[static_cast<std::size_t>(b)].read_vectors = cg.chi.col(b).tail(r * w).reshaped(w, r);
    }
    (void)x;
  }
  if (cfg.controller.recurrent()) {
    grads.controller.h0 += grad_h_carry.rowwise().sum();
    if (cfg.controller.compressed()) {
      const Eigen::ArrayXd squashed = params.controller.c0.array().tanh();
      grads.controller.c0 += (grad_c_carry.rowwise().sum().array() * (1.0 - squashed.square())).matrix();
    } else {
      grads.controller.c0 += grad_c_carry.rowwise().sum();
    }
  }
  return grads;
}

std::pair<DncParams, DncConfig> extend_memory(const DncParams& params, const DncConfig& cfg, Index new_slots) {
  if (new_slots < cfg.memory.num_slots) {
    throw ConfigError("extend_memory: cannot shrink memory from " + std::to_string(cfg.memory.num_slots) + " to " +
                      std::to_string(new_slots) + " slots");
  }
  DncConfig extended = cfg;
  extended.memory.num_slots = new_slots;
  return {params, extended};
}

DncParams init_params(const DncConfig& cfg, std::uint64_t seed) {
  DncParams p = DncParams::zeros(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto lecun = [&](MatrixXd& m) {
    const double std = 1.0 / std::sqrt(static_cast<double>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = std * normal(rng);
  };
  auto glorot = [&](MatrixXd& m) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = uniform(rng);
  };

  auto& c = p.controller;
  if (cfg.controller.recurrent()) {
    for (auto* m : {&c.w_input, &c.w_forget, &c.w_output, &c.w_cell}) lecun(*m);
    for (Index i = 0; i < c.h0.size(); ++i) c.h0(i) = normal(rng);
    for (Index i = 0; i < c.c0.size(); ++i) c.c0(i) = normal(rng);
  } else {
    for (auto& m : c.layer_weights) glorot(m);
  }
  lecun(p.w_output);
  lecun(p.w_readout);
  lecun(p.w_interface);
  return p;
}

}  // namespace dnclab
