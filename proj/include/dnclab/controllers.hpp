#pragma once

// Controller networks. All steps are batched: every input/state matrix holds one
// sample per column, so a plain vector is a batch of one.

#include "dnclab/types.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace dnclab {

enum class ControllerKind {
  Lstm,                 // gates see [chi; h_prev]
  Peephole,             // gates see [chi; c_prev], only c is carried
  PeepholeCompressed,   // Peephole with c = tanh(c~)
  Ffnn,                 // stateless
  LstmCompressed,       // ablation: vanilla LSTM with c = tanh(c~)
};

std::string_view to_string(ControllerKind kind);
ControllerKind controller_kind_from_string(std::string_view name);

struct ControllerConfig {
  ControllerKind kind = ControllerKind::PeepholeCompressed;
  Index hidden_size = 128;
  Index ffnn_layers = 3;
  Index input_size = 0;  // X + R*W

  bool recurrent() const { return kind != ControllerKind::Ffnn; }
  bool compressed() const {
    return kind == ControllerKind::PeepholeCompressed || kind == ControllerKind::LstmCompressed;
  }
  bool peephole() const {
    return kind == ControllerKind::Peephole || kind == ControllerKind::PeepholeCompressed;
  }

  void validate() const {
    if (hidden_size < 1) throw ConfigError("controller config: hidden_size must be >= 1");
    if (ffnn_layers < 1) throw ConfigError("controller config: ffnn_layers must be >= 1");
    if (input_size < 1) throw ConfigError("controller config: input_size must be >= 1");
  }
};

template <typename Scalar>
struct ControllerParams {
  // Recurrent variants: one H x (D + H) block per gate acting on [chi; recurrent input].
  Matrix<Scalar> w_input, w_forget, w_output, w_cell;
  Vector<Scalar> b_input, b_forget, b_output, b_cell;
  Vector<Scalar> h0, c0;
  // FFNN: first layer H x D, the rest H x H.
  std::vector<Matrix<Scalar>> layer_weights;
  std::vector<Vector<Scalar>> layer_biases;

  static ControllerParams zeros(const ControllerConfig& cfg) {
    ControllerParams p;
    const Index h = cfg.hidden_size, d = cfg.input_size;
    if (cfg.recurrent()) {
      for (auto* w : {&p.w_input, &p.w_forget, &p.w_output, &p.w_cell}) *w = Matrix<Scalar>::Zero(h, d + h);
      for (auto* b : {&p.b_input, &p.b_forget, &p.b_output, &p.b_cell}) *b = Vector<Scalar>::Zero(h);
      p.h0 = Vector<Scalar>::Zero(h);
      p.c0 = Vector<Scalar>::Zero(h);
    } else {
      for (Index l = 0; l < cfg.ffnn_layers; ++l) {
        p.layer_weights.push_back(Matrix<Scalar>::Zero(h, l == 0 ? d : h));
        p.layer_biases.push_back(Vector<Scalar>::Zero(h));
      }
    }
    return p;
  }

  /// Visits every tensor as (name, tensor). Empty tensors of the unused variant are skipped.
  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    if (self.w_input.size() > 0) {
      f("controller.w_input", self.w_input);
      f("controller.w_forget", self.w_forget);
      f("controller.w_output", self.w_output);
      f("controller.w_cell", self.w_cell);
      f("controller.b_input", self.b_input);
      f("controller.b_forget", self.b_forget);
      f("controller.b_output", self.b_output);
      f("controller.b_cell", self.b_cell);
      f("controller.h0", self.h0);
      f("controller.c0", self.c0);
    }
    for (std::size_t l = 0; l < self.layer_weights.size(); ++l) {
      f("controller.layer" + std::to_string(l) + ".w", self.layer_weights[l]);
      f("controller.layer" + std::to_string(l) + ".b", self.layer_biases[l]);
    }
  }
  template <typename F> void for_each_tensor(F&& f) { visit(*this, f); }
  template <typename F> void for_each_tensor(F&& f) const { visit(*this, f); }
};

template <typename Scalar>
struct ControllerState {
  Matrix<Scalar> h;      // H x B
  Matrix<Scalar> c;      // carried cell state, H x B
  Matrix<Scalar> c_raw;  // c~ before compression; equals c for uncompressed cells

  /// Learned initial state broadcast over a batch. FFNN gets an all-zero placeholder.
  /// Compressed cells squash the learned c0 like every later carried state.
  static ControllerState initial(const ControllerConfig& cfg, const ControllerParams<Scalar>& p, Index batch) {
    ControllerState s;
    if (cfg.recurrent()) {
      s.h = p.h0.replicate(1, batch);
      s.c_raw = p.c0.replicate(1, batch);
    } else {
      s.h = Matrix<Scalar>::Zero(cfg.hidden_size, batch);
      s.c_raw = Matrix<Scalar>::Zero(cfg.hidden_size, batch);
    }
    s.c = cfg.compressed() ? Matrix<Scalar>(s.c_raw.array().tanh().matrix()) : s.c_raw;
    return s;
  }
};

template <typename Scalar>
struct ControllerCache {
  Matrix<Scalar> z;  // [chi; recurrent input]
  Matrix<Scalar> input_gate, forget_gate, output_gate, candidate;
  Matrix<Scalar> c_prev, c_raw, c, tanh_raw;
  std::vector<Matrix<Scalar>> layer_inputs;  // FFNN
};

namespace detail {

template <typename Scalar>
ControllerState<Scalar> gated_cell(const Matrix<Scalar>& z, const Matrix<Scalar>& c_prev,
                                   const ControllerParams<Scalar>& p, bool compress, ControllerCache<Scalar>* cache) {
  const Index h = p.b_input.size();
  if (p.w_input.rows() != h || p.w_input.cols() != z.rows()) {
    throw ConfigError("controller step: input has " + std::to_string(z.rows() - h) + " rows, expected " +
                      std::to_string(p.w_input.cols() - h));
  }
  Matrix<Scalar> ig = sigmoid(((p.w_input * z).colwise() + p.b_input).array()).matrix();
  Matrix<Scalar> fg = sigmoid(((p.w_forget * z).colwise() + p.b_forget).array()).matrix();
  Matrix<Scalar> og = sigmoid(((p.w_output * z).colwise() + p.b_output).array()).matrix();
  Matrix<Scalar> cand = ((p.w_cell * z).colwise() + p.b_cell).array().tanh().matrix();

  ControllerState<Scalar> s;
  s.c_raw = (fg.array() * c_prev.array() + ig.array() * cand.array()).matrix();
  Matrix<Scalar> tanh_raw = s.c_raw.array().tanh().matrix();
  s.c = compress ? tanh_raw : s.c_raw;
  s.h = (og.array() * tanh_raw.array()).matrix();
  if (cache) {
    cache->z = z;
    cache->input_gate = std::move(ig);
    cache->forget_gate = std::move(fg);
    cache->output_gate = std::move(og);
    cache->candidate = std::move(cand);
    cache->c_prev = c_prev;
    cache->c_raw = s.c_raw;
    cache->c = s.c;
    cache->tanh_raw = std::move(tanh_raw);
  }
  return s;
}

template <typename Scalar>
Matrix<Scalar> concat_rows(const Matrix<Scalar>& top, const Matrix<Scalar>& bottom) {
  if (top.cols() != bottom.cols()) throw ConfigError("controller step: batch size mismatch");
  Matrix<Scalar> z(top.rows() + bottom.rows(), top.cols());
  z << top, bottom;
  return z;
}

}  // namespace detail

/// Vanilla LSTM: gates read [chi; h_prev]. With `compress`, c = tanh(c~).
template <typename Scalar>
ControllerState<Scalar> lstm_step(const Matrix<Scalar>& chi, const ControllerState<Scalar>& prev,
                                  const ControllerParams<Scalar>& params, bool compress = false,
                                  ControllerCache<Scalar>* cache = nullptr) {
  return detail::gated_cell(detail::concat_rows(chi, prev.h), prev.c, params, compress, cache);
}

/// Peephole LSTM: gates read [chi; c_prev]; h = o * tanh(c~) regardless of compression.
template <typename Scalar>
ControllerState<Scalar> peephole_step(const Matrix<Scalar>& chi, const ControllerState<Scalar>& prev,
                                      const ControllerParams<Scalar>& params, bool compress,
                                      ControllerCache<Scalar>* cache = nullptr) {
  return detail::gated_cell(detail::concat_rows(chi, prev.c), prev.c, params, compress, cache);
}

/// Stateless: tanh on every layer but the last, which is affine.
template <typename Scalar>
Matrix<Scalar> ffnn_forward(const Matrix<Scalar>& chi, const ControllerParams<Scalar>& params,
                            ControllerCache<Scalar>* cache = nullptr) {
  const std::size_t layers = params.layer_weights.size();
  if (layers == 0 || params.layer_weights[0].cols() != chi.rows()) {
    throw ConfigError("ffnn_forward: input has " + std::to_string(chi.rows()) + " rows, expected " +
                      std::to_string(layers ? params.layer_weights[0].cols() : 0));
  }
  if (cache) cache->layer_inputs.clear();
  Matrix<Scalar> a = chi;
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix<Scalar> pre = (params.layer_weights[l] * a).colwise() + params.layer_biases[l];
    if (cache) cache->layer_inputs.push_back(std::move(a));
    a = l + 1 < layers ? Matrix<Scalar>(pre.array().tanh().matrix()) : std::move(pre);
  }
  return a;
}

template <typename Scalar>
ControllerState<Scalar> controller_step(const ControllerConfig& cfg, const Matrix<Scalar>& chi,
                                        const ControllerState<Scalar>& prev, const ControllerParams<Scalar>& params,
                                        ControllerCache<Scalar>* cache = nullptr) {
  switch (cfg.kind) {
    case ControllerKind::Lstm:
    case ControllerKind::LstmCompressed:
      return lstm_step(chi, prev, params, cfg.compressed(), cache);
    case ControllerKind::Peephole:
    case ControllerKind::PeepholeCompressed:
      return peephole_step(chi, prev, params, cfg.compressed(), cache);
    case ControllerKind::Ffnn: {
      ControllerState<Scalar> s;
      s.h = ffnn_forward(chi, params, cache);
      s.c = Matrix<Scalar>::Zero(s.h.rows(), s.h.cols());
      s.c_raw = s.c;
      return s;
    }
  }
  throw ConfigError("controller_step: unknown controller kind");
}

template <typename Scalar>
struct ControllerGrad {
  Matrix<Scalar> chi;
  Matrix<Scalar> h_prev;
  Matrix<Scalar> c_prev;
};

/// Reverse step. `grad_h` and `grad_c` are adjoints of the returned h and carried c;
/// parameter gradients are accumulated into `grads`.
template <typename Scalar>
ControllerGrad<Scalar> controller_backward(const ControllerConfig& cfg, const ControllerParams<Scalar>& params,
                                           const ControllerCache<Scalar>& cache, const Matrix<Scalar>& grad_h,
                                           const Matrix<Scalar>& grad_c, ControllerParams<Scalar>& grads) {
  const Index h = cfg.hidden_size, d = cfg.input_size, batch = grad_h.cols();
  ControllerGrad<Scalar> out;
  if (!cfg.recurrent()) {
    Matrix<Scalar> g = grad_h;
    for (std::size_t l = params.layer_weights.size(); l-- > 0;) {
      const Matrix<Scalar>& a = cache.layer_inputs[l];
      grads.layer_weights[l].noalias() += g * a.transpose();
      grads.layer_biases[l] += g.rowwise().sum();
      Matrix<Scalar> ga = params.layer_weights[l].transpose() * g;
      g = l > 0 ? Matrix<Scalar>((ga.array() * (Scalar(1) - a.array().square())).matrix()) : std::move(ga);
    }
    out.chi = std::move(g);
    out.h_prev = Matrix<Scalar>::Zero(h, batch);
    out.c_prev = Matrix<Scalar>::Zero(h, batch);
    return out;
  }

  const auto i = cache.input_gate.array();
  const auto f = cache.forget_gate.array();
  const auto o = cache.output_gate.array();
  const auto g = cache.candidate.array();
  const auto th = cache.tanh_raw.array();

  Matrix<Scalar> grad_raw = (grad_h.array() * o * (Scalar(1) - th.square())).matrix();
  if (cfg.compressed()) {
    grad_raw.array() += grad_c.array() * (Scalar(1) - cache.c.array().square());
  } else {
    grad_raw += grad_c;
  }
  const auto gr = grad_raw.array();
  const Matrix<Scalar> pre_o = (grad_h.array() * th * o * (Scalar(1) - o)).matrix();
  const Matrix<Scalar> pre_f = (gr * cache.c_prev.array() * f * (Scalar(1) - f)).matrix();
  const Matrix<Scalar> pre_i = (gr * g * i * (Scalar(1) - i)).matrix();
  const Matrix<Scalar> pre_g = (gr * i * (Scalar(1) - g.square())).matrix();

  grads.w_input.noalias() += pre_i * cache.z.transpose();
  grads.w_forget.noalias() += pre_f * cache.z.transpose();
  grads.w_output.noalias() += pre_o * cache.z.transpose();
  grads.w_cell.noalias() += pre_g * cache.z.transpose();
  grads.b_input += pre_i.rowwise().sum();
  grads.b_forget += pre_f.rowwise().sum();
  grads.b_output += pre_o.rowwise().sum();
  grads.b_cell += pre_g.rowwise().sum();

  Matrix<Scalar> grad_z = params.w_input.transpose() * pre_i;
  grad_z.noalias() += params.w_forget.transpose() * pre_f;
  grad_z.noalias() += params.w_output.transpose() * pre_o;
  grad_z.noalias() += params.w_cell.transpose() * pre_g;

  out.chi = grad_z.topRows(d);
  out.c_prev = (gr * f).matrix();
  if (cfg.peephole()) {
    out.c_prev += grad_z.bottomRows(h);
    out.h_prev = Matrix<Scalar>::Zero(h, batch);
  } else {
    out.h_prev = grad_z.bottomRows(h);
  }
  return out;
}

}  // namespace dnclab
