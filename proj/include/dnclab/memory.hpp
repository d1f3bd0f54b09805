#pragma once

// External memory of the DNC: interface parsing, content/allocation/temporal
// addressing, and the composite write-then-read access. Every forward op has a
// matching *_backward that returns vector-Jacobian products for reverse mode.

#include "dnclab/cosine.hpp"
#include "dnclab/types.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

namespace dnclab {

struct MemoryConfig {
  Index num_slots = 50;       // N
  Index slot_width = 16;      // W
  Index num_read_heads = 4;   // R

  /// Length of the interface vector: W*R + 3W + 5R + 3.
  Index interface_size() const {
    const Index w = slot_width, r = num_read_heads;
    return w * r + 3 * w + 5 * r + 3;
  }

  void validate() const {
    if (num_slots < 1 || slot_width < 1 || num_read_heads < 1) {
      throw ConfigError("memory config: N, W and R must all be >= 1");
    }
  }
};

/// Offsets of each field inside the raw interface vector.
/// Order: R read keys, R read strengths, write key, write strength, erase,
/// write vector, R free gates, allocation gate, write gate, R read-mode triples.
struct InterfaceLayout {
  Index read_keys, read_strengths, write_key, write_strength, erase, write_vector, free_gates,
      allocation_gate, write_gate, read_modes, size;

  explicit InterfaceLayout(const MemoryConfig& cfg) {
    const Index w = cfg.slot_width, r = cfg.num_read_heads;
    read_keys = 0;
    read_strengths = read_keys + w * r;
    write_key = read_strengths + r;
    write_strength = write_key + w;
    erase = write_strength + 1;
    write_vector = erase + w;
    free_gates = write_vector + w;
    allocation_gate = free_gates + r;
    write_gate = allocation_gate + 1;
    read_modes = write_gate + 1;
    size = read_modes + 3 * r;
  }
};

/// Read-mode row indices. The content component is the middle entry.
enum ReadMode : Index { kBackward = 0, kContent = 1, kForward = 2 };

template <typename Scalar>
struct InterfaceFields {
  Matrix<Scalar> read_keys;        // W x R
  Vector<Scalar> read_strengths;   // R, each >= 1
  Vector<Scalar> write_key;        // W
  Scalar write_strength{};         // >= 1
  Vector<Scalar> erase;            // W, in [0,1]
  Vector<Scalar> write_vector;     // W
  Vector<Scalar> free_gates;       // R, in [0,1]
  Scalar allocation_gate{};        // in [0,1]
  Scalar write_gate{};             // in [0,1]
  Matrix<Scalar> read_modes;       // 3 x R, columns sum to 1

  static InterfaceFields zeros(const MemoryConfig& cfg) {
    const Index w = cfg.slot_width, r = cfg.num_read_heads;
    InterfaceFields f;
    f.read_keys = Matrix<Scalar>::Zero(w, r);
    f.read_strengths = Vector<Scalar>::Zero(r);
    f.write_key = Vector<Scalar>::Zero(w);
    f.erase = Vector<Scalar>::Zero(w);
    f.write_vector = Vector<Scalar>::Zero(w);
    f.free_gates = Vector<Scalar>::Zero(r);
    f.read_modes = Matrix<Scalar>::Zero(3, r);
    return f;
  }
};

template <typename Scalar>
struct MemoryState {
  Matrix<Scalar> memory;           // N x W
  Vector<Scalar> usage;            // N
  Matrix<Scalar> link;             // N x N, zero diagonal
  Vector<Scalar> precedence;       // N
  Vector<Scalar> write_weighting;  // N
  Matrix<Scalar> read_weightings;  // N x R
  Matrix<Scalar> read_vectors;     // W x R

  /// Neutral episode start: everything zero.
  static MemoryState zeros(const MemoryConfig& cfg) {
    const Index n = cfg.num_slots, w = cfg.slot_width, r = cfg.num_read_heads;
    MemoryState s;
    s.memory = Matrix<Scalar>::Zero(n, w);
    s.usage = Vector<Scalar>::Zero(n);
    s.link = Matrix<Scalar>::Zero(n, n);
    s.precedence = Vector<Scalar>::Zero(n);
    s.write_weighting = Vector<Scalar>::Zero(n);
    s.read_weightings = Matrix<Scalar>::Zero(n, r);
    s.read_vectors = Matrix<Scalar>::Zero(w, r);
    return s;
  }
};

// ---------------------------------------------------------------------------
// Interface

template <typename Derived>
InterfaceFields<typename Derived::Scalar> parse_interface(const Eigen::MatrixBase<Derived>& xi,
                                                          const MemoryConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  const InterfaceLayout lay(cfg);
  if (xi.size() != lay.size) {
    throw ConfigError("parse_interface: expected interface length " + std::to_string(lay.size) +
                      ", got " + std::to_string(xi.size()));
  }
  const Index w = cfg.slot_width, r = cfg.num_read_heads;
  InterfaceFields<Scalar> f;
  f.read_keys = xi.segment(lay.read_keys, w * r).reshaped(w, r);
  f.read_strengths = oneplus(xi.segment(lay.read_strengths, r).array()).matrix();
  f.write_key = xi.segment(lay.write_key, w);
  f.write_strength = oneplus(xi(lay.write_strength));
  f.erase = sigmoid(xi.segment(lay.erase, w).array()).matrix();
  f.write_vector = xi.segment(lay.write_vector, w);
  f.free_gates = sigmoid(xi.segment(lay.free_gates, r).array()).matrix();
  f.allocation_gate = sigmoid(xi(lay.allocation_gate));
  f.write_gate = sigmoid(xi(lay.write_gate));
  f.read_modes.resize(3, r);
  for (Index i = 0; i < r; ++i) {
    f.read_modes.col(i) = softmax(xi.segment(lay.read_modes + 3 * i, 3));
  }
  return f;
}

/// Maps gradients on the parsed fields back onto the raw interface vector.
template <typename Derived>
Vector<typename Derived::Scalar> parse_interface_backward(const Eigen::MatrixBase<Derived>& xi,
                                                          const InterfaceFields<typename Derived::Scalar>& f,
                                                          const InterfaceFields<typename Derived::Scalar>& grad,
                                                          const MemoryConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  const InterfaceLayout lay(cfg);
  const Index w = cfg.slot_width, r = cfg.num_read_heads;
  Vector<Scalar> g(lay.size);
  g.segment(lay.read_keys, w * r) = grad.read_keys.reshaped();
  // d oneplus / dx = sigmoid(x)
  g.segment(lay.read_strengths, r) =
      (grad.read_strengths.array() * sigmoid(xi.segment(lay.read_strengths, r).array())).matrix();
  g.segment(lay.write_key, w) = grad.write_key;
  g(lay.write_strength) = grad.write_strength * sigmoid(xi(lay.write_strength));
  g.segment(lay.erase, w) = (grad.erase.array() * f.erase.array() * (Scalar(1) - f.erase.array())).matrix();
  g.segment(lay.write_vector, w) = grad.write_vector;
  g.segment(lay.free_gates, r) =
      (grad.free_gates.array() * f.free_gates.array() * (Scalar(1) - f.free_gates.array())).matrix();
  g(lay.allocation_gate) = grad.allocation_gate * f.allocation_gate * (Scalar(1) - f.allocation_gate);
  g(lay.write_gate) = grad.write_gate * f.write_gate * (Scalar(1) - f.write_gate);
  for (Index i = 0; i < r; ++i) {
    g.segment(lay.read_modes + 3 * i, 3) = softmax_backward(f.read_modes.col(i), grad.read_modes.col(i));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Content addressing

/// softmax over slots of strength * cosine(key, row).
template <typename DerivedM, typename DerivedK>
Vector<typename DerivedM::Scalar> content_weighting(const Eigen::MatrixBase<DerivedM>& memory,
                                                    const Eigen::MatrixBase<DerivedK>& key,
                                                    typename DerivedM::Scalar strength) {
  using Scalar = typename DerivedM::Scalar;
  Vector<Scalar> logits(memory.rows());
  for (Index n = 0; n < memory.rows(); ++n) {
    logits(n) = strength * cosine_similarity(memory.row(n).transpose(), key);
  }
  return softmax(logits);
}

template <typename Scalar>
struct ContentGrad {
  Matrix<Scalar> memory;
  Vector<Scalar> key;
  Scalar strength{};
};

template <typename DerivedM, typename DerivedK, typename DerivedW, typename DerivedG>
ContentGrad<typename DerivedM::Scalar> content_weighting_backward(
    const Eigen::MatrixBase<DerivedM>& memory, const Eigen::MatrixBase<DerivedK>& key,
    typename DerivedM::Scalar strength, const Eigen::MatrixBase<DerivedW>& weights,
    const Eigen::MatrixBase<DerivedG>& grad) {
  using Scalar = typename DerivedM::Scalar;
  const Vector<Scalar> grad_logits = softmax_backward(weights, grad);
  ContentGrad<Scalar> out;
  out.memory = Matrix<Scalar>::Zero(memory.rows(), memory.cols());
  out.key = Vector<Scalar>::Zero(key.size());
  out.strength = Scalar(0);
  for (Index n = 0; n < memory.rows(); ++n) {
    const auto row = memory.row(n).transpose();
    out.strength += grad_logits(n) * cosine_similarity(row, key);
    auto [g_row, g_key] = cosine_similarity_backward(row, key, strength * grad_logits(n));
    out.memory.row(n) = g_row.transpose();
    out.key += g_key;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dynamic allocation

/// u = (u_prev + w_prev - u_prev * w_prev) * prod_i (1 - f_i * w_r_prev_i)
template <typename Scalar>
Vector<Scalar> update_usage(const Vector<Scalar>& usage_prev, const Vector<Scalar>& write_weighting_prev,
                            const Matrix<Scalar>& read_weightings_prev, const Vector<Scalar>& free_gates) {
  Vector<Scalar> retention = Vector<Scalar>::Ones(usage_prev.size());
  for (Index i = 0; i < read_weightings_prev.cols(); ++i) {
    retention.array() *= Scalar(1) - free_gates(i) * read_weightings_prev.col(i).array();
  }
  return ((usage_prev.array() + write_weighting_prev.array() -
           usage_prev.array() * write_weighting_prev.array()) *
          retention.array())
      .matrix();
}

template <typename Scalar>
struct UsageGrad {
  Vector<Scalar> usage_prev;
  Vector<Scalar> write_weighting_prev;
  Matrix<Scalar> read_weightings_prev;
  Vector<Scalar> free_gates;
};

template <typename Scalar>
UsageGrad<Scalar> update_usage_backward(const Vector<Scalar>& usage_prev, const Vector<Scalar>& write_weighting_prev,
                                        const Matrix<Scalar>& read_weightings_prev,
                                        const Vector<Scalar>& free_gates, const Vector<Scalar>& grad) {
  const Index n = usage_prev.size(), r = read_weightings_prev.cols();
  Matrix<Scalar> terms(n, r);
  for (Index i = 0; i < r; ++i) {
    terms.col(i) = (Scalar(1) - free_gates(i) * read_weightings_prev.col(i).array()).matrix();
  }
  const Vector<Scalar> retention = terms.rowwise().prod();
  const auto base = usage_prev.array() + write_weighting_prev.array() - usage_prev.array() * write_weighting_prev.array();

  UsageGrad<Scalar> out;
  const Vector<Scalar> grad_base = (grad.array() * retention.array()).matrix();
  const Vector<Scalar> grad_retention = (grad.array() * base).matrix();
  out.usage_prev = (grad_base.array() * (Scalar(1) - write_weighting_prev.array())).matrix();
  out.write_weighting_prev = (grad_base.array() * (Scalar(1) - usage_prev.array())).matrix();
  out.read_weightings_prev.resize(n, r);
  out.free_gates.resize(r);
  for (Index i = 0; i < r; ++i) {
    Vector<Scalar> others = Vector<Scalar>::Ones(n);
    for (Index k = 0; k < r; ++k) {
      if (k != i) others.array() *= terms.col(k).array();
    }
    const Vector<Scalar> grad_term = (grad_retention.array() * others.array()).matrix();
    out.free_gates(i) = -grad_term.dot(read_weightings_prev.col(i));
    out.read_weightings_prev.col(i) = -free_gates(i) * grad_term;
  }
  return out;
}

/// Slot indices ordered by ascending usage; ties go to the lower index.
template <typename Scalar>
std::vector<Index> free_list(const Vector<Scalar>& usage) {
  std::vector<Index> order(static_cast<std::size_t>(usage.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return usage(a) < usage(b); });
  return order;
}

/// a[phi_j] = (1 - u[phi_j]) * prod_{k<j} u[phi_k]
template <typename Scalar>
Vector<Scalar> allocation_weighting(const Vector<Scalar>& usage) {
  Vector<Scalar> a(usage.size());
  Scalar prefix(1);
  for (Index slot : free_list(usage)) {
    a(slot) = (Scalar(1) - usage(slot)) * prefix;
    prefix *= usage(slot);
  }
  return a;
}

/// The sort order is a routing decision; gradients flow only through the factors.
template <typename Scalar>
Vector<Scalar> allocation_weighting_backward(const Vector<Scalar>& usage, const Vector<Scalar>& grad) {
  const auto order = free_list(usage);
  std::vector<Scalar> prefix(order.size() + 1);
  prefix[0] = Scalar(1);
  for (std::size_t j = 0; j < order.size(); ++j) prefix[j + 1] = prefix[j] * usage(order[j]);

  Vector<Scalar> grad_usage(usage.size());
  Scalar carry(0);  // adjoint of prefix[j + 1]
  for (std::size_t jj = order.size(); jj-- > 0;) {
    const Index slot = order[jj];
    const Scalar u = usage(slot);
    grad_usage(slot) = carry * prefix[jj] - grad(slot) * prefix[jj];
    carry = carry * u + grad(slot) * (Scalar(1) - u);
  }
  return grad_usage;
}

// ---------------------------------------------------------------------------
// Writing

/// w = g_w * (g_a * a + (1 - g_a) * c)
template <typename Scalar>
Vector<Scalar> write_weighting(const Vector<Scalar>& content, const Vector<Scalar>& allocation,
                               Scalar allocation_gate, Scalar write_gate) {
  return write_gate * (allocation_gate * allocation + (Scalar(1) - allocation_gate) * content);
}

/// M = M_prev .* (E - w e^T) + w v^T
template <typename Scalar>
Matrix<Scalar> write_memory(const Matrix<Scalar>& memory_prev, const Vector<Scalar>& write_weighting,
                            const Vector<Scalar>& erase, const Vector<Scalar>& write_vector) {
  return (memory_prev.array() * (Scalar(1) - (write_weighting * erase.transpose()).array())).matrix() +
         write_weighting * write_vector.transpose();
}

/// Updates the temporal link matrix and the precedence weighting.
template <typename Scalar>
std::pair<Matrix<Scalar>, Vector<Scalar>> update_temporal_link(const Matrix<Scalar>& link_prev,
                                                               const Vector<Scalar>& precedence_prev,
                                                               const Vector<Scalar>& write_weighting) {
  const Index n = link_prev.rows();
  Matrix<Scalar> link(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      link(i, j) = i == j ? Scalar(0)
                          : (Scalar(1) - write_weighting(i) - write_weighting(j)) * link_prev(i, j) +
                                write_weighting(i) * precedence_prev(j);
    }
  }
  Vector<Scalar> precedence = (Scalar(1) - write_weighting.sum()) * precedence_prev + write_weighting;
  return {std::move(link), std::move(precedence)};
}

// ---------------------------------------------------------------------------
// Reading

/// w_r[i] = pi[0] * L^T w_prev + pi[1] * content + pi[2] * L w_prev  (one column per head)
template <typename Scalar>
Matrix<Scalar> read_weightings(const Matrix<Scalar>& link, const Matrix<Scalar>& read_weightings_prev,
                               const Matrix<Scalar>& content, const Matrix<Scalar>& modes) {
  const Matrix<Scalar> forward = link * read_weightings_prev;
  const Matrix<Scalar> backward = link.transpose() * read_weightings_prev;
  Matrix<Scalar> out(link.rows(), read_weightings_prev.cols());
  for (Index i = 0; i < out.cols(); ++i) {
    out.col(i) = modes(kBackward, i) * backward.col(i) + modes(kContent, i) * content.col(i) +
                 modes(kForward, i) * forward.col(i);
  }
  return out;
}

/// r = M^T w_r. With a matrix of weightings, returns one read vector per column.
template <typename DerivedM, typename DerivedW>
auto read_memory(const Eigen::MatrixBase<DerivedM>& memory, const Eigen::MatrixBase<DerivedW>& weighting) {
  return (memory.transpose() * weighting).eval();
}

// ---------------------------------------------------------------------------
// Full access: usage -> allocation -> write weighting -> write -> link -> reads.

template <typename Scalar>
struct MemoryStepCache {
  MemoryState<Scalar> prev;
  Vector<Scalar> allocation;
  Vector<Scalar> write_content;
  Matrix<Scalar> read_content;  // N x R
};

template <typename Scalar>
MemoryState<Scalar> memory_step(const MemoryState<Scalar>& prev, const InterfaceFields<Scalar>& xi,
                                MemoryStepCache<Scalar>* cache = nullptr) {
  MemoryState<Scalar> next;
  next.usage = update_usage(prev.usage, prev.write_weighting, prev.read_weightings, xi.free_gates);
  Vector<Scalar> allocation = allocation_weighting(next.usage);
  Vector<Scalar> write_content = content_weighting(prev.memory, xi.write_key, xi.write_strength);
  next.write_weighting = write_weighting(write_content, allocation, xi.allocation_gate, xi.write_gate);
  next.memory = write_memory(prev.memory, next.write_weighting, xi.erase, xi.write_vector);
  std::tie(next.link, next.precedence) = update_temporal_link(prev.link, prev.precedence, next.write_weighting);

  const Index r = xi.read_keys.cols();
  Matrix<Scalar> read_content(next.memory.rows(), r);
  for (Index i = 0; i < r; ++i) {
    read_content.col(i) = content_weighting(next.memory, xi.read_keys.col(i), xi.read_strengths(i));
  }
  next.read_weightings = read_weightings(next.link, prev.read_weightings, read_content, xi.read_modes);
  next.read_vectors = read_memory(next.memory, next.read_weightings);

  if (cache) {
    cache->prev = prev;
    cache->allocation = std::move(allocation);
    cache->write_content = std::move(write_content);
    cache->read_content = std::move(read_content);
  }
  return next;
}

/// Reverse-mode step through memory_step.
///
/// `grad` holds adjoints of every field of the returned state and is consumed.
/// Returns adjoints of the previous state (its read_vectors adjoint is zero: the
/// previous read vectors only reach the controller input) and writes the
/// adjoints of the parsed interface fields into `grad_xi`.
template <typename Scalar>
MemoryState<Scalar> memory_step_backward(const MemoryStepCache<Scalar>& cache, const MemoryState<Scalar>& next,
                                         const InterfaceFields<Scalar>& xi, MemoryState<Scalar> grad,
                                         InterfaceFields<Scalar>& grad_xi) {
  const MemoryState<Scalar>& prev = cache.prev;
  const Index n = prev.memory.rows(), w = prev.memory.cols(), r = prev.read_weightings.cols();
  MemoryConfig shape{n, w, r};
  grad_xi = InterfaceFields<Scalar>::zeros(shape);
  MemoryState<Scalar> gp = MemoryState<Scalar>::zeros(shape);

  // r = M^T w_r
  grad.memory.noalias() += next.read_weightings * grad.read_vectors.transpose();
  grad.read_weightings.noalias() += next.memory * grad.read_vectors;

  // read weightings
  const Matrix<Scalar> forward = next.link * prev.read_weightings;
  const Matrix<Scalar> backward = next.link.transpose() * prev.read_weightings;
  Matrix<Scalar> grad_forward(n, r), grad_backward(n, r), grad_content(n, r);
  for (Index i = 0; i < r; ++i) {
    const auto g = grad.read_weightings.col(i);
    grad_xi.read_modes(kBackward, i) = g.dot(backward.col(i));
    grad_xi.read_modes(kContent, i) = g.dot(cache.read_content.col(i));
    grad_xi.read_modes(kForward, i) = g.dot(forward.col(i));
    grad_backward.col(i) = xi.read_modes(kBackward, i) * g;
    grad_content.col(i) = xi.read_modes(kContent, i) * g;
    grad_forward.col(i) = xi.read_modes(kForward, i) * g;
  }
  grad.link.noalias() += grad_forward * prev.read_weightings.transpose();
  grad.link.noalias() += prev.read_weightings * grad_backward.transpose();
  gp.read_weightings.noalias() += next.link.transpose() * grad_forward;
  gp.read_weightings.noalias() += next.link * grad_backward;

  // content reads on the freshly written memory
  for (Index i = 0; i < r; ++i) {
    auto cg = content_weighting_backward(next.memory, xi.read_keys.col(i), xi.read_strengths(i),
                                         cache.read_content.col(i), grad_content.col(i));
    grad.memory += cg.memory;
    grad_xi.read_keys.col(i) = cg.key;
    grad_xi.read_strengths(i) = cg.strength;
  }

  // temporal link
  const Vector<Scalar>& ww = next.write_weighting;
  Vector<Scalar> grad_ww = grad.write_weighting;
  grad.link.diagonal().setZero();
  {
    const Matrix<Scalar> gl_lp = (grad.link.array() * prev.link.array()).matrix();
    grad_ww.noalias() += grad.link * prev.precedence;
    grad_ww -= gl_lp.rowwise().sum();
    grad_ww -= gl_lp.colwise().sum().transpose();
    gp.precedence.noalias() += grad.link.transpose() * ww;
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < n; ++i) {
        gp.link(i, j) = (Scalar(1) - ww(i) - ww(j)) * grad.link(i, j);
      }
    }
  }
  // precedence
  gp.precedence += (Scalar(1) - ww.sum()) * grad.precedence;
  grad_ww += grad.precedence;
  grad_ww.array() -= grad.precedence.dot(prev.precedence);

  // M = M_prev .* (1 - w e^T) + w v^T
  gp.memory = (grad.memory.array() * (Scalar(1) - (ww * xi.erase.transpose()).array())).matrix();
  grad_ww.noalias() += grad.memory * xi.write_vector;
  const Matrix<Scalar> gm_mp = (grad.memory.array() * prev.memory.array()).matrix();
  grad_ww.noalias() -= gm_mp * xi.erase;
  grad_xi.erase = -(gm_mp.transpose() * ww);
  grad_xi.write_vector = grad.memory.transpose() * ww;

  // write weighting
  const Vector<Scalar> mix = xi.allocation_gate * cache.allocation + (Scalar(1) - xi.allocation_gate) * cache.write_content;
  grad_xi.write_gate = grad_ww.dot(mix);
  grad_xi.allocation_gate = xi.write_gate * grad_ww.dot(cache.allocation - cache.write_content);
  const Vector<Scalar> grad_alloc = xi.write_gate * xi.allocation_gate * grad_ww;
  const Vector<Scalar> grad_wcontent = xi.write_gate * (Scalar(1) - xi.allocation_gate) * grad_ww;

  auto cg = content_weighting_backward(prev.memory, xi.write_key, xi.write_strength, cache.write_content, grad_wcontent);
  gp.memory += cg.memory;
  grad_xi.write_key = cg.key;
  grad_xi.write_strength = cg.strength;

  // allocation and usage
  Vector<Scalar> grad_usage = grad.usage + allocation_weighting_backward(next.usage, grad_alloc);
  auto ug = update_usage_backward(prev.usage, prev.write_weighting, prev.read_weightings, xi.free_gates, grad_usage);
  gp.usage = ug.usage_prev;
  gp.write_weighting = ug.write_weighting_prev;
  gp.read_weightings += ug.read_weightings_prev;
  grad_xi.free_gates = ug.free_gates;
  return gp;
}

}  // namespace dnclab
