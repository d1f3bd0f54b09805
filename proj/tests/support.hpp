#pragma once

// Helpers shared by the unit tests.

#include "dnclab/memory.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace dnclab::test {

inline VectorXd random_vector(Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

inline MatrixXd random_matrix(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  MatrixXd m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = normal(rng);
  return m;
}

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true gradient is ~0 from dividing by noise.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline bool is_weighting(const VectorXd& w, double tol) { return w.minCoeff() >= -tol && w.sum() <= 1.0 + tol; }

inline bool memory_invariants_hold(const MemoryState<double>& s, double tol) {
  if (!is_weighting(s.write_weighting, tol) || !is_weighting(s.precedence, tol)) return false;
  for (Index i = 0; i < s.read_weightings.cols(); ++i)
    if (!is_weighting(s.read_weightings.col(i), tol)) return false;
  if (s.usage.minCoeff() < -tol || s.usage.maxCoeff() > 1.0 + tol) return false;
  if (s.link.diagonal().cwiseAbs().maxCoeff() != 0.0) return false;
  if (s.link.minCoeff() < -tol) return false;
  if (s.link.rowwise().sum().maxCoeff() > 1.0 + tol || s.link.colwise().sum().maxCoeff() > 1.0 + tol) return false;
  return true;
}

inline MemoryState<double> random_memory_adjoint(const MemoryConfig& cfg, std::mt19937_64& rng) {
  auto g = MemoryState<double>::zeros(cfg);
  g.memory = random_matrix(g.memory.rows(), g.memory.cols(), rng);
  g.usage = random_vector(g.usage.size(), rng);
  g.link = random_matrix(g.link.rows(), g.link.cols(), rng);
  g.precedence = random_vector(g.precedence.size(), rng);
  g.write_weighting = random_vector(g.write_weighting.size(), rng);
  g.read_weightings = random_matrix(g.read_weightings.rows(), g.read_weightings.cols(), rng);
  g.read_vectors = random_matrix(g.read_vectors.rows(), g.read_vectors.cols(), rng);
  return g;
}

/// Sum over all fields of <state, probe>: a scalar whose gradient w.r.t. the state is `probe`.
inline double pair_state(const MemoryState<double>& s, const MemoryState<double>& p) {
  return (s.memory.array() * p.memory.array()).sum() + s.usage.dot(p.usage) +
         (s.link.array() * p.link.array()).sum() + s.precedence.dot(p.precedence) +
         s.write_weighting.dot(p.write_weighting) + (s.read_weightings.array() * p.read_weightings.array()).sum() +
         (s.read_vectors.array() * p.read_vectors.array()).sum();
}

template <typename F>
void for_each_state_entry(MemoryState<double>& s, const MemoryState<double>& g, F&& f) {
  auto each = [&](auto& m, const auto& gm) {
    for (Index i = 0; i < m.size(); ++i) f(m.data()[i], gm.data()[i]);
  };
  each(s.memory, g.memory);
  each(s.usage, g.usage);
  each(s.link, g.link);
  each(s.precedence, g.precedence);
  each(s.write_weighting, g.write_weighting);
  each(s.read_weightings, g.read_weightings);
}

}  // namespace dnclab::test
