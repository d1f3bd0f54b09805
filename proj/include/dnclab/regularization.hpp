#pragma once

// Cosine-similarity state regularizer and the combined training loss.

#include "dnclab/cosine.hpp"
#include "dnclab/types.hpp"

#include <algorithm>
#include <span>
#include <vector>

namespace dnclab {

struct RegConfig {
  double alpha = 0.9;  // weight of the task loss
  Index top_k = 5;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("reg config: alpha must lie in [0, 1]");
    if (top_k < 1) throw ConfigError("reg config: top_k must be >= 1");
  }
};

/// Unordered state pair (s < t) with its cosine similarity.
template <typename Scalar>
struct StatePair {
  Index s, t;
  Scalar similarity;
};

/// The min(K, T(T-1)/2) most similar pairs among the columns of `states`,
/// sorted by similarity descending, then by enumeration order.
template <typename Scalar>
std::vector<StatePair<Scalar>> closest_state_pairs(const Matrix<Scalar>& states, Index k) {
  const Index steps = states.cols();
  const Scalar eps(kNormEpsilon);
  const Vector<Scalar> norms = states.colwise().norm().transpose();
  const Matrix<Scalar> gram = states.transpose() * states;

  std::vector<StatePair<Scalar>> pairs;
  pairs.reserve(static_cast<std::size_t>(steps * (steps - 1) / 2));
  for (Index s = 0; s < steps; ++s) {
    for (Index t = s + 1; t < steps; ++t) {
      const bool degenerate = norms(s) < eps || norms(t) < eps;
      pairs.push_back({s, t, degenerate ? Scalar(0) : gram(s, t) / (norms(s) * norms(t) + eps)});
    }
  }
  const auto keep = static_cast<std::size_t>(std::min<Index>(k, static_cast<Index>(pairs.size())));
  // Pair index order is the enumeration order above, so (s, t) lexicographic breaks ties.
  std::partial_sort(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(keep), pairs.end(),
                    [](const StatePair<Scalar>& a, const StatePair<Scalar>& b) {
                      if (a.similarity != b.similarity) return a.similarity > b.similarity;
                      return a.s != b.s ? a.s < b.s : a.t < b.t;
                    });
  pairs.resize(keep);
  return pairs;
}

/// 1 - mean of the K largest cosine similarities between distinct state pairs.
/// `states` holds one cell-state vector per column (H x T).
template <typename Scalar>
Scalar state_regularization_loss(const Matrix<Scalar>& states, Index k) {
  if (states.cols() < 2) throw ConfigError("state_regularization_loss: need at least two states");
  if (k < 1) throw ConfigError("state_regularization_loss: K must be >= 1");
  const auto pairs = closest_state_pairs(states, k);
  Scalar sum(0);
  for (const auto& p : pairs) sum += p.similarity;
  return Scalar(1) - sum / static_cast<Scalar>(pairs.size());
}

/// Gradient of state_regularization_loss with respect to every state entry (H x T).
template <typename Scalar>
Matrix<Scalar> state_regularization_grad(const Matrix<Scalar>& states, Index k) {
  if (states.cols() < 2) throw ConfigError("state_regularization_grad: need at least two states");
  const auto pairs = closest_state_pairs(states, k);
  Matrix<Scalar> grad = Matrix<Scalar>::Zero(states.rows(), states.cols());
  const Scalar scale = Scalar(-1) / static_cast<Scalar>(pairs.size());
  for (const auto& p : pairs) {
    auto [ga, gb] = cosine_similarity_backward(states.col(p.s), states.col(p.t), scale);
    grad.col(p.s) += ga;
    grad.col(p.t) += gb;
  }
  return grad;
}

/// (1/N) sum_i (alpha * task_i + (1 - alpha) * state_i)
inline double combined_loss(std::span<const double> task_losses, std::span<const double> state_losses,
                            double alpha) {
  if (task_losses.size() != state_losses.size() || task_losses.empty()) {
    throw ConfigError("combined_loss: task and state losses must be non-empty and of equal length");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < task_losses.size(); ++i) {
    sum += alpha * task_losses[i] + (1.0 - alpha) * state_losses[i];
  }
  return sum / static_cast<double>(task_losses.size());
}

}  // namespace dnclab
