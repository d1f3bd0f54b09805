#pragma once

#include "dnclab/types.hpp"

#include <utility>

namespace dnclab {

/// Norms below this are treated as zero; the same value is added to the norm product.
inline constexpr double kNormEpsilon = 1e-8;

/// <a,b> / (|a||b| + eps), defined as 0 when either norm is below eps.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) {
    throw ConfigError("cosine_similarity: length mismatch (" + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()) + ")");
  }
  const Scalar eps(kNormEpsilon);
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na < eps || nb < eps) return Scalar(0);
  return a.dot(b) / (na * nb + eps);
}

/// Gradients of `upstream * cosine_similarity(a, b)` with respect to a and b.
template <typename DerivedA, typename DerivedB>
std::pair<Vector<typename DerivedA::Scalar>, Vector<typename DerivedA::Scalar>>
cosine_similarity_backward(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                           typename DerivedA::Scalar upstream) {
  using Scalar = typename DerivedA::Scalar;
  const Scalar eps(kNormEpsilon);
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (na < eps || nb < eps) {
    return {Vector<Scalar>::Zero(a.size()), Vector<Scalar>::Zero(b.size())};
  }
  const Scalar denom = na * nb + eps;
  const Scalar dot = a.dot(b);
  const Scalar k = dot / (denom * denom);
  Vector<Scalar> grad_a = upstream * (b / denom - (k * nb / na) * a);
  Vector<Scalar> grad_b = upstream * (a / denom - (k * na / nb) * b);
  return {std::move(grad_a), std::move(grad_b)};
}

}  // namespace dnclab
