#pragma once

#include <Eigen/Dense>

#include <concepts>

#include <stdexcept>
#include <string>

namespace dnclab {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

/// Raised for shape, size or configuration violations.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a loss or gradient stops being finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Elementwise nonlinearities. All take and return array expressions.

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return (Scalar(1) + (-x).exp()).inverse();
}

template <typename Derived>
auto softplus(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.max(Scalar(0)) + (-x.abs()).exp().log1p();
}

/// oneplus(x) = 1 + log(1 + e^x); maps the reals onto [1, inf).
template <typename Derived>
auto oneplus(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return Scalar(1) + softplus(x);
}

template <std::floating_point Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <std::floating_point Scalar>
Scalar oneplus(Scalar x) {
  return Scalar(1) + std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

/// Numerically stable softmax of a vector expression.
template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

/// Vector-Jacobian product of softmax: given p = softmax(z) and dL/dp, returns dL/dz.
template <typename DerivedP, typename DerivedG>
Vector<typename DerivedP::Scalar> softmax_backward(const Eigen::MatrixBase<DerivedP>& p,
                                                   const Eigen::MatrixBase<DerivedG>& grad) {
  return (p.array() * (grad.array() - p.dot(grad))).matrix();
}

}  // namespace dnclab
