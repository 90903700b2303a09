#pragma once

// Small dense kernels shared by the annotation, calibration and toy modules.

#include <Eigen/Dense>
#include <cmath>

namespace lossdyn {

/// Shannon entropy in nats of a probability vector, with 0 log 0 = 0.
template <typename Derived>
typename Derived::Scalar distribution_entropy(const Eigen::MatrixBase<Derived>& p) {
  using Scalar = typename Derived::Scalar;
  Scalar h(0);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const Scalar v = p(i);
    if (v > Scalar(0)) h -= v * std::log(v);
  }
  return h;
}

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

/// Row-wise softmax of a logit matrix.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> softmax_rows(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

}  // namespace lossdyn
