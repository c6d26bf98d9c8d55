#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace mlfdr::detail {

inline constexpr double kLogTwoPi = 1.8378770664093454836;

inline double log_normal_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (kLogTwoPi + std::log(variance) + d * d / variance);
}

// Elementwise log N(x_i; mean, variance_i + extra).
inline Eigen::ArrayXd log_normal_pdf(const Eigen::ArrayXd& x, double mean, const Eigen::ArrayXd& variance,
                                     double extra) {
  const Eigen::ArrayXd v = variance + extra;
  return -0.5 * (kLogTwoPi + v.log() + (x - mean).square() / v);
}

// Row-wise log-sum-exp with the max shift; rows of all -inf give -inf.
inline Eigen::ArrayXd row_logsumexp(const Eigen::ArrayXXd& logs) {
  const Eigen::ArrayXd top = logs.rowwise().maxCoeff();
  Eigen::ArrayXd out(logs.rows());
  for (Eigen::Index i = 0; i < logs.rows(); ++i) {
    if (!std::isfinite(top(i))) {
      out(i) = top(i);
      continue;
    }
    out(i) = top(i) + std::log((logs.row(i) - top(i)).exp().sum());
  }
  return out;
}

}  // namespace mlfdr::detail
