#pragma once

// Central finite-difference gradient checking, independent of the tape's
// backward rules. 64-bit only; 32-bit finite differences are unreliable.

#include "e2llm/tensor.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace e2llm::test {

inline double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

/// Checks d(loss)/d(param) for every entry of `param` against central
/// differences of `loss_fn` (which must rebuild the computation from current
/// values). Returns the worst relative error.
inline double grad_check(Tensor<double>& param, const std::function<double()>& loss_fn,
                         const std::function<void()>& backward_fn, double h = 1e-5) {
  param.zero_grad();
  backward_fn();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < param.value.rows(); ++i) {
    for (Eigen::Index j = 0; j < param.value.cols(); ++j) {
      const double orig = param.value(i, j);
      param.value(i, j) = orig + h;
      const double up = loss_fn();
      param.value(i, j) = orig - h;
      const double down = loss_fn();
      param.value(i, j) = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = param.grad(i, j);
      if (std::abs(fd) < 1e-10 && std::abs(an) < 1e-10) continue;
      worst = std::max(worst, rel_err(fd, an));
    }
  }
  return worst;
}

inline Mat<double> random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
                              double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

}  // namespace e2llm::test
