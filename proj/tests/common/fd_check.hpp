#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/Dense>

namespace projood::testing {

// Entrywise |a - b| / max(|a|, |b|, floor), maximized.
template <class A, class B>
double max_rel_error(const A& analytic, const B& numeric, double floor = 1e-5) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.rows(); ++i)
    for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
      const double a = analytic(i, j), n = numeric(i, j);
      worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
    }
  return worst;
}

// Central differences of f with respect to every entry of x (perturbed in place).
template <class M>
M numeric_gradient(M& x, const std::function<double()>& f, double h = 1e-5) {
  M g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double saved = x(i, j);
      x(i, j) = saved + h;
      const double up = f();
      x(i, j) = saved - h;
      const double down = f();
      x(i, j) = saved;
      g(i, j) = (up - down) / (2.0 * h);
    }
  return g;
}

}  // namespace projood::testing
