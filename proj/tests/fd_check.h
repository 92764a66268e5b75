// SPDX-License-Identifier: Apache-2.0
//
// Test-only oracles: central finite differences over tape-built losses, and
// a relative-error comparator with an absolute floor. The FD path never
// touches the backward rules it checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "dsr/rng.h"
#include "dsr/tensor.h"

namespace dsr::test {

// d(loss)/d(param) by central differences, mutating the parameter in place.
// `loss` must rebuild the forward pass from scratch on every call.
inline Tensor fd_gradient(Tensor& param, const std::function<double()>& loss,
                          double h = 1e-5) {
  Tensor g(param.shape());
  for (std::int64_t i = 0; i < param.size(); ++i) {
    const double orig = param.at(i);
    param.at(i) = orig + h;
    const double up = loss();
    param.at(i) = orig - h;
    const double down = loss();
    param.at(i) = orig;
    g.at(i) = (up - down) / (2.0 * h);
  }
  return g;
}

inline double rel_err(double analytic, double fd) {
  return std::abs(analytic - fd) / std::max(std::abs(analytic), 1e-8);
}

inline double max_rel_err(const Tensor& analytic, const Tensor& fd) {
  double worst = 0.0;
  for (std::int64_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, rel_err(analytic.at(i), fd.at(i)));
  }
  return worst;
}

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -2.0,
                            double hi = 2.0) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    if (a.at(i) != b.at(i)) return false;
  }
  return true;
}

}  // namespace dsr::test
