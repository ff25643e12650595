#pragma once

#include <algorithm>
#include <cmath>

#include "oba/params.hpp"

namespace oba::testing {

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max(std::abs(b), floor);
}

/// Largest elementwise relative error of `a` against reference `b`.
inline double max_rel_err(const ParamTensors& a, const ParamTensors& b, double floor = 1e-12) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a[i].weight.size(); ++k)
      worst = std::max(worst, rel_err(a[i].weight[k], b[i].weight[k], floor));
    for (std::size_t k = 0; k < a[i].bias.size(); ++k)
      worst = std::max(worst, rel_err(a[i].bias[k], b[i].bias[k], floor));
  }
  return worst;
}

inline double max_abs_entry(const ParamTensors& a) {
  double m = 0.0;
  for (const auto& p : a) {
    for (double v : p.weight.storage()) m = std::max(m, std::abs(v));
    for (double v : p.bias.storage()) m = std::max(m, std::abs(v));
  }
  return m;
}

}  // namespace oba::testing
