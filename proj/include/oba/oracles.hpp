#pragma once

#include "oba/graph.hpp"
#include "oba/params.hpp"
#include "oba/scoring.hpp"
#include "oba/tensor.hpp"

namespace oba {

/// Binary connection tensor M [p_out, p_weight, p_in] such that
///   Y[a, b] = sum_{c,d,e} W[a, c, d] X[c, e] M[b, d, e] + bias[a].
/// Linear layers give the single entry [[[1]]].
Tensor materialize_m(const LayerNode& node, std::size_t cap = std::size_t{1} << 24);

/// One sample of a Linear or Conv2d layer evaluated through materialize_m.
Tensor forward_via_m(const LayerNode& node, const Tensor& x_sample, const Tensor& m);

/// Second-order parts of the OBA score evaluated with every Jacobian built as
/// a dense matrix from single-entry passes. first_order is zero; scores hold
/// upper + lower + parallel. Throws CapExceeded above `cap` parameters.
ImportanceTable oracle_dense_second_order(const NetworkGraph& g, const Tensor& batch, const Tensor& targets,
                                          const DeltaRule& rule, std::size_t cap = 5000);

/// Central difference of the full gradient along the rule's direction, times
/// the direction: (g(theta + e d) - g(theta - e d)) / (2e) * d, e = 1e-4 / |d|.
ParamTensors oracle_true_hvp(const NetworkGraph& g, const Tensor& batch, const Tensor& targets,
                             const DeltaRule& rule);

}  // namespace oba
