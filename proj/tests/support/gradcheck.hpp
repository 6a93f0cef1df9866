// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checking shared by the unit and
// acceptance suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "seqcoder/ops.hpp"
#include "seqcoder/rng.hpp"
#include "seqcoder/tensor.hpp"

namespace seqcoder::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<input>[<index>] tape=<a> fd=<b>"
  std::size_t checked = 0;
};

/// Entrywise relative error |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares tape gradients of the scalar `loss()` with central differences
/// (step h) over every entry of every tensor in `inputs`.
inline GradCheckResult gradcheck(const std::function<Tensor()>& loss, std::vector<Tensor> inputs,
                                 const std::vector<std::string>& names = {}, double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  Tensor out = loss();
  backward(out);
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) analytic.push_back(t.grad());

  GradCheckResult r;
  NoGradGuard guard;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    auto values = inputs[p].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double plus = loss().item();
      values[i] = saved - h;
      const double minus = loss().item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2 * h);
      const double err = relative_error(analytic[p][i], numeric);
      ++r.checked;
      if (err > r.max_rel_error || r.worst.empty()) {
        r.max_rel_error = std::max(r.max_rel_error, err);
        r.worst = (p < names.size() ? names[p] : "input" + std::to_string(p)) + "[" +
                  std::to_string(i) + "] tape=" + std::to_string(analytic[p][i]) +
                  " fd=" + std::to_string(numeric);
      }
    }
  }
  for (auto& t : inputs) t.zero_grad();
  return r;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  std::vector<double> v(shape.size());
  for (double& x : v) x = uniform(rng, lo, hi);
  return Tensor::from(shape, std::move(v), requires_grad);
}

/// Scalar reduction sum(w ⊙ x) with fixed random weights, so every output
/// entry contributes a distinct amount.
inline Tensor weighted_sum(const Tensor& x, const Tensor& w) { return sum(mul(x, w)); }

}  // namespace seqcoder::testing
