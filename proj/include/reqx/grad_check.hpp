#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>

#include "reqx/error.hpp"
#include "reqx/tensor.hpp"

namespace reqx {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::pair<std::size_t, std::size_t> worst_index{0, 0};
  bool passed = true;
};

// Compares `analytic_grad` against central differences of `loss_fn` around
// `param`. `param` is perturbed in place and restored before returning.
// Relative error per coordinate: |fd - an| / max(|fd|, |an|, 1e-8).
inline GradCheckResult grad_check(const std::function<double(const Tensor2D&)>& loss_fn,
                                  Tensor2D& param, const Tensor2D& analytic_grad, double h,
                                  double tol) {
  if (!(h > 0.0)) throw InputError("grad_check: step h must be positive");
  if (!param.same_shape(analytic_grad)) {
    throw ShapeError("grad_check: parameter " + param.shape() + " vs gradient " +
                     analytic_grad.shape());
  }
  GradCheckResult result;
  for (std::size_t r = 0; r < param.rows(); ++r) {
    for (std::size_t c = 0; c < param.cols(); ++c) {
      const double saved = param(r, c);
      param(r, c) = saved + h;
      const double up = loss_fn(param);
      param(r, c) = saved - h;
      const double down = loss_fn(param);
      param(r, c) = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: non-finite loss when probing coordinate (" +
                           std::to_string(r) + ", " + std::to_string(c) + ")");
      }
      const double fd = (up - down) / (2.0 * h);
      const double an = analytic_grad(r, c);
      const double rel =
          std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_index = {r, c};
      }
    }
  }
  result.passed = result.max_relative_error <= tol;
  return result;
}

}  // namespace reqx
