#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "garamost/tensor.hpp"

namespace garamost {

struct GradCheckOptions {
  double eps = 1e-6;
  // Coordinates checked per input; negative means every coordinate. When
  // limited, coordinates are drawn deterministically from `seed`.
  std::int64_t max_coords_per_input = -1;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::int64_t worst_coord = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::int64_t coords_checked = 0;
};

// Compares reverse-mode gradients of a scalar function against central
// differences. The inputs are perturbed in place and restored, so they may be
// live model parameters. Relative error per coordinate is
//   |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
GradCheckResult grad_check(const std::function<TensorD(const std::vector<TensorD>&)>& fn,
                           const std::vector<TensorD>& inputs, const GradCheckOptions& options = {});

inline double grad_check(const std::function<TensorD(const std::vector<TensorD>&)>& fn,
                         const std::vector<TensorD>& inputs, double eps) {
  return grad_check(fn, inputs, GradCheckOptions{eps}).max_rel_error;
}

}  // namespace garamost
