#include "garamost/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace garamost {

namespace {

double evaluate(const std::function<TensorD(const std::vector<TensorD>&)>& fn, const std::vector<TensorD>& inputs) {
  NoGradGuard no_grad;
  const TensorD y = fn(inputs);
  const double v = y.item();
  if (!std::isfinite(v)) throw NumericError("grad_check: function value is not finite");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<TensorD(const std::vector<TensorD>&)>& fn,
                           const std::vector<TensorD>& inputs, const GradCheckOptions& options) {
  std::vector<TensorD> leaves = inputs;
  for (auto& t : leaves) {
    if (!t.is_leaf()) throw std::invalid_argument("grad_check: inputs must be leaf tensors");
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    const TensorD y = fn(leaves);
    if (y.numel() != 1) throw ShapeError("grad_check: function must be scalar-valued");
    y.backward();
  }

  GradCheckResult result;
  std::mt19937_64 rng(options.seed);
  for (std::size_t idx = 0; idx < leaves.size(); ++idx) {
    auto& t = leaves[idx];
    const std::int64_t n = t.numel();
    std::vector<double> analytic(static_cast<std::size_t>(n), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    std::vector<std::int64_t> coords(static_cast<std::size_t>(n));
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_input >= 0 && options.max_coords_per_input < n) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(static_cast<std::size_t>(options.max_coords_per_input));
    }

    auto values = t.mutable_data();
    for (auto c : coords) {
      const double saved = values[c];
      values[c] = saved + options.eps;
      const double up = evaluate(fn, leaves);
      values[c] = saved - options.eps;
      const double down = evaluate(fn, leaves);
      values[c] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[static_cast<std::size_t>(c)];
      const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-12);
      ++result.coords_checked;
      if (rel > result.max_rel_error || result.worst_coord < 0) {
        result.max_rel_error = std::max(result.max_rel_error, rel);
        if (rel >= result.max_rel_error) {
          result.worst_input = idx;
          result.worst_coord = c;
          result.worst_analytic = a;
          result.worst_numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace garamost
