#pragma once

#include <functional>

#include "genhead/tensor.hpp"

namespace genhead {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = false;
};

// Scalar-valued function of one tensor. Called with a tracked tensor for the
// analytic pass and with untracked perturbed copies for the numeric pass.
using ScalarFn = std::function<Tensor(const Tensor&)>;

// Compares the tape gradient of f at x against central differences
// (f(x+h e_i) - f(x-h e_i)) / 2h. The relative error of entry i is
// |analytic - numeric| / max(|analytic|, |numeric|, floor); the floor keeps
// entries whose true gradient is ~0 from dividing by noise.
GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-5, double tol = 1e-4,
                           double floor = 1e-4);

}  // namespace genhead
