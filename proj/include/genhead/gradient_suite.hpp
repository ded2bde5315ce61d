#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genhead/grad_check.hpp"

namespace genhead {

struct GradientCase {
  std::string name;  // "op[input]"
  GradCheckReport report;
};

// Finite-difference checks of every differentiable op, batch and layer
// normalization, the activations and both adversarial losses plus the
// perceptual loss. Inputs are drawn from `seed`.
std::vector<GradientCase> run_gradient_suite(std::uint64_t seed = 2024, double tol = 1e-4);

}  // namespace genhead
