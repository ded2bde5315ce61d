#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "genhead/ops.hpp"
#include "genhead/tensor.hpp"

namespace genhead {

constexpr double kGradientPenaltyWeight = 10.0;

// Maps an image batch [N,C,H,W] to one score per sample ([N] or [N,1]).
using CriticFn = std::function<Tensor(const Tensor&)>;

// Mean over samples of (||dD/dx at x_hat_i||_2 - 1)^2 where
// x_hat_i = e_i * real_i + (1 - e_i) * fake_i and e_i ~ U(0,1) per sample,
// drawn from Rng(seed). Differentiable w.r.t. the critic's tracked parameters.
Tensor gradient_penalty(Tape& tape, const CriticFn& critic, const Tensor& real, const Tensor& fake,
                        std::uint64_t seed);
// Same with explicit interpolation weights (one per sample).
Tensor gradient_penalty(Tape& tape, const CriticFn& critic, const Tensor& real, const Tensor& fake,
                        const std::vector<double>& weights);

struct CriticLossParts {
  double mean_real = 0.0;
  double mean_fake = 0.0;
  double penalty = 0.0;
  double lambda = kGradientPenaltyWeight;
  double total = 0.0;  // mean_fake - mean_real + lambda * penalty
};

struct CriticLoss {
  CriticLossParts parts;
  Tensor objective;  // scalar on the tape; total == objective.item()
};

CriticLoss critic_loss(Tape& tape, const CriticFn& critic, const Tensor& real, const Tensor& fake,
                       double lambda, std::uint64_t seed);

// -mean(D(fake))
Tensor generator_loss(const CriticFn& critic, const Tensor& fake);

// mean_fake - mean_real: the negative Wasserstein estimate that gets plotted.
double wasserstein_estimate(const CriticLossParts& parts);

struct PerceptualStage {
  Tensor kernel;  // [Cout,Cin,K,K], fixed
  Conv2dGeometry geometry;
  bool relu = true;
};

// Fixed-weight feature network with three taps; each tap is the output of one
// stage, stages run in sequence.
class PerceptualLossNet {
 public:
  static constexpr std::array<double, 3> kDefaultWeights = {0.1, 0.8, 0.1};

  PerceptualLossNet(std::vector<PerceptualStage> stages,
                    std::array<double, 3> weights = kDefaultWeights);

  // Seeded stand-in for a pretrained feature extractor: conv 3x3/s1 -> relu,
  // then two conv 4x4/s2 -> relu stages with the given widths. Kernels are
  // drawn N(0, sqrt(2 / fan_in)).
  static PerceptualLossNet seeded(std::uint64_t seed, std::size_t in_channels = 3,
                                  std::array<std::size_t, 3> widths = {8, 16, 32},
                                  std::array<double, 3> weights = kDefaultWeights);

  std::vector<Tensor> taps(const Tensor& images) const;
  const std::array<double, 3>& weights() const { return weights_; }
  std::size_t in_channels() const;

 private:
  std::vector<PerceptualStage> stages_;
  std::array<double, 3> weights_;
};

// sum_j w_j * MSE(tap_j(generated), tap_j(target)); differentiable in `generated`.
Tensor perceptual_loss(const PerceptualLossNet& net, const Tensor& generated, const Tensor& target);

}  // namespace genhead
