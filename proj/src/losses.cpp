#include "genhead/losses.hpp"

#include <cmath>
#include <numeric>

#include "genhead/rng.hpp"

namespace genhead {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes differ, " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

std::vector<std::size_t> sample_axes(const Tensor& x) {
  std::vector<std::size_t> axes;
  for (std::size_t i = 1; i < x.rank(); ++i) axes.push_back(i);
  return axes;
}

}  // namespace

Tensor gradient_penalty(Tape& tape, const CriticFn& critic, const Tensor& real, const Tensor& fake,
                        const std::vector<double>& weights) {
  require_same_shape(real, fake, "gradient_penalty");
  if (real.rank() < 2) throw ShapeError("gradient_penalty: need a batch of samples");
  const std::size_t n = real.dim(0);
  if (weights.size() != n) throw ShapeError("gradient_penalty: one weight per sample required");

  const std::size_t per = real.size() / n;
  std::vector<double> mixed(real.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double e = weights[i];
    for (std::size_t j = i * per; j < (i + 1) * per; ++j) {
      mixed[j] = e * real[j] + (1.0 - e) * fake[j];
    }
  }
  const Tensor x_hat = tape.variable(Tensor(real.shape(), std::move(mixed)));
  const Tensor score = sum(critic(x_hat));
  const Tensor wrt[] = {x_hat};
  const Tensor grad = score.tracked() ? tape.gradients(score, wrt, true)[0]
                                      : Tensor(x_hat.shape(), 0.0);

  const Tensor norm = sqrt(reduce(square(grad), sample_axes(grad), ReduceKind::kSum));
  return mean(square(sub(norm, Tensor::scalar(1.0))));
}

Tensor gradient_penalty(Tape& tape, const CriticFn& critic, const Tensor& real, const Tensor& fake,
                        std::uint64_t seed) {
  require_same_shape(real, fake, "gradient_penalty");
  Rng rng(seed);
  std::vector<double> weights(real.dim(0));
  for (auto& w : weights) w = rng.uniform();
  return gradient_penalty(tape, critic, real, fake, weights);
}

CriticLoss critic_loss(Tape& tape, const CriticFn& critic, const Tensor& real, const Tensor& fake,
                       double lambda, std::uint64_t seed) {
  require_same_shape(real, fake, "critic_loss");
  const Tensor mean_real = mean(critic(real));
  const Tensor mean_fake = mean(critic(fake));
  const Tensor penalty = gradient_penalty(tape, critic, real, fake, seed);
  const Tensor objective = add(sub(mean_fake, mean_real), scale(penalty, lambda));

  CriticLoss out;
  out.parts.mean_real = mean_real.item();
  out.parts.mean_fake = mean_fake.item();
  out.parts.penalty = penalty.item();
  out.parts.lambda = lambda;
  out.parts.total = objective.item();
  out.objective = objective;
  return out;
}

Tensor generator_loss(const CriticFn& critic, const Tensor& fake) {
  return negate(mean(critic(fake)));
}

double wasserstein_estimate(const CriticLossParts& parts) { return parts.mean_fake - parts.mean_real; }

PerceptualLossNet::PerceptualLossNet(std::vector<PerceptualStage> stages,
                                     std::array<double, 3> weights)
    : stages_(std::move(stages)), weights_(weights) {
  if (stages_.size() != 3) throw std::invalid_argument("perceptual net needs exactly three stages");
  const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("perceptual tap weights must sum to 1");
  }
  for (std::size_t i = 1; i < stages_.size(); ++i) {
    if (stages_[i].kernel.dim(1) != stages_[i - 1].kernel.dim(0)) {
      throw ShapeError("perceptual net stages do not chain");
    }
  }
}

PerceptualLossNet PerceptualLossNet::seeded(std::uint64_t seed, std::size_t in_channels,
                                            std::array<std::size_t, 3> widths,
                                            std::array<double, 3> weights) {
  Rng rng(seed);
  auto kernel = [&](std::size_t cout, std::size_t cin, std::size_t k) {
    const double sd = std::sqrt(2.0 / static_cast<double>(cin * k * k));
    std::vector<double> v(cout * cin * k * k);
    for (auto& x : v) x = rng.normal(0.0, sd);
    return Tensor({cout, cin, k, k}, std::move(v));
  };
  std::vector<PerceptualStage> stages;
  stages.push_back({kernel(widths[0], in_channels, 3), {1, 1}, true});
  stages.push_back({kernel(widths[1], widths[0], 4), {2, 1}, true});
  stages.push_back({kernel(widths[2], widths[1], 4), {2, 1}, true});
  return PerceptualLossNet(std::move(stages), weights);
}

std::size_t PerceptualLossNet::in_channels() const { return stages_.front().kernel.dim(1); }

std::vector<Tensor> PerceptualLossNet::taps(const Tensor& images) const {
  std::vector<Tensor> out;
  Tensor h = images;
  for (const auto& stage : stages_) {
    h = conv2d(h, stage.kernel, stage.geometry);
    if (stage.relu) h = relu(h);
    out.push_back(h);
  }
  return out;
}

Tensor perceptual_loss(const PerceptualLossNet& net, const Tensor& generated, const Tensor& target) {
  require_same_shape(generated, target, "perceptual_loss");
  if (generated.rank() != 4 || generated.dim(1) != net.in_channels()) {
    throw ShapeError("perceptual_loss: expected [N," + std::to_string(net.in_channels()) +
                     ",H,W] images, got " + to_string(generated.shape()));
  }
  const auto gen_taps = net.taps(generated);
  const auto tgt_taps = net.taps(target);
  Tensor total;
  for (std::size_t j = 0; j < gen_taps.size(); ++j) {
    const Tensor term = scale(mean(square(sub(gen_taps[j], tgt_taps[j]))), net.weights()[j]);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

}  // namespace genhead
