#include "genhead/gradient_suite.hpp"

#include <algorithm>
#include <cmath>

#include "genhead/losses.hpp"
#include "genhead/nn.hpp"
#include "genhead/ops.hpp"
#include "genhead/rng.hpp"

namespace genhead {

namespace {

constexpr double kStep = 1e-5;
constexpr double kFloor = 1e-4;

Tensor normal_tensor(Rng& rng, Shape shape, double sd = 1.0) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.normal(0.0, sd);
  return Tensor(std::move(shape), std::move(v));
}

// Values at least `gap` away from every point in `kinks` so that central
// differences never straddle a kink of relu/leaky/clip.
Tensor kink_free(Rng& rng, Shape shape, std::vector<double> kinks, double sd = 1.0,
                 double gap = 1e-2) {
  std::vector<double> v(numel(shape));
  for (double& x : v) {
    do {
      x = rng.normal(0.0, sd);
    } while (std::any_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(x - k) < gap; }));
  }
  return Tensor(std::move(shape), std::move(v));
}

Tensor positive_tensor(Rng& rng, Shape shape, double lo, double hi) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = lo + (hi - lo) * rng.uniform();
  return Tensor(std::move(shape), std::move(v));
}

// Scalar probe <y, w> with a fixed random weight so every output entry matters.
Tensor contract(const Tensor& y, const Tensor& w) { return sum(mul(y, w)); }

// Gradient of a scalar function of the tape w.r.t. a bound parameter.
GradCheckReport param_check(const std::function<Tensor(Tape&)>& f, Parameter& p, double tol) {
  p.value = p.value.clone();
  p.zero_grad();
  std::vector<double> analytic;
  {
    Tape tape;
    tape.backward(f(tape));
    analytic = p.grad;
  }
  GradCheckReport report;
  auto pv = p.value.mutable_values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double orig = pv[i];
    Tape up_tape, down_tape;
    pv[i] = orig + kStep;
    const double up = f(up_tape).item();
    pv[i] = orig - kStep;
    const double down = f(down_tape).item();
    pv[i] = orig;
    const double numeric = (up - down) / (2.0 * kStep);
    const double a = i < analytic.size() ? analytic[i] : 0.0;
    const double abs_err = std::abs(a - numeric);
    const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), kFloor});
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

// Tape of a tracked tensor, or a fresh one owned by `local`.
Tape& tape_of(const Tensor& t, Tape& local) { return t.tracked() ? *t.tape() : local; }

}  // namespace

std::vector<GradientCase> run_gradient_suite(std::uint64_t seed, double tol) {
  Rng rng(seed);
  std::vector<GradientCase> out;
  auto check = [&](std::string name, const ScalarFn& f, const Tensor& x) {
    out.push_back({std::move(name), grad_check(f, x, kStep, tol, kFloor)});
  };

  // Elementwise and broadcasting.
  {
    const Tensor a = normal_tensor(rng, {2, 3, 2, 2});
    const Tensor b = normal_tensor(rng, {2, 3, 2, 2});
    const Tensor c = normal_tensor(rng, {3});
    const Tensor s = normal_tensor(rng, {1});
    const Tensor w = normal_tensor(rng, {2, 3, 2, 2});
    const Tensor pos = positive_tensor(rng, {2, 3, 2, 2}, 0.5, 2.0);
    check("add[a]", [&](const Tensor& x) { return contract(add(x, b), w); }, a);
    check("add[channel]", [&](const Tensor& x) { return contract(add(a, x), w); }, c);
    check("sub[b]", [&](const Tensor& x) { return contract(sub(a, x), w); }, b);
    check("sub[scalar]", [&](const Tensor& x) { return contract(sub(a, x), w); }, s);
    check("mul[a]", [&](const Tensor& x) { return contract(mul(x, b), w); }, a);
    check("mul[channel]", [&](const Tensor& x) { return contract(mul(x, a), w); }, c);
    check("div[numerator]", [&](const Tensor& x) { return contract(div(x, pos), w); }, a);
    check("div[denominator]", [&](const Tensor& x) { return contract(div(a, x), w); }, pos);
    check("scale", [&](const Tensor& x) { return contract(scale(x, -1.7), w); }, a);
    check("negate", [&](const Tensor& x) { return contract(negate(x), w); }, a);
    check("square", [&](const Tensor& x) { return contract(square(x), w); }, a);
    check("sqrt", [&](const Tensor& x) { return contract(sqrt(x), w); }, pos);
  }

  // Activations.
  {
    const Tensor w = normal_tensor(rng, {4, 5});
    check("tanh", [&](const Tensor& x) { return contract(tanh(x), w); }, normal_tensor(rng, {4, 5}, 1.5));
    check("relu", [&](const Tensor& x) { return contract(relu(x), w); }, kink_free(rng, {4, 5}, {0.0}));
    check("leaky_relu", [&](const Tensor& x) { return contract(leaky_relu(x), w); },
          kink_free(rng, {4, 5}, {0.0}));
    check("clip", [&](const Tensor& x) { return contract(clip(x), w); },
          kink_free(rng, {4, 5}, {-1.0, 1.0}, 1.2));
  }

  // Linear algebra and shape ops.
  {
    const Tensor a = normal_tensor(rng, {3, 4});
    const Tensor b = normal_tensor(rng, {4, 5});
    const Tensor w = normal_tensor(rng, {3, 5});
    check("matmul[a]", [&](const Tensor& x) { return contract(matmul(x, b), w); }, a);
    check("matmul[b]", [&](const Tensor& x) { return contract(matmul(a, x), w); }, b);
    const Tensor wt = normal_tensor(rng, {4, 3});
    check("transpose", [&](const Tensor& x) { return contract(transpose(x), wt); }, a);
    const Tensor wr = normal_tensor(rng, {2, 6});
    check("reshape", [&](const Tensor& x) { return contract(reshape(x, {2, 6}), wr); }, a);
    const Tensor we = normal_tensor(rng, {3, 4, 2});
    check("expand", [&](const Tensor& x) { return contract(expand(x, {3, 4, 2}), we); },
          normal_tensor(rng, {3, 1, 2}));
  }

  // Reductions.
  {
    const Tensor x0 = normal_tensor(rng, {2, 3, 4});
    const Tensor w02 = normal_tensor(rng, {3});
    const Tensor wk = normal_tensor(rng, {2, 1, 4});
    check("reduce_sum[0,2]",
          [&](const Tensor& x) { return contract(reduce(x, {0, 2}, ReduceKind::kSum), w02); }, x0);
    check("reduce_mean[1]keepdims",
          [&](const Tensor& x) { return contract(reduce(x, {1}, ReduceKind::kMean, true), wk); }, x0);
    check("mean", [&](const Tensor& x) { return scale(mean(x), 3.0); }, x0);
  }

  // Convolutions.
  {
    const Conv2dGeometry g{2, 1};
    const Tensor x = normal_tensor(rng, {2, 2, 6, 6});
    const Tensor k = normal_tensor(rng, {3, 2, 4, 4});
    const Tensor wy = normal_tensor(rng, {2, 3, 3, 3});
    check("conv2d[x]", [&](const Tensor& v) { return contract(conv2d(v, k, g), wy); }, x);
    check("conv2d[k]", [&](const Tensor& v) { return contract(conv2d(x, v, g), wy); }, k);
    const Tensor xt = normal_tensor(rng, {2, 3, 3, 3});
    const Tensor kt = normal_tensor(rng, {3, 2, 4, 4});
    const Tensor wt = normal_tensor(rng, {2, 2, 6, 6});
    check("conv_transpose2d[x]", [&](const Tensor& v) { return contract(conv_transpose2d(v, kt, g), wt); }, xt);
    check("conv_transpose2d[k]", [&](const Tensor& v) { return contract(conv_transpose2d(xt, v, g), wt); }, kt);
    const Tensor dy = normal_tensor(rng, {2, 3, 3, 3});
    const Tensor wk = normal_tensor(rng, {3, 2, 4, 4});
    check("conv2d_kernel_grad[x]",
          [&](const Tensor& v) { return contract(conv2d_kernel_grad(v, dy, {3, 2, 4, 4}, g), wk); }, x);
    check("conv2d_kernel_grad[dy]",
          [&](const Tensor& v) { return contract(conv2d_kernel_grad(x, v, {3, 2, 4, 4}, g), wk); }, dy);
    const Tensor x1 = normal_tensor(rng, {1, 2, 5, 5});
    const Tensor k1 = normal_tensor(rng, {2, 2, 3, 3});
    const Tensor w1 = normal_tensor(rng, {1, 2, 5, 5});
    check("conv2d_same[x]", [&](const Tensor& v) { return contract(conv2d(v, k1, {1, 1}), w1); }, x1);
  }

  // Batch normalization in training mode: through the input and both affine
  // parameters.
  {
    const Tensor x = normal_tensor(rng, {4, 3, 2, 2}, 2.0);
    const Tensor w = normal_tensor(rng, {4, 3, 2, 2});
    BatchNormState st(3);
    st.gamma.value = normal_tensor(rng, {3});
    st.beta.value = normal_tensor(rng, {3});
    check("batchnorm_train[x]",
          [&](const Tensor& v) {
            Tape local;
            return contract(batchnorm_forward_train(tape_of(v, local), v, st), w);
          },
          x);
    auto f = [&](Tape& tape) { return contract(batchnorm_forward_train(tape, x, st), w); };
    out.push_back({"batchnorm_train[gamma]", param_check(f, st.gamma, tol)});
    out.push_back({"batchnorm_train[beta]", param_check(f, st.beta, tol)});
    const Tensor x2 = normal_tensor(rng, {6, 4}, 1.5);
    const Tensor w2 = normal_tensor(rng, {6, 4});
    BatchNormState st2(4);
    check("batchnorm_train_dense[x]",
          [&](const Tensor& v) {
            Tape local;
            return contract(batchnorm_forward_train(tape_of(v, local), v, st2), w2);
          },
          x2);
  }

  // Layer normalization.
  {
    const Tensor x = normal_tensor(rng, {2, 3, 2, 2}, 1.5);
    const Tensor gain = normal_tensor(rng, {3});
    const Tensor bias = normal_tensor(rng, {3});
    const Tensor w = normal_tensor(rng, {2, 3, 2, 2});
    check("layer_norm[x]", [&](const Tensor& v) { return contract(layer_norm(v, gain, bias), w); }, x);
    check("layer_norm[gain]", [&](const Tensor& v) { return contract(layer_norm(x, v, bias), w); }, gain);
    check("layer_norm[bias]", [&](const Tensor& v) { return contract(layer_norm(x, gain, v), w); }, bias);
  }

  // Adversarial losses with a small conv -> layer-norm -> leaky -> dense critic.
  // The penalty is differentiated through its own gradient (second order).
  {
    const std::size_t n = 3;
    const Tensor real = normal_tensor(rng, {n, 2, 4, 4}, 0.5);
    const Tensor fake = normal_tensor(rng, {n, 2, 4, 4}, 0.5);
    const Tensor kernel = normal_tensor(rng, {3, 2, 4, 4}, 0.4);
    const Tensor gain = positive_tensor(rng, {3}, 0.5, 1.5);
    const Tensor bias = normal_tensor(rng, {3}, 0.1);
    const Tensor dense = normal_tensor(rng, {12, 1}, 0.5);
    const std::vector<double> mix = {0.25, 0.5, 0.8};
    auto critic_with = [&](const Tensor& k, const Tensor& d) {
      return [k, d, gain, bias, n](const Tensor& x) {
        const Tensor h = leaky_relu(layer_norm(conv2d(x, k, {2, 1}), gain, bias));
        return matmul(reshape(h, {n, 12}), d);
      };
    };
    check("gradient_penalty[kernel]",
          [&](const Tensor& v) {
            Tape local;
            return gradient_penalty(tape_of(v, local), critic_with(v, dense), real, fake, mix);
          },
          kernel);
    check("gradient_penalty[dense]",
          [&](const Tensor& v) {
            Tape local;
            return gradient_penalty(tape_of(v, local), critic_with(kernel, v), real, fake, mix);
          },
          dense);
    check("critic_loss[kernel]",
          [&](const Tensor& v) {
            Tape local;
            return critic_loss(tape_of(v, local), critic_with(v, dense), real, fake,
                               kGradientPenaltyWeight, 11)
                .objective;
          },
          kernel);
    check("generator_loss[fake]",
          [&](const Tensor& v) { return generator_loss(critic_with(kernel, dense), v); }, fake);
  }

  // Perceptual loss through the fixed feature network.
  {
    const PerceptualLossNet net = PerceptualLossNet::seeded(5, 3, {4, 4, 4});
    const Tensor target = normal_tensor(rng, {2, 3, 8, 8}, 0.5);
    check("perceptual_loss[generated]",
          [&](const Tensor& v) { return perceptual_loss(net, v, target); },
          normal_tensor(rng, {2, 3, 8, 8}, 0.5));
  }

  return out;
}

}  // namespace genhead
