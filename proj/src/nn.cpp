#include "genhead/nn.hpp"

#include <algorithm>
#include <cmath>

#include "genhead/rng.hpp"

namespace genhead {

namespace {

std::vector<std::size_t> non_channel_axes(std::size_t rank) {
  std::vector<std::size_t> axes;
  for (std::size_t i = 0; i < rank; ++i) {
    if (i != 1) axes.push_back(i);
  }
  return axes;
}

void check_bn_input(const Tensor& x, const BatchNormState& s) {
  if (x.rank() < 2) throw ShapeError("batchnorm: input must have a channel axis");
  if (x.dim(1) != s.channels()) {
    throw ShapeError("batchnorm: input has " + std::to_string(x.dim(1)) + " channels, state has " +
                     std::to_string(s.channels()));
  }
}

}  // namespace

BatchNormState::BatchNormState(std::size_t channels, std::string name)
    : gamma(name + ".gamma", Tensor({channels}, 1.0)),
      beta(name + ".beta", Tensor({channels}, 0.0)),
      running_mean(channels, 0.0),
      running_var(channels, 0.0) {}

void BatchNormState::validate() const {
  const std::size_t c = channels();
  if (gamma.value.size() != c || beta.value.size() != c || running_var.size() != c) {
    throw ShapeError("batchnorm state arrays disagree on channel count");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("batchnorm eps must be positive");
  if (!(momentum > 0.0 && momentum < 1.0)) {
    throw std::invalid_argument("batchnorm momentum must lie in (0,1)");
  }
  for (double v : running_var) {
    if (v < 0.0) throw std::invalid_argument("batchnorm running variance is negative");
  }
}

Tensor batchnorm_forward_train(Tape& tape, const Tensor& x, BatchNormState& s) {
  if (s.mode != NormMode::kTrain) throw std::logic_error("batchnorm_forward_train in infer mode");
  check_bn_input(x, s);
  const std::size_t count = x.size() / s.channels();
  if (count < 2) {
    throw std::invalid_argument("batchnorm: need at least 2 values per channel, got " +
                                std::to_string(count));
  }
  const auto axes = non_channel_axes(x.rank());
  const Tensor gamma = tape.watch(s.gamma);
  const Tensor beta = tape.watch(s.beta);

  const Tensor mu = reduce(x, axes, ReduceKind::kMean);
  const Tensor centered = sub(x, mu);
  const Tensor var = reduce(square(centered), axes, ReduceKind::kMean);
  const Tensor normalized = div(centered, sqrt(add(var, Tensor::scalar(s.eps))));

  for (std::size_t c = 0; c < s.channels(); ++c) {
    s.running_mean[c] = s.momentum * s.running_mean[c] + (1.0 - s.momentum) * mu[c];
    s.running_var[c] = s.momentum * s.running_var[c] + (1.0 - s.momentum) * var[c];
  }
  return add(mul(normalized, gamma), beta);
}

Tensor batchnorm_forward_infer(Tape& tape, const Tensor& x, BatchNormState& s) {
  if (s.mode != NormMode::kInfer) throw std::logic_error("batchnorm_forward_infer in train mode");
  check_bn_input(x, s);
  if (std::all_of(s.running_var.begin(), s.running_var.end(), [](double v) { return v == 0.0; })) {
    throw std::logic_error("batchnorm: running statistics were never populated");
  }
  std::vector<double> inv(s.channels());
  for (std::size_t c = 0; c < inv.size(); ++c) inv[c] = 1.0 / std::sqrt(s.running_var[c] + s.eps);
  const Tensor mu({s.channels()}, s.running_mean);
  const Tensor inv_std({s.channels()}, std::move(inv));
  const Tensor gamma = tape.watch(s.gamma);
  const Tensor beta = tape.watch(s.beta);
  return add(mul(mul(sub(x, mu), inv_std), gamma), beta);
}

Tensor batchnorm_forward(Tape& tape, const Tensor& x, BatchNormState& s) {
  return s.mode == NormMode::kTrain ? batchnorm_forward_train(tape, x, s)
                                    : batchnorm_forward_infer(tape, x, s);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() < 2) throw ShapeError("layer_norm: input must have a batch axis");
  const std::size_t features = x.size() / x.dim(0);
  if (features < 2) {
    throw std::invalid_argument("layer_norm: need at least 2 features per sample");
  }
  std::vector<std::size_t> axes;
  for (std::size_t i = 1; i < x.rank(); ++i) axes.push_back(i);

  const Tensor mu = expand(reduce(x, axes, ReduceKind::kMean, true), x.shape());
  const Tensor centered = sub(x, mu);
  const Tensor var = reduce(square(centered), axes, ReduceKind::kMean, true);
  const Tensor stddev = expand(sqrt(add(var, Tensor::scalar(eps))), x.shape());
  return add(mul(div(centered, stddev), gain), bias);
}

// ---------------------------------------------------------------------------

void adam_step(std::span<Parameter* const> params, AdamState& st) {
  const auto& cfg = st.config;
  if (st.m.empty() && st.v.empty()) {
    for (const Parameter* p : params) {
      st.m.emplace_back(p->value.size(), 0.0);
      st.v.emplace_back(p->value.size(), 0.0);
    }
  }
  if (st.m.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(st.m.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (st.m[i].size() != p.value.size() || p.grad.size() != p.value.size()) {
      throw ShapeError("adam_step: shape mismatch for parameter '" + p.name + "'");
    }
  }

  ++st.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    auto& m = st.m[i];
    auto& v = st.v[i];
    std::vector<double> next(p.value.values().begin(), p.value.values().end());
    for (std::size_t j = 0; j < next.size(); ++j) {
      const double g = p.grad[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      next[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
    // Fresh buffer: tensors captured by earlier tapes keep their values.
    p.value = Tensor(p.value.shape(), std::move(next));
  }
}

// ---------------------------------------------------------------------------

LayerSpec LayerSpec::conv(std::size_t cin, std::size_t cout, std::size_t k, std::size_t s,
                          std::size_t p) {
  LayerSpec l;
  l.kind = LayerKind::kConv;
  l.in_channels = cin;
  l.out_channels = cout;
  l.kernel = k;
  l.stride = s;
  l.pad = p;
  return l;
}

LayerSpec LayerSpec::conv_transpose(std::size_t cin, std::size_t cout, std::size_t k,
                                    std::size_t s, std::size_t p) {
  LayerSpec l = conv(cin, cout, k, s, p);
  l.kind = LayerKind::kConvTranspose;
  return l;
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
  LayerSpec l;
  l.kind = LayerKind::kDense;
  l.in_channels = in;
  l.out_channels = out;
  return l;
}

LayerSpec LayerSpec::batch_norm(std::size_t channels) {
  LayerSpec l;
  l.kind = LayerKind::kBatchNorm;
  l.out_channels = channels;
  l.in_channels = channels;
  return l;
}

LayerSpec LayerSpec::layer_norm(std::size_t channels) {
  LayerSpec l = batch_norm(channels);
  l.kind = LayerKind::kLayerNorm;
  return l;
}

LayerSpec LayerSpec::act(ActivationKind a) {
  LayerSpec l;
  l.kind = LayerKind::kActivation;
  l.activation = a;
  return l;
}

LayerSpec LayerSpec::reshape_to(Shape per_sample) {
  LayerSpec l;
  l.kind = LayerKind::kReshape;
  l.reshape = std::move(per_sample);
  return l;
}

Shape LayerSpec::output_shape(const Shape& in) const {
  auto fail = [&](const std::string& why) -> Shape {
    throw ShapeError("layer expects " + why + ", got per-sample shape " + to_string(in));
  };
  switch (kind) {
    case LayerKind::kConv: {
      if (in.size() != 3 || in[0] != in_channels) {
        return fail("[" + std::to_string(in_channels) + ",H,W]");
      }
      const Conv2dGeometry g{stride, pad};
      return {out_channels, conv_output_size(in[1], kernel, g), conv_output_size(in[2], kernel, g)};
    }
    case LayerKind::kConvTranspose: {
      if (in.size() != 3 || in[0] != in_channels) {
        return fail("[" + std::to_string(in_channels) + ",H,W]");
      }
      auto size = [&](std::size_t n) {
        const auto s = (static_cast<std::ptrdiff_t>(n) - 1) * static_cast<std::ptrdiff_t>(stride) -
                       2 * static_cast<std::ptrdiff_t>(pad) + static_cast<std::ptrdiff_t>(kernel);
        if (s <= 0) throw ShapeError("conv-transpose layer: non-positive output size");
        return static_cast<std::size_t>(s);
      };
      return {out_channels, size(in[1]), size(in[2])};
    }
    case LayerKind::kDense:
      if (in.size() != 1 || in[0] != in_channels) return fail("[" + std::to_string(in_channels) + "]");
      return {out_channels};
    case LayerKind::kBatchNorm:
    case LayerKind::kLayerNorm:
      if (in.empty() || in[0] != out_channels) {
        return fail(std::to_string(out_channels) + " channels");
      }
      return in;
    case LayerKind::kActivation:
      return in;
    case LayerKind::kReshape:
      if (numel(reshape) != numel(in)) return fail(std::to_string(numel(reshape)) + " elements");
      return reshape;
  }
  return in;
}

std::vector<Parameter> init_weights(const LayerSpec& spec, std::uint64_t seed,
                                    const std::string& prefix) {
  Rng rng(seed);
  auto normal_tensor = [&](Shape shape) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = rng.normal(0.0, kInitStddev);
    return Tensor(std::move(shape), std::move(v));
  };
  std::vector<Parameter> out;
  switch (spec.kind) {
    case LayerKind::kConv:
      out.emplace_back(prefix + "weight", normal_tensor({spec.out_channels, spec.in_channels,
                                                         spec.kernel, spec.kernel}));
      if (spec.bias) out.emplace_back(prefix + "bias", Tensor({spec.out_channels}, 0.0));
      break;
    case LayerKind::kConvTranspose:
      out.emplace_back(prefix + "weight", normal_tensor({spec.in_channels, spec.out_channels,
                                                         spec.kernel, spec.kernel}));
      if (spec.bias) out.emplace_back(prefix + "bias", Tensor({spec.out_channels}, 0.0));
      break;
    case LayerKind::kDense:
      out.emplace_back(prefix + "weight", normal_tensor({spec.in_channels, spec.out_channels}));
      if (spec.bias) out.emplace_back(prefix + "bias", Tensor({spec.out_channels}, 0.0));
      break;
    case LayerKind::kBatchNorm:
      out.emplace_back(prefix + "gamma", Tensor({spec.out_channels}, 1.0));
      out.emplace_back(prefix + "beta", Tensor({spec.out_channels}, 0.0));
      break;
    case LayerKind::kLayerNorm:
      out.emplace_back(prefix + "gain", Tensor({spec.out_channels}, 1.0));
      out.emplace_back(prefix + "bias", Tensor({spec.out_channels}, 0.0));
      break;
    case LayerKind::kActivation:
    case LayerKind::kReshape:
      break;
  }
  return out;
}

Layer::Layer(LayerSpec spec, std::uint64_t seed, const std::string& prefix)
    : spec_(std::move(spec)) {
  auto params = init_weights(spec_, seed, prefix);
  if (spec_.kind == LayerKind::kBatchNorm) {
    bn_.emplace(spec_.out_channels);
    bn_->gamma = std::move(params[0]);
    bn_->beta = std::move(params[1]);
  } else {
    params_ = std::move(params);
  }
}

Tensor Layer::forward(Tape& tape, const Tensor& x) {
  switch (spec_.kind) {
    case LayerKind::kConv: {
      Tensor y = conv2d(x, tape.watch(params_[0]), {spec_.stride, spec_.pad});
      return spec_.bias ? add(y, tape.watch(params_[1])) : y;
    }
    case LayerKind::kConvTranspose: {
      Tensor y = conv_transpose2d(x, tape.watch(params_[0]), {spec_.stride, spec_.pad});
      return spec_.bias ? add(y, tape.watch(params_[1])) : y;
    }
    case LayerKind::kDense: {
      if (x.rank() != 2) throw ShapeError("dense layer expects [N,F] input, got " + to_string(x.shape()));
      Tensor y = matmul(x, tape.watch(params_[0]));
      return spec_.bias ? add(y, tape.watch(params_[1])) : y;
    }
    case LayerKind::kBatchNorm:
      return batchnorm_forward(tape, x, *bn_);
    case LayerKind::kLayerNorm:
      return layer_norm(x, tape.watch(params_[0]), tape.watch(params_[1]));
    case LayerKind::kActivation:
      return activation(x, spec_.activation);
    case LayerKind::kReshape: {
      Shape s{x.dim(0)};
      s.insert(s.end(), spec_.reshape.begin(), spec_.reshape.end());
      return reshape(x, std::move(s));
    }
  }
  return x;
}

std::vector<Parameter*> Layer::parameters() {
  std::vector<Parameter*> out;
  if (bn_) {
    out.push_back(&bn_->gamma);
    out.push_back(&bn_->beta);
  }
  for (auto& p : params_) out.push_back(&p);
  return out;
}

Network::Network(std::vector<LayerSpec> specs, const Shape& sample_shape, std::uint64_t seed,
                 const std::string& name)
    : sample_shape_(sample_shape) {
  Shape shape = sample_shape;
  layers_.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    shape = specs[i].output_shape(shape);
    layers_.emplace_back(std::move(specs[i]), derive_seed(seed, i),
                         name + "." + std::to_string(i) + ".");
  }
  output_shape_ = shape;
}

Tensor Network::forward(Tape& tape, const Tensor& x) {
  if (x.rank() != sample_shape_.size() + 1 ||
      !std::equal(sample_shape_.begin(), sample_shape_.end(), x.shape().begin() + 1)) {
    throw ShapeError("network expects per-sample shape " + to_string(sample_shape_) + ", got " +
                     to_string(x.shape()));
  }
  Tensor h = x;
  for (auto& layer : layers_) h = layer.forward(tape, h);
  return h;
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers_) {
    for (auto* p : layer.parameters()) out.push_back(p);
  }
  return out;
}

std::vector<BatchNormState*> Network::batch_norms() {
  std::vector<BatchNormState*> out;
  for (auto& layer : layers_) {
    if (auto* bn = layer.batch_norm()) out.push_back(bn);
  }
  return out;
}

void Network::set_mode(NormMode mode) {
  for (auto* bn : batch_norms()) bn->mode = mode;
}

void Network::set_requires_grad(bool on) {
  for (auto* p : parameters()) p->requires_grad = on;
}

void Network::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

}  // namespace genhead
