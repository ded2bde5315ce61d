#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <optional>
#include <vector>

#include "genhead/ops.hpp"
#include "genhead/tensor.hpp"

namespace genhead {

constexpr double kNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.9;
constexpr double kInitStddev = 0.02;

enum class NormMode { kTrain, kInfer };

// Per-channel batch normalization state. gamma/beta are trainable; the running
// statistics start at zero and are blended as
//   running <- momentum * running + (1 - momentum) * batch
// using the biased (divide-by-count) variance.
struct BatchNormState {
  BatchNormState() = default;
  BatchNormState(std::size_t channels, std::string name = "bn");

  Parameter gamma;
  Parameter beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = kNormEps;
  double momentum = kBatchNormMomentum;
  NormMode mode = NormMode::kTrain;

  std::size_t channels() const { return running_mean.size(); }
  void validate() const;
};

// Normalizes each channel of x (rank >= 2, channel axis 1) with batch
// statistics over every other axis, then applies gamma/beta. Differentiates
// through the batch mean and variance. Updates the running statistics.
Tensor batchnorm_forward_train(Tape& tape, const Tensor& x, BatchNormState& s);
// Uses running statistics; leaves the statistics untouched.
Tensor batchnorm_forward_infer(Tape& tape, const Tensor& x, BatchNormState& s);
Tensor batchnorm_forward(Tape& tape, const Tensor& x, BatchNormState& s);

// Per-sample normalization over all non-batch axes followed by a per-channel
// affine. gain/bias have shape [C].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = kNormEps);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

struct AdamState {
  explicit AdamState(AdamConfig c = {}) : config(c) {}

  AdamConfig config;
  std::int64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One bias-corrected Adam update of every parameter from its grad.
// The moment buffers are sized on the first call and must keep matching.
void adam_step(std::span<Parameter* const> params, AdamState& st);

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

enum class LayerKind { kConv, kConvTranspose, kDense, kBatchNorm, kLayerNorm, kActivation, kReshape };

struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  std::size_t in_channels = 0;   // conv/conv-transpose/dense input features
  std::size_t out_channels = 0;  // conv/conv-transpose/dense outputs; bn/ln channels
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  bool bias = true;
  ActivationKind activation = ActivationKind::kRelu;
  Shape reshape;  // per-sample target shape for kReshape

  static LayerSpec conv(std::size_t cin, std::size_t cout, std::size_t k, std::size_t s,
                        std::size_t p);
  static LayerSpec conv_transpose(std::size_t cin, std::size_t cout, std::size_t k, std::size_t s,
                                  std::size_t p);
  static LayerSpec dense(std::size_t in, std::size_t out);
  static LayerSpec batch_norm(std::size_t channels);
  static LayerSpec layer_norm(std::size_t channels);
  static LayerSpec act(ActivationKind a);
  static LayerSpec reshape_to(Shape per_sample);

  // Shape of the output for a given input; throws ShapeError when incompatible.
  Shape output_shape(const Shape& input) const;
};

// Parameters for a spec: conv/dense weights ~ N(0, 0.02), biases 0,
// BN/LN scale 1 and shift 0. Weight layout: conv [Cout,Cin,K,K],
// conv-transpose [Cin,Cout,K,K], dense [in,out].
std::vector<Parameter> init_weights(const LayerSpec& spec, std::uint64_t seed,
                                    const std::string& prefix = "");

class Layer {
 public:
  Layer(LayerSpec spec, std::uint64_t seed, const std::string& prefix = "");

  Tensor forward(Tape& tape, const Tensor& x);
  const LayerSpec& spec() const { return spec_; }
  std::vector<Parameter*> parameters();
  BatchNormState* batch_norm() { return bn_ ? &*bn_ : nullptr; }
  const BatchNormState* batch_norm() const { return bn_ ? &*bn_ : nullptr; }

 private:
  LayerSpec spec_;
  std::vector<Parameter> params_;
  std::optional<BatchNormState> bn_;
};

// Ordered stack of layers, shape-checked at construction against a
// per-sample input shape.
class Network {
 public:
  Network() = default;
  Network(std::vector<LayerSpec> specs, const Shape& sample_shape, std::uint64_t seed,
          const std::string& name = "net");

  Tensor forward(Tape& tape, const Tensor& x);
  std::vector<Parameter*> parameters();
  std::vector<BatchNormState*> batch_norms();
  void set_mode(NormMode mode);
  void set_requires_grad(bool on);
  void zero_grad();

  const Shape& sample_shape() const { return sample_shape_; }
  const Shape& output_sample_shape() const { return output_shape_; }
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<Layer> layers_;
  Shape sample_shape_;
  Shape output_shape_;
};

}  // namespace genhead
