#include <gtest/gtest.h>

#include <cmath>

#include "genhead/checkpoint.hpp"
#include "genhead/nn.hpp"
#include "oracle.hpp"

using namespace genhead;

namespace {

struct Moments {
  double mean;
  double std;
};

Moments channel_moments(const Tensor& t, std::size_t c) {
  const std::size_t n = t.dim(0), ch = t.dim(1), plane = t.size() / (n * ch);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < plane; ++k) acc += t[(i * ch + c) * plane + k];
  const double m = acc / double(n * plane);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < plane; ++k) sq += std::pow(t[(i * ch + c) * plane + k] - m, 2);
  return {m, std::sqrt(sq / double(n * plane))};
}

}  // namespace

TEST(BatchNorm, NormalizesEachChannel) {
  // N*H*W = 8*2*2 = 32 values per channel.
  const Tensor x = oracle::random_tensor(21, {8, 3, 2, 2}, -3.0, 5.0);
  BatchNormState s(3);
  Tape tape;
  const Tensor y = batchnorm_forward_train(tape, x, s);
  for (std::size_t c = 0; c < 3; ++c) {
    const Moments in = channel_moments(x, c);
    const Moments out = channel_moments(y, c);
    EXPECT_LT(std::abs(out.mean), 1e-6);
    // Unit std up to the eps in the denominator.
    EXPECT_NEAR(out.std, in.std / std::sqrt(in.std * in.std + kNormEps), 1e-12);
    EXPECT_LT(std::abs(out.std - 1.0), 1e-4);
  }
}

TEST(BatchNorm, AffineShiftSetsMean) {
  const Tensor x = oracle::random_tensor(22, {4, 2, 3, 3}, -2.0, 2.0);
  BatchNormState s(2);
  s.gamma.value = Tensor({2}, {-1.7, 0.3});
  s.beta.value = Tensor({2}, {0.42, -3.1});
  Tape tape;
  const Tensor y = batchnorm_forward_train(tape, x, s);
  EXPECT_NEAR(channel_moments(y, 0).mean, 0.42, 1e-6);
  EXPECT_NEAR(channel_moments(y, 1).mean, -3.1, 1e-6);
}

TEST(BatchNorm, RunningStatisticsBlend) {
  const Tensor x = oracle::random_tensor(23, {6, 2, 2, 2}, 0.0, 4.0);
  BatchNormState s(2);
  Tape tape;
  batchnorm_forward_train(tape, x, s);
  for (std::size_t c = 0; c < 2; ++c) {
    const Moments m = channel_moments(x, c);
    EXPECT_NEAR(s.running_mean[c], 0.1 * m.mean, 1e-12);
    EXPECT_NEAR(s.running_var[c], 0.1 * m.std * m.std, 1e-12);
  }
  batchnorm_forward_train(tape, x, s);
  const Moments m0 = channel_moments(x, 0);
  EXPECT_NEAR(s.running_mean[0], 0.9 * 0.1 * m0.mean + 0.1 * m0.mean, 1e-12);
}

TEST(BatchNorm, InferUsesRunningStatistics) {
  Tape tape;
  const Tensor x({2, 1}, {1.0, 3.0});
  BatchNormState s(1);
  s.mode = NormMode::kInfer;
  EXPECT_THROW(batchnorm_forward(tape, x, s), std::logic_error);  // never populated
  s.running_mean = {1.0};
  s.running_var = {4.0};
  const Tensor y = batchnorm_forward(tape, x, s);
  EXPECT_NEAR(y[0], 0.0, 1e-12);
  EXPECT_NEAR(y[1], 2.0 / std::sqrt(4.0 + kNormEps), 1e-12);
  EXPECT_DOUBLE_EQ(s.running_mean[0], 1.0);
}

TEST(BatchNorm, RejectsSingleValuePerChannel) {
  BatchNormState s(2);
  Tape tape;
  EXPECT_ANY_THROW(batchnorm_forward_train(tape, Tensor({1, 2}, {1.0, 2.0}), s));
  EXPECT_THROW(batchnorm_forward_train(tape, Tensor({4, 3}, 0.0), s), ShapeError);
}

TEST(LayerNorm, PerSampleStatistics) {
  const Tensor x = oracle::random_tensor(24, {3, 2, 2, 2}, -4.0, 4.0);
  const Tensor y = layer_norm(x, Tensor({2}, 1.0), Tensor({2}, 0.0));
  for (std::size_t n = 0; n < 3; ++n) {
    double m = 0.0, sq = 0.0;
    for (std::size_t k = 0; k < 8; ++k) m += y[n * 8 + k];
    m /= 8.0;
    for (std::size_t k = 0; k < 8; ++k) sq += std::pow(y[n * 8 + k] - m, 2);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(sq / 8.0), 1.0, 1e-4);
  }
}

// Hand-computed two-step sequence with lr 1e-4, beta1 0.9, beta2 0.99, eps 1e-8.
TEST(Adam, TwoStepSequence) {
  Parameter p("w", Tensor({2}, {1.0, -2.0}));
  AdamState st(AdamConfig{1e-4, 0.9, 0.99, 1e-8});
  Parameter* ps[] = {&p};
  p.grad = {0.5, -0.1};
  adam_step(ps, st);
  EXPECT_NEAR(p.value[0], 0.999900000002, 1e-12);
  EXPECT_NEAR(p.value[1], -1.99990000001, 1e-12);
  p.grad = {0.2, 0.3};
  adam_step(ps, st);
  EXPECT_NEAR(p.value[0], 0.9998099948524285, 1e-12);
  EXPECT_NEAR(p.value[1], -1.9999493298229265, 1e-12);
  EXPECT_EQ(st.t, 2);
}

TEST(Adam, ZeroLearningRateIsNoOp) {
  Parameter p("w", Tensor({3}, {0.1, 0.2, 0.3}));
  p.grad = {5.0, -1.0, 0.0};
  AdamState st(AdamConfig{0.0, 0.9, 0.99, 1e-8});
  Parameter* ps[] = {&p};
  adam_step(ps, st);
  EXPECT_EQ(p.value[0], 0.1);
  EXPECT_EQ(p.value[1], 0.2);
  EXPECT_EQ(p.value[2], 0.3);
}

TEST(Adam, ShapeMismatchThrows) {
  Parameter a("a", Tensor({2}, 0.0)), b("b", Tensor({3}, 0.0));
  a.grad = {0, 0};
  b.grad = {0, 0, 0};
  AdamState st;
  Parameter* first[] = {&a};
  adam_step(first, st);
  Parameter* second[] = {&b};
  EXPECT_THROW(adam_step(second, st), ShapeError);
  Parameter* both[] = {&a, &b};
  EXPECT_THROW(adam_step(both, st), ShapeError);
}

TEST(Adam, UpdateDoesNotMutateCapturedValues) {
  Parameter p("w", Tensor({1}, {1.0}));
  const Tensor before = p.value;
  p.grad = {1.0};
  AdamState st;
  Parameter* ps[] = {&p};
  adam_step(ps, st);
  EXPECT_EQ(before[0], 1.0);
  EXPECT_NE(p.value[0], 1.0);
}

TEST(Layers, OutputShapes) {
  EXPECT_EQ(LayerSpec::conv(3, 8, 4, 2, 1).output_shape({3, 16, 16}), (Shape{8, 8, 8}));
  EXPECT_EQ(LayerSpec::conv_transpose(8, 4, 4, 2, 1).output_shape({8, 4, 4}), (Shape{4, 8, 8}));
  EXPECT_EQ(LayerSpec::dense(10, 6).output_shape({10}), (Shape{6}));
  EXPECT_EQ(LayerSpec::reshape_to({2, 3}).output_shape({6}), (Shape{2, 3}));
  EXPECT_THROW(LayerSpec::reshape_to({4}).output_shape({6}), ShapeError);
  EXPECT_THROW(LayerSpec::conv(4, 8, 3, 1, 1).output_shape({3, 8, 8}), ShapeError);
}

TEST(Layers, InitializationStatistics) {
  const auto params = init_weights(LayerSpec::dense(200, 100), 3);
  ASSERT_EQ(params.size(), 2u);
  double m = 0.0, sq = 0.0;
  for (double v : params[0].value.values()) m += v;
  m /= double(params[0].value.size());
  for (double v : params[0].value.values()) sq += (v - m) * (v - m);
  EXPECT_NEAR(m, 0.0, 1e-3);
  EXPECT_NEAR(std::sqrt(sq / double(params[0].value.size())), kInitStddev, 1e-3);
  for (double v : params[1].value.values()) EXPECT_EQ(v, 0.0);
}

TEST(Network, DeterministicFromSeedAndShapeChecked) {
  const std::vector<LayerSpec> specs = {LayerSpec::dense(4, 8), LayerSpec::batch_norm(8),
                                        LayerSpec::act(ActivationKind::kRelu), LayerSpec::dense(8, 2)};
  Network a(specs, {4}, 77), b(specs, {4}, 77), c(specs, {4}, 78);
  EXPECT_EQ(a.output_sample_shape(), (Shape{2}));
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t j = 0; j < pa[i]->value.size(); ++j) EXPECT_EQ(pa[i]->value[j], pb[i]->value[j]);
  }
  EXPECT_NE(pa[0]->value[0], pc[0]->value[0]);
  EXPECT_THROW(Network(specs, {5}, 1), ShapeError);

  Tape tape;
  const Tensor y = a.forward(tape, oracle::random_tensor(1, {3, 4}));
  EXPECT_EQ(y.shape(), (Shape{3, 2}));
  EXPECT_THROW(a.forward(tape, Tensor({3, 5}, 0.0)), ShapeError);
}

TEST(Checkpoint, RoundTrip) {
  const auto dir = oracle::scratch_dir("checkpoint");
  Parameter a("layer.w", oracle::random_tensor(31, {2, 3}));
  Parameter b("layer.b", Tensor({3}, {1e-300, -0.0, 12345.678}));
  const Parameter* out[] = {&a, &b};
  save_checkpoint(dir / "p.ckpt", out);

  Parameter a2("layer.w", Tensor({2, 3}, 0.0));
  Parameter b2("layer.b", Tensor({3}, 0.0));
  Parameter* in[] = {&b2, &a2};
  load_checkpoint(dir / "p.ckpt", in);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(a2.value[i], a.value[i]);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(b2.value[i], b.value[i]);

  Parameter wrong("layer.w", Tensor({3, 2}, 0.0));
  Parameter* bad[] = {&wrong};
  EXPECT_ANY_THROW(load_checkpoint(dir / "p.ckpt", bad));
  Parameter missing("other", Tensor({1}, 0.0));
  Parameter* miss[] = {&missing};
  EXPECT_ANY_THROW(load_checkpoint(dir / "p.ckpt", miss));
}
