#include <gtest/gtest.h>

#include <cmath>

#include "genhead/ops.hpp"
#include "genhead/rng.hpp"
#include "oracle.hpp"

using namespace genhead;

namespace {

void expect_near_all(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "entry " << i;
}

}  // namespace

// Reference values from an independent splitmix64 implementation.
TEST(Rng, MatchesReferenceStream) {
  Rng r(0);
  EXPECT_EQ(r.next(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(r.next(), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(r.next(), 0x06c45d188009454fULL);

  Rng u(42);
  EXPECT_DOUBLE_EQ(u.uniform(), 0.7415648787718233);
  EXPECT_DOUBLE_EQ(u.uniform(), 0.1599103928769201);

  Rng g(7);
  EXPECT_NEAR(g.normal(), 0.9884743323187353, 1e-14);
  EXPECT_NEAR(g.normal(), -1.8642558067312274, 1e-14);

  Rng idx(5);
  const std::size_t expected[] = {8, 4, 3, 9, 1};
  for (std::size_t e : expected) EXPECT_EQ(idx.index(10), e);
}

TEST(Rng, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(9, 3), derive_seed(9, 3));
}

TEST(Tensor, ConstructionChecksSize) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 2}, 1.5);
  EXPECT_EQ(t.size(), 4u);
  EXPECT_THROW((void)t.item(), ShapeError);
  EXPECT_DOUBLE_EQ(Tensor::scalar(3.0).item(), 3.0);
}

TEST(Ops, BroadcastingRules) {
  const Tensor a = oracle::random_tensor(1, {2, 3, 2, 2});
  const Tensor c({3}, {10.0, 20.0, 30.0});
  const Tensor sum = add(a, c);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::size_t ch = (i / 4) % 3;
    EXPECT_DOUBLE_EQ(sum[i], a[i] + c[ch]);
  }
  const Tensor rs = sub(Tensor::scalar(1.0), a);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_DOUBLE_EQ(rs[i], 1.0 - a[i]);
  EXPECT_THROW(add(a, Tensor({4}, 0.0)), ShapeError);
  EXPECT_THROW(mul(Tensor({2, 3}, 0.0), Tensor({3, 2}, 0.0)), ShapeError);
}

TEST(Ops, SqrtRejectsNegative) {
  EXPECT_THROW(genhead::sqrt(Tensor({2}, {1.0, -1e-12})), DomainError);
  Tape tape;
  const Tensor x = tape.variable(Tensor({2}, {0.0, 4.0}));
  const Tensor y = sum(genhead::sqrt(x));
  const Tensor wrt[] = {x};
  const Tensor g = tape.gradients(y, wrt)[0];
  EXPECT_EQ(g[0], 0.0);
  EXPECT_DOUBLE_EQ(g[1], 0.25);
}

TEST(Ops, MatmulMatchesNaiveLoops) {
  const Tensor a = oracle::random_tensor(2, {5, 7});
  const Tensor b = oracle::random_tensor(3, {7, 4});
  expect_near_all(matmul(a, b), oracle::matmul(a, b), 1e-12);
  EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Ops, ReduceAxesAndKeepdims) {
  const Tensor x = oracle::random_tensor(4, {2, 3, 4});
  const Tensor s = reduce(x, {0, 2}, ReduceKind::kSum);
  ASSERT_EQ(s.shape(), (Shape{3}));
  for (std::size_t c = 0; c < 3; ++c) {
    double acc = 0.0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t k = 0; k < 4; ++k) acc += x[(n * 3 + c) * 4 + k];
    EXPECT_NEAR(s[c], acc, 1e-12);
  }
  const Tensor m = reduce(x, {1}, ReduceKind::kMean, true);
  ASSERT_EQ(m.shape(), (Shape{2, 1, 4}));
  EXPECT_NEAR(m[1 * 4 + 2], (x[(1 * 3 + 0) * 4 + 2] + x[(1 * 3 + 1) * 4 + 2] + x[(1 * 3 + 2) * 4 + 2]) / 3.0,
              1e-12);
  EXPECT_EQ(sum(x).shape(), (Shape{1}));
  EXPECT_THROW(reduce(x, {3}, ReduceKind::kSum), ShapeError);
}

TEST(Ops, Conv2dMatchesNaiveLoops) {
  const Tensor x = oracle::random_tensor(5, {2, 3, 8, 8});
  const Tensor k = oracle::random_tensor(6, {4, 3, 4, 4});
  expect_near_all(conv2d(x, k, {2, 1}), oracle::conv2d(x, k, 2, 1), 1e-12);
  const Tensor k3 = oracle::random_tensor(7, {2, 3, 3, 3});
  expect_near_all(conv2d(x, k3, {1, 1}), oracle::conv2d(x, k3, 1, 1), 1e-12);
  expect_near_all(conv2d(x, k3, {1, 0}), oracle::conv2d(x, k3, 1, 0), 1e-12);
}

TEST(Ops, ConvTransposeMatchesScatterOracle) {
  const Tensor x = oracle::random_tensor(8, {2, 4, 4, 4});
  const Tensor k = oracle::random_tensor(9, {4, 3, 4, 4});
  const Tensor y = conv_transpose2d(x, k, {2, 1});
  EXPECT_EQ(y.shape(), (Shape{2, 3, 8, 8}));
  expect_near_all(y, oracle::conv_transpose2d(x, k, 2, 1), 1e-12);
}

// <conv2d(x, k), y> == <x, conv_transpose2d(y, k)>
TEST(Ops, ConvTransposeIsAdjointOfConv) {
  const Tensor x = oracle::random_tensor(10, {2, 3, 8, 8});
  const Tensor k = oracle::random_tensor(11, {5, 3, 4, 4});
  const Tensor y = oracle::random_tensor(12, {2, 5, 4, 4});
  // conv2d kernel [Cout,Cin,..] is a conv-transpose kernel [Cin',Cout',..] with Cin'=5, Cout'=3.
  const double lhs = oracle::dot(conv2d(x, k, {2, 1}), y);
  const double rhs = oracle::dot(x, conv_transpose2d(y, k, {2, 1}));
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Ops, ConvGeometryErrors) {
  EXPECT_EQ(conv_output_size(16, 4, {2, 1}), 8u);
  EXPECT_THROW(conv_output_size(5, 4, {2, 0}), ShapeError);  // (5-4)/2 not integral
  EXPECT_THROW(conv_output_size(2, 5, {1, 0}), ShapeError);
  const Tensor x({1, 2, 4, 4}, 0.0);
  EXPECT_THROW(conv2d(x, Tensor({1, 3, 3, 3}, 0.0), {1, 1}), ShapeError);
}

TEST(Tape, RejectsMixingTapes) {
  Tape t1, t2;
  const Tensor a = t1.variable(Tensor::scalar(1.0));
  const Tensor b = t2.variable(Tensor::scalar(2.0));
  EXPECT_ANY_THROW(add(a, b));
}

TEST(Tape, GradientOfUnconnectedInputIsZero) {
  Tape tape;
  const Tensor a = tape.variable(Tensor({2}, {1.0, 2.0}));
  const Tensor b = tape.variable(Tensor({2}, {3.0, 4.0}));
  const Tensor y = sum(square(a));
  const Tensor wrt[] = {a, b};
  const auto g = tape.gradients(y, wrt);
  EXPECT_DOUBLE_EQ(g[0][0], 2.0);
  EXPECT_DOUBLE_EQ(g[0][1], 4.0);
  EXPECT_EQ(g[1][0], 0.0);
  EXPECT_EQ(g[1][1], 0.0);
}

// d/dx of x^3 is 3x^2; differentiating that again gives 6x.
TEST(Tape, SecondOrderThroughRecordedGradient) {
  Tape tape;
  const Tensor x = tape.variable(Tensor({3}, {0.5, -1.0, 2.0}));
  const Tensor y = sum(mul(square(x), x));
  const Tensor wrt[] = {x};
  const Tensor g = tape.gradients(y, wrt, true)[0];
  ASSERT_TRUE(g.tracked());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], 3.0 * x[i] * x[i], 1e-12);
  const Tensor h = tape.gradients(sum(g), wrt)[0];
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(h[i], 6.0 * x[i], 1e-12);
}

TEST(Tape, ParameterGradientsAccumulateAcrossUses) {
  Parameter p("w", Tensor({2}, {1.0, -2.0}));
  Tape tape;
  const Tensor w1 = tape.watch(p);
  const Tensor w2 = tape.watch(p);
  EXPECT_EQ(w1.node(), w2.node());
  tape.backward(sum(mul(w1, w2)));  // sum w^2 -> 2w
  EXPECT_DOUBLE_EQ(p.grad[0], 2.0);
  EXPECT_DOUBLE_EQ(p.grad[1], -4.0);

  Parameter frozen("f", Tensor({1}, 1.0));
  frozen.requires_grad = false;
  EXPECT_FALSE(tape.watch(frozen).tracked());
}

TEST(Ops, ActivationsForward) {
  const Tensor x({5}, {-3.0, -1.0, 0.0, 0.5, 2.0});
  const Tensor r = relu(x), l = leaky_relu(x), c = clip(x), t = genhead::tanh(x);
  const double rl[] = {0, 0, 0, 0.5, 2.0};
  const double ll[] = {-0.6, -0.2, 0, 0.5, 2.0};
  const double cl[] = {-1, -1, 0, 0.5, 1};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_DOUBLE_EQ(r[i], rl[i]);
    EXPECT_DOUBLE_EQ(l[i], ll[i]);
    EXPECT_DOUBLE_EQ(c[i], cl[i]);
    EXPECT_DOUBLE_EQ(t[i], std::tanh(x[i]));
  }
}

TEST(Ops, ClipSubgradientOnClosedInterval) {
  Tape tape;
  const Tensor x = tape.variable(Tensor({4}, {-1.0, 1.0, 1.5, -2.0}));
  const Tensor wrt[] = {x};
  const Tensor g = tape.gradients(sum(clip(x)), wrt)[0];
  EXPECT_EQ(g[0], 1.0);
  EXPECT_EQ(g[1], 1.0);
  EXPECT_EQ(g[2], 0.0);
  EXPECT_EQ(g[3], 0.0);
}
