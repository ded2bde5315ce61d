#pragma once

#include <cstddef>
#include <vector>

#include "genhead/tensor.hpp"

// Differentiable operations. Every op records itself on the tape of its
// tracked inputs (all tracked inputs must share one tape) and returns an
// untracked tensor when no input is tracked.
//
// Binary elementwise ops accept equal shapes, a scalar operand (one element),
// or a per-channel operand of shape [C] against a tensor of rank >= 2 whose
// axis 1 has size C. Either side may be the broadcast one.
namespace genhead {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor negate(const Tensor& a);
Tensor square(const Tensor& a);
// Throws DomainError on a negative entry. The derivative at an exact zero is
// taken as 0.
Tensor sqrt(const Tensor& a);

enum class ActivationKind { kTanh, kRelu, kLeakyRelu, kClip };
constexpr double kLeakySlope = 0.2;

Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = kLeakySlope);
// Clamp to [-1, 1]; subgradient 1 on the closed interval, 0 outside.
Tensor clip(const Tensor& a);
Tensor activation(const Tensor& a, ActivationKind kind);

// [M,K] x [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);
// Rank-2 transpose.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
// Broadcast size-1 axes of `a` to `shape` (same rank).
Tensor expand(const Tensor& a, const Shape& shape);

enum class ReduceKind { kSum, kMean };

// Reduces over `axes`. Reduced axes are dropped unless keepdims; reducing every
// axis yields shape [1].
Tensor reduce(const Tensor& x, std::vector<std::size_t> axes, ReduceKind kind,
              bool keepdims = false);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

// Cross-correlation with zero padding.
// x [N,Cin,H,W], k [Cout,Cin,Kh,Kw] -> [N,Cout,(H+2p-Kh)/s+1,(W+2p-Kw)/s+1]
Tensor conv2d(const Tensor& x, const Tensor& k, Conv2dGeometry g);

// Adjoint of conv2d in its input.
// x [N,Cin,H,W], k [Cin,Cout,Kh,Kw] -> [N,Cout,(H-1)s-2p+Kh+op,(W-1)s-2p+Kw+op]
// `output_padding` (< stride) extends the bottom/right edge so the adjoint can
// reach every input size of a strided conv2d.
Tensor conv_transpose2d(const Tensor& x, const Tensor& k, Conv2dGeometry g,
                        std::size_t output_padding = 0);

// Kernel gradient of conv2d: the K that makes <conv2d(x, K), dy> linear,
// i.e. d<conv2d(x,K),dy>/dK. Shape `kernel_shape` = [Cout,Cin,Kh,Kw].
Tensor conv2d_kernel_grad(const Tensor& x, const Tensor& dy, const Shape& kernel_shape,
                          Conv2dGeometry g);

// Output size of conv2d along one axis; throws ShapeError when not a positive integer.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, Conv2dGeometry g);

}  // namespace genhead
