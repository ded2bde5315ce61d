#include "genhead/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace genhead {

namespace {

// ---------------------------------------------------------------------------
// Broadcasting
// ---------------------------------------------------------------------------

enum class Broadcast { kSame, kScalarA, kScalarB, kChannelA, kChannelB };

bool channel_match(const Tensor& big, const Tensor& small) {
  return small.rank() == 1 && big.rank() >= 2 && big.dim(1) == small.dim(0);
}

Broadcast classify(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.defined() || !b.defined()) throw ShapeError(std::string(op) + ": undefined operand");
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalarB;
  if (a.size() == 1) return Broadcast::kScalarA;
  if (channel_match(a, b)) return Broadcast::kChannelB;
  if (channel_match(b, a)) return Broadcast::kChannelA;
  throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " +
                   to_string(b.shape()));
}

std::size_t inner_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t i = 2; i < s.size(); ++i) n *= s[i];
  return n;
}

// Sums a gradient of the broadcast output shape back to `target`.
Tensor sum_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  if (numel(target) == 1) return reshape(sum(g), target);
  if (target.size() == 1 && g.rank() >= 2 && g.dim(1) == target[0]) {
    std::vector<std::size_t> axes;
    for (std::size_t i = 0; i < g.rank(); ++i) {
      if (i != 1) axes.push_back(i);
    }
    return reduce(g, axes, ReduceKind::kSum);
  }
  throw ShapeError("cannot reduce gradient " + to_string(g.shape()) + " to " + to_string(target));
}

template <typename F>
Tensor binary_values(const Tensor& a, const Tensor& b, const char* name, F f) {
  const Broadcast kind = classify(a, b, name);
  const bool a_big = kind == Broadcast::kSame || kind == Broadcast::kScalarB ||
                     kind == Broadcast::kChannelB;
  const Tensor& big = a_big ? a : b;
  const Tensor& small = a_big ? b : a;
  std::vector<double> out(big.size());
  const auto bv = big.values();
  const auto sv = small.values();
  switch (kind) {
    case Broadcast::kSame:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], b[i]);
      break;
    case Broadcast::kScalarA:
    case Broadcast::kScalarB: {
      const double s = sv[0];
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = a_big ? f(bv[i], s) : f(s, bv[i]);
      break;
    }
    case Broadcast::kChannelA:
    case Broadcast::kChannelB: {
      const std::size_t channels = big.dim(1);
      const std::size_t inner = inner_size(big.shape());
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double s = sv[(i / inner) % channels];
        out[i] = a_big ? f(bv[i], s) : f(s, bv[i]);
      }
      break;
    }
  }
  return Tensor(big.shape(), std::move(out));
}

template <typename F>
Tensor unary_values(const Tensor& a, F f) {
  std::vector<double> out(a.size());
  const auto v = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(v[i]);
  return Tensor(a.shape(), std::move(out));
}

Tensor record(const char* name, std::vector<Tensor> inputs, Tensor out, BackwardFn fn) {
  Tape* tape = nullptr;
  for (const auto& in : inputs) {
    if (in.tracked()) {
      tape = in.tape();
      break;
    }
  }
  if (!tape) return out;
  return tape->record(name, std::move(inputs), std::move(out), std::move(fn));
}

// Elementwise mask as a constant tensor (its derivative is zero).
template <typename Pred>
Tensor mask_of(const Tensor& x, Pred pred) {
  return unary_values(x, pred);
}

// ---------------------------------------------------------------------------
// Index helpers
// ---------------------------------------------------------------------------

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + to_string(t.shape()));
  }
}

// ---------------------------------------------------------------------------
// Convolution kernels
// ---------------------------------------------------------------------------

// Indices i in [0, count) with 0 <= i * stride + offset - pad < limit form the
// half-open range [first, last).
struct TapRange {
  std::size_t first = 0;
  std::size_t last = 0;
};

TapRange tap_range(std::size_t stride, std::size_t offset, std::size_t pad, std::size_t limit,
                   std::size_t count) {
  TapRange r;
  if (offset < pad) r.first = (pad - offset + stride - 1) / stride;
  if (limit + pad <= offset) return {0, 0};
  r.last = std::min(count, (limit + pad - offset - 1) / stride + 1);
  if (r.first > r.last) r.first = r.last;
  return r;
}

// Patch matrix of x for a conv with output size ho x wo: row r = (ci, a, b),
// column j = (n, oh, ow); zero where the tap falls in the padding.
std::vector<double> im2col(const Tensor& x, std::size_t kh, std::size_t kw, Conv2dGeometry g,
                           std::size_t ho, std::size_t wo) {
  const std::size_t n_batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t s = g.stride, p = g.pad, plane = ho * wo, cols = n_batch * plane;
  std::vector<double> col(cin * kh * kw * cols, 0.0);
  const auto xv = x.values();
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t a = 0; a < kh; ++a) {
      const TapRange rh = tap_range(s, a, p, h, ho);
      for (std::size_t b = 0; b < kw; ++b) {
        const TapRange rw = tap_range(s, b, p, w, wo);
        double* dst = col.data() + ((ci * kh + a) * kw + b) * cols;
        for (std::size_t n = 0; n < n_batch; ++n) {
          const double* src = xv.data() + (n * cin + ci) * h * w;
          for (std::size_t oh = rh.first; oh < rh.last; ++oh) {
            const double* row = src + (oh * s + a - p) * w;
            double* out = dst + n * plane + oh * wo;
            for (std::size_t ow = rw.first; ow < rw.last; ++ow) out[ow] = row[ow * s + b - p];
          }
        }
      }
    }
  }
  return col;
}

// Four interleaved partial sums; fixed order, so results are reproducible.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
  }
  for (; j < n; ++j) s0 += a[j] * b[j];
  return (s0 + s1) + (s2 + s3);
}

// [N, C, P] -> [C, N*P]
std::vector<double> channels_first(const Tensor& t) {
  const std::size_t n_batch = t.dim(0), c = t.dim(1), plane = t.dim(2) * t.dim(3);
  std::vector<double> out(t.size());
  const auto v = t.values();
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      std::copy_n(v.data() + (n * c + ch) * plane, plane, out.data() + (ch * n_batch + n) * plane);
    }
  }
  return out;
}

Tensor conv2d_values(const Tensor& x, const Tensor& k, Conv2dGeometry g) {
  const std::size_t n_batch = x.dim(0), cin = x.dim(1);
  const std::size_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const std::size_t ho = conv_output_size(x.dim(2), kh, g);
  const std::size_t wo = conv_output_size(x.dim(3), kw, g);
  const std::size_t rows = cin * kh * kw, plane = ho * wo, cols = n_batch * plane;
  const std::vector<double> col = im2col(x, kh, kw, g, ho, wo);
  const auto kv = k.values();
  std::vector<double> out(n_batch * cout * plane, 0.0);
  std::vector<double> acc(cols);
  for (std::size_t co = 0; co < cout; ++co) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double wt = kv[co * rows + r];
      const double* src = col.data() + r * cols;
      for (std::size_t j = 0; j < cols; ++j) acc[j] += wt * src[j];
    }
    for (std::size_t n = 0; n < n_batch; ++n) {
      std::copy_n(acc.data() + n * plane, plane, out.data() + (n * cout + co) * plane);
    }
  }
  return Tensor({n_batch, cout, ho, wo}, std::move(out));
}

Tensor conv_transpose_values(const Tensor& x, const Tensor& k, Conv2dGeometry g, std::size_t ho,
                             std::size_t wo) {
  const std::size_t n_batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = k.dim(1), kh = k.dim(2), kw = k.dim(3);
  const std::size_t s = g.stride, p = g.pad, plane = h * w, cols = n_batch * plane;
  const std::size_t taps = cout * kh * kw;
  const std::vector<double> xr = channels_first(x);
  const auto kv = k.values();
  std::vector<double> out(n_batch * cout * ho * wo, 0.0);
  std::vector<double> acc(cols);
  for (std::size_t t = 0; t < taps; ++t) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double wt = kv[ci * taps + t];
      const double* src = xr.data() + ci * cols;
      for (std::size_t j = 0; j < cols; ++j) acc[j] += wt * src[j];
    }
    const std::size_t co = t / (kh * kw), a = (t / kw) % kh, b = t % kw;
    const TapRange rh = tap_range(s, a, p, ho, h);
    const TapRange rw = tap_range(s, b, p, wo, w);
    for (std::size_t n = 0; n < n_batch; ++n) {
      double* dst = out.data() + (n * cout + co) * ho * wo;
      const double* src = acc.data() + n * plane;
      for (std::size_t ih = rh.first; ih < rh.last; ++ih) {
        double* orow = dst + (ih * s + a - p) * wo;
        const double* row = src + ih * w;
        for (std::size_t iw = rw.first; iw < rw.last; ++iw) orow[iw * s + b - p] += row[iw];
      }
    }
  }
  return Tensor({n_batch, cout, ho, wo}, std::move(out));
}

Tensor kernel_grad_values(const Tensor& x, const Tensor& dy, const Shape& ks, Conv2dGeometry g) {
  const std::size_t n_batch = x.dim(0), cin = x.dim(1);
  const std::size_t cout = ks[0], kh = ks[2], kw = ks[3];
  const std::size_t ho = dy.dim(2), wo = dy.dim(3);
  const std::size_t rows = cin * kh * kw, cols = n_batch * ho * wo;
  const std::vector<double> col = im2col(x, kh, kw, g, ho, wo);
  const std::vector<double> dr = channels_first(dy);
  std::vector<double> out(cout * rows, 0.0);
  for (std::size_t co = 0; co < cout; ++co) {
    const double* grd = dr.data() + co * cols;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* src = col.data() + r * cols;
      out[co * rows + r] = dot(grd, src, cols);
    }
  }
  return Tensor(ks, std::move(out));
}

Tensor conv_transpose_sized(const Tensor& x, const Tensor& k, Conv2dGeometry g, std::size_t ho,
                            std::size_t wo);

Tensor kernel_grad(const Tensor& x, const Tensor& dy, const Shape& ks, Conv2dGeometry g) {
  Tensor out = kernel_grad_values(x, dy, ks, g);
  return record("conv2d_kernel_grad", {x, dy}, std::move(out),
                [ks, g](const Tensor& gk, std::span<const Tensor> in, const Tensor&) {
                  const Tensor& xin = in[0];
                  const Tensor& dyin = in[1];
                  return std::vector<Tensor>{
                      conv_transpose_sized(dyin, gk, g, xin.dim(2), xin.dim(3)),
                      conv2d(xin, gk, g)};
                });
}

Tensor conv_transpose_sized(const Tensor& x, const Tensor& k, Conv2dGeometry g, std::size_t ho,
                            std::size_t wo) {
  Tensor out = conv_transpose_values(x, k, g, ho, wo);
  return record("conv_transpose2d", {x, k}, std::move(out),
                [g](const Tensor& gy, std::span<const Tensor> in, const Tensor&) {
                  return std::vector<Tensor>{conv2d(gy, in[1], g),
                                             kernel_grad(gy, in[0], in[1].shape(), g)};
                });
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = binary_values(a, b, "add", [](double x, double y) { return x + y; });
  return record("add", {a, b}, std::move(out),
                [](const Tensor& g, std::span<const Tensor> in, const Tensor&) {
                  return std::vector<Tensor>{sum_to(g, in[0].shape()), sum_to(g, in[1].shape())};
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tensor out = binary_values(a, b, "sub", [](double x, double y) { return x - y; });
  return record("sub", {a, b}, std::move(out),
                [](const Tensor& g, std::span<const Tensor> in, const Tensor&) {
                  return std::vector<Tensor>{sum_to(g, in[0].shape()),
                                             sum_to(negate(g), in[1].shape())};
                });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out = binary_values(a, b, "mul", [](double x, double y) { return x * y; });
  return record("mul", {a, b}, std::move(out),
                [](const Tensor& g, std::span<const Tensor> in, const Tensor&) {
                  return std::vector<Tensor>{sum_to(mul(g, in[1]), in[0].shape()),
                                             sum_to(mul(g, in[0]), in[1].shape())};
                });
}

Tensor div(const Tensor& a, const Tensor& b) {
  Tensor out = binary_values(a, b, "div", [](double x, double y) { return x / y; });
  return record("div", {a, b}, std::move(out),
                [](const Tensor& g, std::span<const Tensor> in, const Tensor& y) {
                  return std::vector<Tensor>{
                      sum_to(div(g, in[1]), in[0].shape()),
                      sum_to(negate(mul(g, div(y, in[1]))), in[1].shape())};
                });
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = unary_values(a, [c](double x) { return c * x; });
  return record("scale", {a}, std::move(out),
                [c](const Tensor& g, std::span<const Tensor>, const Tensor&) {
                  return std::vector<Tensor>{scale(g, c)};
                });
}

Tensor negate(const Tensor& a) {
  Tensor out = unary_values(a, [](double x) { return -x; });
  return record("negate", {a}, std::move(out),
                [](const Tensor& g, std::span<const Tensor>, const Tensor&) {
                  return std::vector<Tensor>{negate(g)};
                });
}

Tensor square(const Tensor& a) {
  Tensor out = unary_values(a, [](double x) { return x * x; });
  return record("square", {a}, std::move(out),
                [](const Tensor& g, std::span<const Tensor> in, const Tensor&) {
                  return std::vector<Tensor>{mul(g, scale(in[0], 2.0))};
                });
}

Tensor sqrt(const Tensor& a) {
  for (double v : a.values()) {
    if (v < 0.0) throw DomainError("sqrt of negative value " + std::to_string(v));
  }
  Tensor out = unary_values(a, [](double x) { return std::sqrt(x); });
  return record("sqrt", {a}, std::move(out),
                [](const Tensor& g, std::span<const Tensor>, const Tensor& y) {
                  const Tensor live = mask_of(y, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
                  const Tensor fix = mask_of(y, [](double v) { return v > 0.0 ? 0.0 : 1.0; });
                  return std::vector<Tensor>{div(mul(g, live), add(scale(y, 2.0), fix))};
                });
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Tensor tanh(const Tensor& a) {
  Tensor out = unary_values(a, [](double x) { return std::tanh(x); });
  return record("tanh", {a}, std::move(out),
                [](const Tensor& g, std::span<const Tensor>, const Tensor& y) {
                  return std::vector<Tensor>{mul(g, sub(Tensor::scalar(1.0), square(y)))};
                });
}

Tensor relu(const Tensor& a) {
  Tensor out = unary_values(a, [](double x) { return x > 0.0 ? x : 0.0; });
  return record("relu", {a}, std::move(out),
                [](const Tensor& g, std::span<const Tensor> in, const Tensor&) {
                  return std::vector<Tensor>{
                      mul(g, mask_of(in[0], [](double x) { return x > 0.0 ? 1.0 : 0.0; }))};
                });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  Tensor out = unary_values(a, [slope](double x) { return x > 0.0 ? x : slope * x; });
  return record("leaky_relu", {a}, std::move(out),
                [slope](const Tensor& g, std::span<const Tensor> in, const Tensor&) {
                  return std::vector<Tensor>{mul(
                      g, mask_of(in[0], [slope](double x) { return x > 0.0 ? 1.0 : slope; }))};
                });
}

Tensor clip(const Tensor& a) {
  Tensor out = unary_values(a, [](double x) { return std::clamp(x, -1.0, 1.0); });
  return record("clip", {a}, std::move(out),
                [](const Tensor& g, std::span<const Tensor> in, const Tensor&) {
                  return std::vector<Tensor>{mul(g, mask_of(in[0], [](double x) {
                                                   return (x >= -1.0 && x <= 1.0) ? 1.0 : 0.0;
                                                 }))};
                });
}

Tensor activation(const Tensor& a, ActivationKind kind) {
  switch (kind) {
    case ActivationKind::kTanh:
      return tanh(a);
    case ActivationKind::kRelu:
      return relu(a);
    case ActivationKind::kLeakyRelu:
      return leaky_relu(a);
    case ActivationKind::kClip:
      return clip(a);
  }
  throw std::invalid_argument("unknown activation");
}

// ---------------------------------------------------------------------------
// Linear algebra and shape
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul", "lhs");
  require_rank(b, 2, "matmul", "rhs");
  const std::size_t m = a.dim(0), kk = a.dim(1), n = b.dim(1);
  if (b.dim(0) != kk) {
    throw ShapeError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < kk; ++p) {
      const double aip = av[i * kk + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  }
  return record("matmul", {a, b}, Tensor({m, n}, std::move(out)),
                [](const Tensor& g, std::span<const Tensor> in, const Tensor&) {
                  return std::vector<Tensor>{matmul(g, transpose(in[1])),
                                             matmul(transpose(in[0]), g)};
                });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose", "input");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  const auto v = a.values();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = v[i * c + j];
  }
  return record("transpose", {a}, Tensor({c, r}, std::move(out)),
                [](const Tensor& g, std::span<const Tensor>, const Tensor&) {
                  return std::vector<Tensor>{transpose(g)};
                });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(a.values().begin(), a.values().end()));
  return record("reshape", {a}, std::move(out),
                [](const Tensor& g, std::span<const Tensor> in, const Tensor&) {
                  return std::vector<Tensor>{reshape(g, in[0].shape())};
                });
}

Tensor expand(const Tensor& a, const Shape& shape) {
  if (a.rank() != shape.size()) {
    throw ShapeError("expand: rank mismatch " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  std::vector<std::size_t> axes;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (a.dim(i) == shape[i]) continue;
    if (a.dim(i) != 1) {
      throw ShapeError("expand: cannot broadcast " + to_string(a.shape()) + " to " +
                       to_string(shape));
    }
    axes.push_back(i);
  }
  const auto src_strides = strides_of(a.shape());
  std::vector<std::size_t> eff(shape.size());
  for (std::size_t i = 0; i < shape.size(); ++i) eff[i] = a.dim(i) == 1 ? 0 : src_strides[i];
  std::vector<double> out(numel(shape));
  std::vector<std::size_t> idx(shape.size(), 0);
  const auto v = a.values();
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    out[flat] = v[src];
    for (std::size_t d = shape.size(); d-- > 0;) {
      ++idx[d];
      src += eff[d];
      if (idx[d] < shape[d]) break;
      src -= eff[d] * idx[d];
      idx[d] = 0;
    }
  }
  return record("expand", {a}, Tensor(shape, std::move(out)),
                [axes](const Tensor& g, std::span<const Tensor>, const Tensor&) {
                  return std::vector<Tensor>{reduce(g, axes, ReduceKind::kSum, true)};
                });
}

Tensor reduce(const Tensor& x, std::vector<std::size_t> axes, ReduceKind kind, bool keepdims) {
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  for (auto ax : axes) {
    if (ax >= x.rank()) {
      throw ShapeError("reduce: axis " + std::to_string(ax) + " out of range for " +
                       to_string(x.shape()));
    }
  }
  Shape kept = x.shape();
  std::size_t count = 1;
  for (auto ax : axes) {
    count *= kept[ax];
    kept[ax] = 1;
  }
  const auto out_strides = strides_of(kept);
  std::vector<std::size_t> eff(x.rank());
  for (std::size_t i = 0; i < x.rank(); ++i) eff[i] = kept[i] == 1 ? 0 : out_strides[i];

  std::vector<double> out(numel(kept), 0.0);
  std::vector<std::size_t> idx(x.rank(), 0);
  const auto v = x.values();
  std::size_t dst = 0;
  for (std::size_t flat = 0; flat < v.size(); ++flat) {
    out[dst] += v[flat];
    for (std::size_t d = x.rank(); d-- > 0;) {
      ++idx[d];
      dst += eff[d];
      if (idx[d] < x.dim(d)) break;
      dst -= eff[d] * idx[d];
      idx[d] = 0;
    }
  }
  if (kind == ReduceKind::kMean) {
    const double inv = 1.0 / static_cast<double>(count);
    for (auto& o : out) o *= inv;
  }

  Shape out_shape;
  if (keepdims) {
    out_shape = kept;
  } else {
    for (std::size_t i = 0; i < x.rank(); ++i) {
      if (!std::binary_search(axes.begin(), axes.end(), i)) out_shape.push_back(x.dim(i));
    }
    if (out_shape.empty()) out_shape = {1};
  }
  return record("reduce", {x}, Tensor(out_shape, std::move(out)),
                [kept, kind, count](const Tensor& g, std::span<const Tensor> in, const Tensor&) {
                  Tensor spread = expand(reshape(g, kept), in[0].shape());
                  if (kind == ReduceKind::kMean) spread = scale(spread, 1.0 / static_cast<double>(count));
                  return std::vector<Tensor>{spread};
                });
}

Tensor sum(const Tensor& x) {
  std::vector<std::size_t> axes(x.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  return reduce(x, axes, ReduceKind::kSum);
}

Tensor mean(const Tensor& x) {
  std::vector<std::size_t> axes(x.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  return reduce(x, axes, ReduceKind::kMean);
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

std::size_t conv_output_size(std::size_t in, std::size_t kernel, Conv2dGeometry g) {
  if (g.stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t padded = in + 2 * g.pad;
  if (kernel > padded) {
    throw ShapeError("conv2d: kernel " + std::to_string(kernel) + " larger than padded input " +
                     std::to_string(padded));
  }
  if ((padded - kernel) % g.stride != 0) {
    throw ShapeError("conv2d: non-integer output size for input " + std::to_string(in) +
                     ", kernel " + std::to_string(kernel) + ", stride " +
                     std::to_string(g.stride) + ", pad " + std::to_string(g.pad));
  }
  return (padded - kernel) / g.stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& k, Conv2dGeometry g) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(k, 4, "conv2d", "kernel");
  if (x.dim(1) != k.dim(1)) {
    throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) +
                     " do not match kernel " + to_string(k.shape()));
  }
  Tensor out = conv2d_values(x, k, g);
  return record("conv2d", {x, k}, std::move(out),
                [g](const Tensor& gy, std::span<const Tensor> in, const Tensor&) {
                  const Tensor& xin = in[0];
                  const Tensor& kin = in[1];
                  return std::vector<Tensor>{
                      conv_transpose_sized(gy, kin, g, xin.dim(2), xin.dim(3)),
                      kernel_grad(xin, gy, kin.shape(), g)};
                });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& k, Conv2dGeometry g,
                        std::size_t output_padding) {
  require_rank(x, 4, "conv_transpose2d", "input");
  require_rank(k, 4, "conv_transpose2d", "kernel");
  if (g.stride == 0) throw ShapeError("conv_transpose2d: stride must be positive");
  if (x.dim(1) != k.dim(0)) {
    throw ShapeError("conv_transpose2d: input channels " + std::to_string(x.dim(1)) +
                     " do not match kernel " + to_string(k.shape()));
  }
  if (output_padding >= g.stride && output_padding > 0) {
    throw ShapeError("conv_transpose2d: output_padding must be smaller than stride");
  }
  auto size = [&](std::size_t in, std::size_t kernel) {
    const auto s = (static_cast<std::ptrdiff_t>(in) - 1) * static_cast<std::ptrdiff_t>(g.stride) -
                   2 * static_cast<std::ptrdiff_t>(g.pad) + static_cast<std::ptrdiff_t>(kernel) +
                   static_cast<std::ptrdiff_t>(output_padding);
    if (s <= 0) throw ShapeError("conv_transpose2d: non-positive output size");
    return static_cast<std::size_t>(s);
  };
  return conv_transpose_sized(x, k, g, size(x.dim(2), k.dim(2)), size(x.dim(3), k.dim(3)));
}

Tensor conv2d_kernel_grad(const Tensor& x, const Tensor& dy, const Shape& kernel_shape,
                          Conv2dGeometry g) {
  require_rank(x, 4, "conv2d_kernel_grad", "input");
  require_rank(dy, 4, "conv2d_kernel_grad", "output gradient");
  if (kernel_shape.size() != 4 || kernel_shape[1] != x.dim(1) || kernel_shape[0] != dy.dim(1) ||
      dy.dim(0) != x.dim(0) || conv_output_size(x.dim(2), kernel_shape[2], g) != dy.dim(2) ||
      conv_output_size(x.dim(3), kernel_shape[3], g) != dy.dim(3)) {
    throw ShapeError("conv2d_kernel_grad: inconsistent shapes x=" + to_string(x.shape()) +
                     " dy=" + to_string(dy.shape()) + " kernel=" + to_string(kernel_shape));
  }
  return kernel_grad(x, dy, kernel_shape, g);
}

}  // namespace genhead
