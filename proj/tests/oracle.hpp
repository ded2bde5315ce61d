#pragma once

// Independent reference implementations used as test oracles. They are
// deliberately naive: direct loops over the defining formulas, no shared code
// with the library beyond the Tensor container.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "genhead/tensor.hpp"

namespace oracle {

using genhead::Shape;
using genhead::Tensor;

Tensor random_tensor(std::uint64_t seed, Shape shape, double lo = -1.0, double hi = 1.0);

// out[n,co,i,j] = sum_{ci,a,b} x[n,ci,i*s+a-p, j*s+b-p] * k[co,ci,a,b]
Tensor conv2d(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad);
// Scatter form: out[n,co,i*s+a-p, j*s+b-p] += x[n,ci,i,j] * k[ci,co,a,b]
Tensor conv_transpose2d(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad);
Tensor matmul(const Tensor& a, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);

struct Ppm {
  std::size_t width = 0;
  std::size_t height = 0;
  int maxval = 0;
  std::vector<std::uint8_t> rgb;
};
// Parses P6 with arbitrary whitespace and comments in the header.
Ppm read_ppm(const std::filesystem::path& path);

// Five CIFAR-10 style training files of 10000 records each (labels cycle
// 0..9, so every class has exactly 5000 records), created once per process
// under the temp directory. Pixel bytes are pseudo-random.
std::filesystem::path cifar_fixture_dir();

// Scratch directory unique to the calling test.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace oracle
