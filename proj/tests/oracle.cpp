#include "oracle.hpp"

#include <fstream>
#include <random>
#include <stdexcept>

namespace oracle {

Tensor random_tensor(std::uint64_t seed, Shape shape, double lo, double hi) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(genhead::numel(shape));
  for (double& x : v) x = dist(gen);
  return Tensor(std::move(shape), std::move(v));
}

Tensor conv2d(const Tensor& x, const Tensor& k, std::size_t s, std::size_t p) {
  const long n = long(x.dim(0)), ci = long(x.dim(1)), h = long(x.dim(2)), w = long(x.dim(3));
  const long co = long(k.dim(0)), kh = long(k.dim(2)), kw = long(k.dim(3));
  const long ho = (h + 2 * long(p) - kh) / long(s) + 1;
  const long wo = (w + 2 * long(p) - kw) / long(s) + 1;
  std::vector<double> out(std::size_t(n * co * ho * wo), 0.0);
  for (long b = 0; b < n; ++b)
    for (long o = 0; o < co; ++o)
      for (long i = 0; i < ho; ++i)
        for (long j = 0; j < wo; ++j) {
          double acc = 0.0;
          for (long c = 0; c < ci; ++c)
            for (long a = 0; a < kh; ++a)
              for (long d = 0; d < kw; ++d) {
                const long y = i * long(s) + a - long(p);
                const long xx = j * long(s) + d - long(p);
                if (y < 0 || y >= h || xx < 0 || xx >= w) continue;
                acc += x[std::size_t(((b * ci + c) * h + y) * w + xx)] *
                       k[std::size_t(((o * ci + c) * kh + a) * kw + d)];
              }
          out[std::size_t(((b * co + o) * ho + i) * wo + j)] = acc;
        }
  return Tensor({std::size_t(n), std::size_t(co), std::size_t(ho), std::size_t(wo)}, std::move(out));
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& k, std::size_t s, std::size_t p) {
  const long n = long(x.dim(0)), ci = long(x.dim(1)), h = long(x.dim(2)), w = long(x.dim(3));
  const long co = long(k.dim(1)), kh = long(k.dim(2)), kw = long(k.dim(3));
  const long ho = (h - 1) * long(s) - 2 * long(p) + kh;
  const long wo = (w - 1) * long(s) - 2 * long(p) + kw;
  std::vector<double> out(std::size_t(n * co * ho * wo), 0.0);
  for (long b = 0; b < n; ++b)
    for (long c = 0; c < ci; ++c)
      for (long i = 0; i < h; ++i)
        for (long j = 0; j < w; ++j)
          for (long o = 0; o < co; ++o)
            for (long a = 0; a < kh; ++a)
              for (long d = 0; d < kw; ++d) {
                const long y = i * long(s) + a - long(p);
                const long xx = j * long(s) + d - long(p);
                if (y < 0 || y >= ho || xx < 0 || xx >= wo) continue;
                out[std::size_t(((b * co + o) * ho + y) * wo + xx)] +=
                    x[std::size_t(((b * ci + c) * h + i) * w + j)] *
                    k[std::size_t(((c * co + o) * kh + a) * kw + d)];
              }
  return Tensor({std::size_t(n), std::size_t(co), std::size_t(ho), std::size_t(wo)}, std::move(out));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), kk = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t q = 0; q < kk; ++q) out[i * n + j] += a[i * kk + q] * b[q * n + j];
  return Tensor({m, n}, std::move(out));
}

double dot(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

namespace {

std::string header_token(std::istream& is) {
  std::string tok;
  char c;
  while (is.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(is, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

}  // namespace

Ppm read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  if (header_token(is) != "P6") throw std::runtime_error("not a P6 file");
  Ppm p;
  p.width = std::stoul(header_token(is));
  p.height = std::stoul(header_token(is));
  p.maxval = std::stoi(header_token(is));
  p.rgb.resize(p.width * p.height * 3);
  is.read(reinterpret_cast<char*>(p.rgb.data()), static_cast<std::streamsize>(p.rgb.size()));
  if (is.gcount() != static_cast<std::streamsize>(p.rgb.size())) {
    throw std::runtime_error("truncated pixel data");
  }
  if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes");
  return p;
}

std::filesystem::path cifar_fixture_dir() {
  namespace fs = std::filesystem;
  constexpr std::size_t records = 10000, record_bytes = 3073;
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "genhead_cifar_fixture";
    fs::create_directories(d);
    std::mt19937 gen(99);
    for (int f = 1; f <= 5; ++f) {
      const fs::path file = d / ("data_batch_" + std::to_string(f) + ".bin");
      if (fs::exists(file) && fs::file_size(file) == records * record_bytes) continue;
      std::vector<char> buf(records * record_bytes);
      for (std::size_t r = 0; r < records; ++r) {
        buf[r * record_bytes] = static_cast<char>(r % 10);
        for (std::size_t i = 1; i < record_bytes; ++i) buf[r * record_bytes + i] = static_cast<char>(gen() & 0xFF);
      }
      const fs::path tmp = file.string() + ".tmp";
      {
        std::ofstream os(tmp, std::ios::binary);
        os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      }
      fs::rename(tmp, file);
    }
    return d;
  }();
  return dir;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("genhead_test_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace oracle
