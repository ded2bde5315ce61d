#include "genhead/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>

#include "genhead/rng.hpp"

namespace genhead {

namespace {

constexpr std::array<std::string_view, 10> kCifarNames = {
    "airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(is)), {});
}

}  // namespace

ImageBatch::ImageBatch(Tensor values, Provenance tag) : values_(std::move(values)), tag_(tag) {
  if (values_.rank() != 4) {
    throw ShapeError("image batch must be [N,C,H,W], got " + to_string(values_.shape()));
  }
  for (double v : values_.values()) {
    if (!(v >= -1.0 && v <= 1.0)) {
      throw std::invalid_argument("image batch value " + std::to_string(v) + " outside [-1,1]");
    }
  }
  values_ = values_.detach();
}

ImageBatch ImageBatch::gather(const std::vector<std::size_t>& indices) const {
  const std::size_t per = values_.size() / count();
  std::vector<double> out;
  out.reserve(indices.size() * per);
  const auto v = values_.values();
  for (auto i : indices) {
    if (i >= count()) throw std::out_of_range("image index out of range");
    out.insert(out.end(), v.begin() + static_cast<std::ptrdiff_t>(i * per),
               v.begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
  }
  Shape s = values_.shape();
  s[0] = indices.size();
  return ImageBatch(Tensor(s, std::move(out)), tag_);
}

// ---------------------------------------------------------------------------

int cifar_label(std::string_view name) {
  for (std::size_t i = 0; i < kCifarNames.size(); ++i) {
    if (kCifarNames[i] == name) return static_cast<int>(i);
  }
  int value = -1;
  const auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), value);
  if (ec != std::errc() || ptr != name.data() + name.size() || value < 0 || value > 9) {
    throw std::invalid_argument("unknown CIFAR-10 class '" + std::string(name) + "'");
  }
  return value;
}

ImageBatch load_cifar10(const std::filesystem::path& path, std::optional<int> label) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    for (int i = 1; i <= 5; ++i) files.push_back(path / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    files.push_back(path);
  }

  constexpr std::size_t plane = kCifarSide * kCifarSide;
  std::vector<double> values;
  std::size_t n = 0;
  for (const auto& file : files) {
    const auto bytes = read_file(file);
    if (bytes.size() % kCifarRecordBytes != 0) {
      throw std::runtime_error(file.string() + ": size " + std::to_string(bytes.size()) +
                               " is not a multiple of the " + std::to_string(kCifarRecordBytes) +
                               "-byte record");
    }
    for (std::size_t r = 0; r < bytes.size() / kCifarRecordBytes; ++r) {
      const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
      if (rec[0] > 9) {
        throw std::runtime_error(file.string() + ": record " + std::to_string(r) +
                                 " has label byte " + std::to_string(rec[0]));
      }
      if (label && rec[0] != *label) continue;
      for (std::size_t i = 0; i < 3 * plane; ++i) values.push_back(from_byte(rec[1 + i]));
      ++n;
    }
  }
  if (n == 0) throw std::runtime_error("no CIFAR-10 records matched in " + path.string());
  return ImageBatch(Tensor({n, 3, kCifarSide, kCifarSide}, std::move(values)), Provenance::kCifar);
}

// ---------------------------------------------------------------------------

std::string_view to_string(SynthStructure s) {
  return s == SynthStructure::kFlatNoise ? "flat-noise" : "two-tone-blobs";
}

SynthStructure parse_synth_structure(std::string_view s) {
  if (s == "flat-noise") return SynthStructure::kFlatNoise;
  if (s == "two-tone-blobs") return SynthStructure::kTwoToneBlobs;
  throw std::invalid_argument("unknown synthetic structure '" + std::string(s) + "'");
}

std::optional<std::string> SynthSpec::validate() const {
  if (mean.size() != std.size() || mean.empty()) {
    throw std::invalid_argument("synthetic spec: mean and std need one entry per channel");
  }
  std::optional<std::string> warning;
  for (std::size_t c = 0; c < mean.size(); ++c) {
    if (!(std[c] >= 0.0)) throw std::invalid_argument("synthetic spec: negative std");
    if (std::abs(mean[c]) + std[c] > 1.0) {
      throw std::invalid_argument("synthetic spec: channel " + std::to_string(c) +
                                  " moments are not achievable inside [-1,1]");
    }
    if (std::abs(mean[c]) + 2.0 * std[c] > 1.0 + 1e-12) {
      warning = "synthetic spec: channel " + std::to_string(c) +
                " has |mean| + 2 std > 1; clamping will bias its moments";
    }
  }
  return warning;
}

ImageBatch synth_dataset(const SynthSpec& spec, std::size_t n, std::size_t h, std::size_t w) {
  if (n == 0 || h == 0 || w == 0) throw std::invalid_argument("synthetic dataset needs n, h, w >= 1");
  if (auto warning = spec.validate()) std::cerr << "warning: " << *warning << "\n";
  const std::size_t channels = spec.mean.size();
  Rng rng(spec.seed);
  std::vector<double> values(n * channels * h * w);
  std::vector<double> t(h * w);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      double* dst = values.data() + (i * channels + c) * h * w;
      if (spec.structure == SynthStructure::kFlatNoise) {
        for (std::size_t p = 0; p < h * w; ++p) dst[p] = rng.normal();
      } else {
        if (c == 0) {
          const double cy = rng.uniform() * static_cast<double>(h);
          const double cx = rng.uniform() * static_cast<double>(w);
          const double radius = (0.2 + 0.3 * rng.uniform()) * static_cast<double>(std::min(h, w));
          const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
          for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
              const double dy = static_cast<double>(y) + 0.5 - cy;
              const double dx = static_cast<double>(x) + 0.5 - cx;
              const bool inside = dy * dy + dx * dx <= radius * radius;
              t[y * w + x] = 0.8 * sign * (inside ? 1.0 : -1.0);
            }
          }
        }
        for (std::size_t p = 0; p < h * w; ++p) dst[p] = t[p] + 0.6 * rng.normal();
      }
      for (std::size_t p = 0; p < h * w; ++p) {
        dst[p] = std::clamp(spec.mean[c] + spec.std[c] * dst[p], -1.0, 1.0);
      }
    }
  }
  return ImageBatch(Tensor({n, channels, h, w}, std::move(values)), Provenance::kSynthetic);
}

ChannelStats channel_stats(const ImageBatch& b) {
  const std::size_t n = b.count(), channels = b.channels(), plane = b.height() * b.width();
  const std::size_t count = n * plane;
  if (count < 2) throw std::invalid_argument("channel_stats: need at least 2 values per channel");
  const auto v = b.values().values();
  ChannelStats out;
  out.mean.assign(channels, 0.0);
  out.std.assign(channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = v.data() + (i * channels + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) s += p[k];
    }
    const double mu = s / static_cast<double>(count);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = v.data() + (i * channels + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) ss += (p[k] - mu) * (p[k] - mu);
    }
    out.mean[c] = mu;
    out.std[c] = std::sqrt(ss / static_cast<double>(count));
  }
  return out;
}

ImageBatch downsample(const ImageBatch& b, std::size_t factor) {
  if (factor == 0 || b.height() % factor != 0 || b.width() % factor != 0) {
    throw std::invalid_argument("downsample: " + std::to_string(b.height()) + "x" +
                                std::to_string(b.width()) + " is not divisible by " +
                                std::to_string(factor));
  }
  const std::size_t n = b.count(), channels = b.channels(), h = b.height(), w = b.width();
  const std::size_t oh = h / factor, ow = w / factor;
  const double inv = 1.0 / static_cast<double>(factor * factor);
  const auto v = b.values().values();
  std::vector<double> out(n * channels * oh * ow);
  for (std::size_t plane = 0; plane < n * channels; ++plane) {
    const double* src = v.data() + plane * h * w;
    double* dst = out.data() + plane * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t dy = 0; dy < factor; ++dy) {
          for (std::size_t dx = 0; dx < factor; ++dx) {
            s += src[(y * factor + dy) * w + x * factor + dx];
          }
        }
        dst[y * ow + x] = std::clamp(s * inv, -1.0, 1.0);
      }
    }
  }
  return ImageBatch(Tensor({n, channels, oh, ow}, std::move(out)), b.provenance());
}

// ---------------------------------------------------------------------------

std::uint8_t to_byte(double v) {
  const double scaled = std::floor((v + 1.0) * 127.5 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

double from_byte(std::uint8_t b) { return static_cast<double>(b) / 127.5 - 1.0; }

std::vector<std::uint8_t> to_bytes(const ImageBatch& b) {
  std::vector<std::uint8_t> out;
  out.reserve(b.values().size());
  for (double v : b.values().values()) out.push_back(to_byte(v));
  return out;
}

ImageBatch from_bytes(const std::vector<std::uint8_t>& bytes, const Shape& shape, Provenance tag) {
  std::vector<double> values(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) values[i] = from_byte(bytes[i]);
  return ImageBatch(Tensor(shape, std::move(values)), tag);
}

void write_ppm(const ImageBatch& b, std::size_t index, const std::filesystem::path& path) {
  if (index >= b.count()) throw std::out_of_range("write_ppm: image index out of range");
  if (b.channels() != 3) throw ShapeError("write_ppm: needs 3-channel images");
  const std::size_t h = b.height(), w = b.width(), plane = h * w;
  const auto v = b.values().values();
  const double* base = v.data() + index * 3 * plane;
  std::string data;
  data.reserve(3 * plane);
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) data.push_back(static_cast<char>(to_byte(base[c * plane + p])));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "P6\n" << w << " " << h << "\n255\n";
  os.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

ImageBatch make_probe(const SynthSpec& spec, std::size_t h, std::size_t w) {
  SynthSpec held_out = spec;
  held_out.seed = derive_seed(spec.seed, 0x70726f6265ULL);
  Tensor values = synth_dataset(held_out, 1, h, w).values().clone();
  auto v = values.mutable_values();
  const std::size_t channels = values.dim(1);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < h / 2; ++y) {
      for (std::size_t x = w / 2; x < w; ++x) v[(c * h + y) * w + x] = -1.0;
    }
  }
  return ImageBatch(values, Provenance::kProbe);
}

}  // namespace genhead
