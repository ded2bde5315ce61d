#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "genhead/heads.hpp"
#include "genhead/tensor.hpp"

namespace genhead {

enum class Provenance { kSynthetic, kCifar, kProbe, kGenerated };

// Images [N,3,H,W] with every value in [-1,1].
class ImageBatch {
 public:
  ImageBatch() = default;
  ImageBatch(Tensor values, Provenance tag);

  const Tensor& values() const { return values_; }
  Provenance provenance() const { return tag_; }
  std::size_t count() const { return values_.dim(0); }
  std::size_t channels() const { return values_.dim(1); }
  std::size_t height() const { return values_.dim(2); }
  std::size_t width() const { return values_.dim(3); }

  // Images at the given indices, in order.
  ImageBatch gather(const std::vector<std::size_t>& indices) const;

 private:
  Tensor values_;
  Provenance tag_ = Provenance::kSynthetic;
};

// ---------------------------------------------------------------------------
// CIFAR-10 binary: records of 1 label byte + 1024 R + 1024 G + 1024 B bytes.

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarRecordBytes = 1 + 3 * kCifarSide * kCifarSide;
constexpr int kCifarFrogLabel = 6;

// Label index for a class name of the CIFAR-10 label order, or a decimal index.
int cifar_label(std::string_view name);

// `path` is either one batch file or a directory holding data_batch_1.bin ..
// data_batch_5.bin. Keeps records whose label equals `label` when given.
ImageBatch load_cifar10(const std::filesystem::path& path, std::optional<int> label = std::nullopt);

// ---------------------------------------------------------------------------
// Synthetic targets with prescribed per-channel moments.

enum class SynthStructure { kFlatNoise, kTwoToneBlobs };

std::string_view to_string(SynthStructure s);
SynthStructure parse_synth_structure(std::string_view s);

struct SynthSpec {
  std::vector<double> mean{-0.2, 0.0, 0.3};
  std::vector<double> std{0.4, 0.5, 0.2};
  SynthStructure structure = SynthStructure::kTwoToneBlobs;
  std::uint64_t seed = 1;

  // Throws when a channel cannot be represented (|mean| + std > 1 or std < 0).
  // Returns a warning when clamping may bias the moments (|mean| + 2 std > 1).
  std::optional<std::string> validate() const;
};

// Each pixel is mean_c + std_c * t with E[t] = 0, E[t^2] = 1:
//  flat-noise:      t ~ N(0,1) per pixel and channel
//  two-tone-blobs:  t = 0.8 * s * (inside ? 1 : -1) + 0.6 * z, one random disc
//                   per image, s = +-1 per image, z ~ N(0,1)
// clamped to [-1,1].
ImageBatch synth_dataset(const SynthSpec& spec, std::size_t n, std::size_t h, std::size_t w);

// Mean and biased std per channel over all pixels of all images.
ChannelStats channel_stats(const ImageBatch& b);

// Non-overlapping factor x factor box average.
ImageBatch downsample(const ImageBatch& b, std::size_t factor);

// byte = round_half_up((v + 1) * 127.5) clamped to [0,255]; inverse v = byte / 127.5 - 1.
std::uint8_t to_byte(double v);
double from_byte(std::uint8_t b);
// Bytes in [N,C,H,W] order.
std::vector<std::uint8_t> to_bytes(const ImageBatch& b);
ImageBatch from_bytes(const std::vector<std::uint8_t>& bytes, const Shape& shape,
                      Provenance tag = Provenance::kSynthetic);

// Binary P6, maxval 255, RGB interleaved row-major.
void write_ppm(const ImageBatch& b, std::size_t index, const std::filesystem::path& path);

// Probe image for super-resolution runs: one synthetic image (held-out seed)
// whose top-right quadrant is forced to -1.
ImageBatch make_probe(const SynthSpec& spec, std::size_t h, std::size_t w);

}  // namespace genhead
