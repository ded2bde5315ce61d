#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "genhead/nn.hpp"

namespace genhead {

// Generator final layer variants.
enum class OutputHeadKind { kTanhAlone, kBnTanh, kBnClip };

std::string_view to_string(OutputHeadKind kind);
// Accepts the CLI spellings "tanh", "bn-tanh", "bn-clip".
OutputHeadKind parse_head_kind(std::string_view s);

// Per-channel mean and (biased) standard deviation in [-1,1] pixel space.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t channels() const { return mean.size(); }
  void validate() const;
};

struct OutputHead {
  OutputHeadKind kind = OutputHeadKind::kTanhAlone;
  std::size_t channels = 3;
  std::optional<BatchNormState> bn;

  std::vector<Parameter*> parameters();
};

// TANH_ALONE: no state. BN_TANH: gamma = 1, beta = 0. BN_CLIP: gamma = stats.std,
// beta = stats.mean (required). gamma/beta stay trainable.
OutputHead make_head(OutputHeadKind kind, std::size_t channels,
                     const std::optional<ChannelStats>& stats = std::nullopt);

struct HeadOutput {
  Tensor image;           // in [-1, 1]
  Tensor pre_activation;  // input of the final tanh / clip
};

// tanh(x), tanh(BN(x)) or clip(BN(x)). `mode` selects batch or running
// statistics for the BN variants.
HeadOutput head_forward(Tape& tape, OutputHead& head, const Tensor& pre_activations,
                        NormMode mode = NormMode::kTrain);

// Fraction of entries with |x| > threshold.
double saturation_fraction(const Tensor& pre_nonlinearity, double threshold);

// Threshold at which a head's non-linearity saturates: 2 for tanh, 1 for clip.
double saturation_threshold(OutputHeadKind kind);

}  // namespace genhead
