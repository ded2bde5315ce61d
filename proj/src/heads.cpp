#include "genhead/heads.hpp"

#include <cmath>
#include <stdexcept>

namespace genhead {

std::string_view to_string(OutputHeadKind kind) {
  switch (kind) {
    case OutputHeadKind::kTanhAlone:
      return "tanh";
    case OutputHeadKind::kBnTanh:
      return "bn-tanh";
    case OutputHeadKind::kBnClip:
      return "bn-clip";
  }
  return "?";
}

OutputHeadKind parse_head_kind(std::string_view s) {
  if (s == "tanh") return OutputHeadKind::kTanhAlone;
  if (s == "bn-tanh") return OutputHeadKind::kBnTanh;
  if (s == "bn-clip") return OutputHeadKind::kBnClip;
  throw std::invalid_argument("unknown head '" + std::string(s) + "' (expected tanh|bn-tanh|bn-clip)");
}

void ChannelStats::validate() const {
  if (mean.size() != std.size()) throw ShapeError("channel stats: mean/std length differ");
  for (double s : std) {
    if (!(s >= 0.0)) throw std::invalid_argument("channel stats: negative standard deviation");
  }
}

std::vector<Parameter*> OutputHead::parameters() {
  if (!bn) return {};
  return {&bn->gamma, &bn->beta};
}

OutputHead make_head(OutputHeadKind kind, std::size_t channels,
                     const std::optional<ChannelStats>& stats) {
  OutputHead head;
  head.kind = kind;
  head.channels = channels;
  switch (kind) {
    case OutputHeadKind::kTanhAlone:
      break;
    case OutputHeadKind::kBnTanh:
      head.bn.emplace(channels, "head.bn");
      break;
    case OutputHeadKind::kBnClip: {
      if (!stats) throw std::invalid_argument("bn-clip head needs target channel statistics");
      stats->validate();
      if (stats->channels() != channels) {
        throw ShapeError("channel stats cover " + std::to_string(stats->channels()) +
                         " channels, head has " + std::to_string(channels));
      }
      head.bn.emplace(channels, "head.bn");
      head.bn->gamma.value = Tensor({channels}, stats->std);
      head.bn->beta.value = Tensor({channels}, stats->mean);
      break;
    }
  }
  return head;
}

HeadOutput head_forward(Tape& tape, OutputHead& head, const Tensor& x, NormMode mode) {
  if (x.rank() != 4 || x.dim(1) != head.channels) {
    throw ShapeError("head expects [N," + std::to_string(head.channels) + ",H,W], got " +
                     to_string(x.shape()));
  }
  if (head.kind == OutputHeadKind::kTanhAlone) return {tanh(x), x};
  head.bn->mode = mode;
  Tensor normalized = batchnorm_forward(tape, x, *head.bn);
  Tensor image = head.kind == OutputHeadKind::kBnTanh ? tanh(normalized) : clip(normalized);
  return {image, normalized};
}

double saturation_fraction(const Tensor& x, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("saturation threshold must be positive");
  std::size_t count = 0;
  for (double v : x.values()) {
    if (std::abs(v) > threshold) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(x.size());
}

double saturation_threshold(OutputHeadKind kind) {
  return kind == OutputHeadKind::kBnClip ? 1.0 : 2.0;
}

}  // namespace genhead
