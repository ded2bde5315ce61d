#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "genhead/data.hpp"
#include "genhead/heads.hpp"
#include "genhead/losses.hpp"
#include "genhead/metrics.hpp"
#include "genhead/nn.hpp"
#include "genhead/rng.hpp"

namespace genhead {

// Critic iterations per generator iteration.
struct TrainSchedule {
  std::size_t n_critic_default = 5;
  std::size_t warmup_gen_iters = 25;
  std::size_t warmup_n_critic = 50;
  std::size_t recalibration_gen_iter = 500;
  std::size_t recalibration_n_critic = 50;
  // Repeat the recalibration boost every `recalibration_gen_iter` iterations
  // instead of once.
  bool recalibration_repeats = false;

  void validate() const;
};

std::size_t critic_iters_for(const TrainSchedule& schedule, std::size_t gen_iter);

enum class DatasetSource { kSynthetic, kCifar };

struct DatasetConfig {
  DatasetSource source = DatasetSource::kSynthetic;
  SynthSpec synth;
  std::size_t synth_count = 1024;
  std::string cifar_path = "data/cifar-10-batches-bin";
  int cifar_label = kCifarFrogLabel;
};

// Loads or generates the training images at the requested square size.
ImageBatch load_dataset(const DatasetConfig& cfg, std::size_t size);

struct GanConfig {
  std::size_t z_dim = 64;
  std::size_t image_size = 16;
  std::size_t batch_size = 64;
  std::size_t generator_iterations = 200;
  OutputHeadKind head = OutputHeadKind::kBnClip;
  double lambda = kGradientPenaltyWeight;
  AdamConfig adam{1e-4, 0.9, 0.99, 1e-8};
  std::uint64_t seed = 1;
  DatasetConfig dataset;
  TrainSchedule schedule;
  std::size_t generator_width = 32;  // channels after the dense projection
  std::size_t critic_width = 8;      // channels of the first critic conv
  std::size_t snapshot_every = 0;    // 0 disables image/histogram snapshots
  double convergence_delta = 0.05;

  void validate() const;
};

struct SrConfig {
  std::size_t high_size = 32;
  std::size_t factor = 4;
  std::size_t batch_size = 16;
  std::size_t iterations = 200;
  OutputHeadKind head = OutputHeadKind::kBnClip;
  std::uint64_t loss_net_seed = 7;
  std::array<std::size_t, 3> loss_net_widths{8, 16, 32};
  std::array<double, 3> loss_weights{0.1, 0.8, 0.1};
  AdamConfig adam{1e-3, 0.9, 0.999, 1e-7};
  std::uint64_t seed = 1;
  DatasetConfig dataset{DatasetSource::kSynthetic, SynthSpec{}, 512, "data/cifar-10-batches-bin",
                        kCifarFrogLabel};
  std::size_t generator_width = 16;
  std::size_t snapshot_every = 0;  // also the probe interval
  double convergence_delta = 0.05;

  std::size_t low_size() const { return high_size / factor; }
  void validate() const;
};

// Body network plus output head.
struct Generator {
  Network body;
  OutputHead head;

  HeadOutput forward(Tape& tape, const Tensor& input, NormMode mode = NormMode::kTrain);
  std::vector<Parameter*> parameters();
  void set_requires_grad(bool on);
  void zero_grad();
};

// z[z_dim] -> dense -> [W, S/4, S/4] -> BN -> relu -> convT(W, W/2) -> BN -> relu
//   -> convT(W/2, 3) -> head
Generator make_gan_generator(const GanConfig& cfg, const ChannelStats& target,
                             std::uint64_t seed);
// conv(3, D) -> LN -> leaky -> conv(D, 2D) -> LN -> leaky -> dense -> score
Network make_critic(const GanConfig& cfg, std::uint64_t seed);
// [3, L, L] -> convT(3, W) -> BN -> relu -> convT(W, W) -> BN -> relu -> conv3x3(W, 3) -> head
Generator make_sr_generator(const SrConfig& cfg, const ChannelStats& target, std::uint64_t seed);

// Full forward pass on a copy of `gen` (running statistics are not touched).
ImageBatch sample_generator(const Generator& gen, const Tensor& input,
                            NormMode mode = NormMode::kTrain);

struct AbortInfo {
  std::int64_t iteration = 0;
  CriticLossParts parts;
  double generator_loss = 0.0;
  std::string message;
};

struct TrainResult {
  MetricsLog log;
  ChannelStats target;
  std::size_t critic_updates = 0;
  std::size_t generator_updates = 0;
  std::optional<AbortInfo> abort;
  std::vector<std::string> artifacts;  // file names relative to the output directory
};

// Column order of GAN logs (after "iteration").
const std::vector<std::string>& gan_columns();
// Column order of super-resolution logs (after "iteration").
const std::vector<std::string>& sr_columns();

class GanTrainer {
 public:
  explicit GanTrainer(GanConfig cfg);
  GanTrainer(GanConfig cfg, ImageBatch data);

  // One generator iteration: the scheduled critic updates, one generator
  // update, one log record. Returns false once training aborted.
  bool step(const std::optional<std::filesystem::path>& out_dir = std::nullopt);
  TrainResult run(const std::optional<std::filesystem::path>& out_dir = std::nullopt);

  Generator& generator() { return gen_; }
  Network& critic() { return critic_; }
  const TrainResult& result() const { return result_; }
  const ImageBatch& data() const { return data_; }

 private:
  CriticLossParts critic_update();
  Tensor sample_z(std::size_t n);
  void snapshot(const std::filesystem::path& dir, std::size_t id);

  GanConfig cfg_;
  ImageBatch data_;
  Generator gen_;
  Network critic_;
  AdamState gen_opt_;
  AdamState critic_opt_;
  Rng rng_;
  Tensor fixed_z_;
  std::size_t gen_iter_ = 0;
  std::size_t snapshots_ = 0;
  TrainResult result_;
};

TrainResult train_gan(const GanConfig& cfg,
                      const std::optional<std::filesystem::path>& out_dir = std::nullopt);

class SrTrainer {
 public:
  explicit SrTrainer(SrConfig cfg);
  SrTrainer(SrConfig cfg, ImageBatch high_res);

  bool step(const std::optional<std::filesystem::path>& out_dir = std::nullopt);
  TrainResult run(const std::optional<std::filesystem::path>& out_dir = std::nullopt);

  Generator& generator() { return gen_; }
  const PerceptualLossNet& loss_net() const { return loss_net_; }
  const TrainResult& result() const { return result_; }
  const ImageBatch& high_res() const { return high_; }
  const ImageBatch& low_res() const { return low_; }

 private:
  void snapshot(const std::filesystem::path& dir, std::size_t id);

  SrConfig cfg_;
  ImageBatch high_;
  ImageBatch low_;
  ImageBatch probe_;
  Generator gen_;
  PerceptualLossNet loss_net_;
  AdamState opt_;
  Rng rng_;
  std::size_t iter_ = 0;
  std::size_t snapshots_ = 0;
  TrainResult result_;
};

TrainResult train_sr(const SrConfig& cfg,
                     const std::optional<std::filesystem::path>& out_dir = std::nullopt);

// First logged iteration at which every channel mean (mean_r/g/b columns) is
// within delta of the target mean.
std::optional<std::int64_t> convergence_iteration(const MetricsLog& log, const ChannelStats& target,
                                                  double delta);

struct ComparisonRun {
  OutputHeadKind head;
  std::uint64_t seed = 0;
  std::optional<std::int64_t> event_iteration;  // empty: never converged
  double final_metric = 0.0;                   // last logged wasserstein / loss
  bool aborted = false;
  MetricsLog log;
};

struct HeadSummary {
  OutputHeadKind head;
  // Median event iteration; runs that never converged count as +infinity.
  std::optional<double> median_event;
  double median_final_metric = 0.0;
};

struct ComparisonReport {
  std::vector<ComparisonRun> runs;
  std::vector<HeadSummary> summary;
  std::size_t total_iterations = 0;

  const HeadSummary& for_head(OutputHeadKind head) const;
};

ComparisonReport run_comparison(const GanConfig& base, const std::vector<OutputHeadKind>& heads,
                                const std::vector<std::uint64_t>& seeds);
ComparisonReport run_comparison(const SrConfig& base, const std::vector<OutputHeadKind>& heads,
                                const std::vector<std::uint64_t>& seeds);

// Median where nullopt sorts above every value.
std::optional<double> censored_median(std::vector<std::optional<std::int64_t>> values);

}  // namespace genhead
