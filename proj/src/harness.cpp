#include "genhead/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "genhead/rng.hpp"

namespace genhead {

namespace {

// Sub-stream tags for derive_seed.
constexpr std::uint64_t kStreamGenerator = 1;
constexpr std::uint64_t kStreamCritic = 2;
constexpr std::uint64_t kStreamTraining = 3;
constexpr std::uint64_t kStreamFixedZ = 4;

std::string snapshot_name(const char* stem, std::size_t id, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.%s", stem, id, ext);
  return buf;
}

Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& idx) {
  const std::size_t row = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = idx.size();
  std::vector<double> out(idx.size() * row);
  const auto v = t.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(idx[i] * row), row,
                out.begin() + static_cast<std::ptrdiff_t>(i * row));
  }
  return Tensor(std::move(shape), std::move(out));
}

std::vector<std::size_t> draw_indices(Rng& rng, std::size_t n, std::size_t count) {
  std::vector<std::size_t> idx(count);
  for (auto& i : idx) i = rng.index(n);
  return idx;
}

// Per-channel mean and biased std of an [N,C,H,W] tensor.
ChannelStats tensor_channel_stats(const Tensor& t) {
  const std::size_t n = t.dim(0), c = t.dim(1), plane = t.dim(2) * t.dim(3);
  ChannelStats s;
  s.mean.assign(c, 0.0);
  s.std.assign(c, 0.0);
  const auto v = t.values();
  const double count = static_cast<double>(n * plane);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = v.data() + (i * c + ch) * plane;
      for (std::size_t k = 0; k < plane; ++k) acc += p[k];
    }
    const double m = acc / count;
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = v.data() + (i * c + ch) * plane;
      for (std::size_t k = 0; k < plane; ++k) sq += (p[k] - m) * (p[k] - m);
    }
    s.mean[ch] = m;
    s.std[ch] = std::sqrt(sq / count);
  }
  return s;
}

bool all_finite(std::initializer_list<double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

void write_histogram(const ImageBatch& b, const std::filesystem::path& path) {
  export_histogram_csv(histogram(b), path);
}

std::size_t grid_columns(std::size_t n) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n)))));
}

}  // namespace

// ---------------------------------------------------------------------------
// Schedule

void TrainSchedule::validate() const {
  if (n_critic_default == 0 || warmup_gen_iters == 0 || warmup_n_critic == 0 ||
      recalibration_gen_iter == 0 || recalibration_n_critic == 0) {
    throw std::invalid_argument("schedule values must all be positive");
  }
}

std::size_t critic_iters_for(const TrainSchedule& s, std::size_t gen_iter) {
  if (gen_iter < s.warmup_gen_iters) return s.warmup_n_critic;
  if (gen_iter == s.recalibration_gen_iter) return s.recalibration_n_critic;
  if (s.recalibration_repeats && gen_iter % s.recalibration_gen_iter == 0) {
    return s.recalibration_n_critic;
  }
  return s.n_critic_default;
}

// ---------------------------------------------------------------------------
// Configs and data

ImageBatch load_dataset(const DatasetConfig& cfg, std::size_t size) {
  if (size == 0) throw std::invalid_argument("image size must be positive");
  if (cfg.source == DatasetSource::kSynthetic) {
    if (cfg.synth_count == 0) throw std::invalid_argument("synthetic dataset needs at least one image");
    return synth_dataset(cfg.synth, cfg.synth_count, size, size);
  }
  ImageBatch full = load_cifar10(cfg.cifar_path, cfg.cifar_label);
  if (full.count() == 0) throw std::runtime_error("no CIFAR-10 images matched the class filter");
  if (size == kCifarSide) return full;
  if (size > kCifarSide || kCifarSide % size != 0) {
    throw std::invalid_argument("CIFAR-10 images can only be box-downsampled to a divisor of 32");
  }
  return downsample(full, kCifarSide / size);
}

void GanConfig::validate() const {
  if (z_dim == 0) throw std::invalid_argument("z_dim must be at least 1");
  if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2 for batch statistics");
  if (image_size < 4 || image_size % 4 != 0) {
    throw std::invalid_argument("GAN image size must be a positive multiple of 4");
  }
  if (generator_width < 2 || critic_width == 0) throw std::invalid_argument("network widths too small");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  if (!(convergence_delta > 0.0)) throw std::invalid_argument("convergence delta must be positive");
  schedule.validate();
  if (generator_iterations > 0 && schedule.warmup_gen_iters > generator_iterations) {
    throw std::invalid_argument("warmup_gen_iters exceeds the number of generator iterations");
  }
}

void SrConfig::validate() const {
  if (factor != 4) throw std::invalid_argument("super-resolution factor must be 4");
  if (high_size == 0 || high_size % factor != 0) {
    throw std::invalid_argument("high resolution size must be a multiple of the factor");
  }
  if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2 for batch statistics");
  if (generator_width == 0) throw std::invalid_argument("generator width must be positive");
  if (!(convergence_delta > 0.0)) throw std::invalid_argument("convergence delta must be positive");
}

// ---------------------------------------------------------------------------
// Models

HeadOutput Generator::forward(Tape& tape, const Tensor& input, NormMode mode) {
  body.set_mode(mode);
  const Tensor pre = body.forward(tape, input);
  return head_forward(tape, head, pre, mode);
}

std::vector<Parameter*> Generator::parameters() {
  auto p = body.parameters();
  for (Parameter* q : head.parameters()) p.push_back(q);
  return p;
}

void Generator::set_requires_grad(bool on) {
  for (Parameter* p : parameters()) p->requires_grad = on;
}

void Generator::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

Generator make_gan_generator(const GanConfig& cfg, const ChannelStats& target, std::uint64_t seed) {
  cfg.validate();
  const std::size_t w0 = cfg.generator_width, w1 = cfg.generator_width / 2, s = cfg.image_size / 4;
  std::vector<LayerSpec> specs = {
      LayerSpec::dense(cfg.z_dim, w0 * s * s),
      LayerSpec::reshape_to({w0, s, s}),
      LayerSpec::batch_norm(w0),
      LayerSpec::act(ActivationKind::kRelu),
      LayerSpec::conv_transpose(w0, w1, 4, 2, 1),
      LayerSpec::batch_norm(w1),
      LayerSpec::act(ActivationKind::kRelu),
      LayerSpec::conv_transpose(w1, 3, 4, 2, 1),
  };
  return Generator{Network(std::move(specs), {cfg.z_dim}, seed, "generator"),
                   make_head(cfg.head, 3, target)};
}

Network make_critic(const GanConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t d = cfg.critic_width, s = cfg.image_size / 4;
  std::vector<LayerSpec> specs = {
      LayerSpec::conv(3, d, 4, 2, 1),
      LayerSpec::layer_norm(d),
      LayerSpec::act(ActivationKind::kLeakyRelu),
      LayerSpec::conv(d, 2 * d, 4, 2, 1),
      LayerSpec::layer_norm(2 * d),
      LayerSpec::act(ActivationKind::kLeakyRelu),
      LayerSpec::reshape_to({2 * d * s * s}),
      LayerSpec::dense(2 * d * s * s, 1),
  };
  return Network(std::move(specs), {3, cfg.image_size, cfg.image_size}, seed, "critic");
}

Generator make_sr_generator(const SrConfig& cfg, const ChannelStats& target, std::uint64_t seed) {
  cfg.validate();
  const std::size_t w = cfg.generator_width, l = cfg.low_size();
  std::vector<LayerSpec> specs = {
      LayerSpec::conv_transpose(3, w, 4, 2, 1),
      LayerSpec::batch_norm(w),
      LayerSpec::act(ActivationKind::kRelu),
      LayerSpec::conv_transpose(w, w, 4, 2, 1),
      LayerSpec::batch_norm(w),
      LayerSpec::act(ActivationKind::kRelu),
      LayerSpec::conv(w, 3, 3, 1, 1),
  };
  return Generator{Network(std::move(specs), {3, l, l}, seed, "sr_generator"),
                   make_head(cfg.head, 3, target)};
}

ImageBatch sample_generator(const Generator& gen, const Tensor& input, NormMode mode) {
  Generator copy = gen;
  Tape tape;
  HeadOutput out = copy.forward(tape, input.detach(), mode);
  return ImageBatch(out.image.detach(), Provenance::kGenerated);
}

// ---------------------------------------------------------------------------
// Logs

const std::vector<std::string>& gan_columns() {
  static const std::vector<std::string> cols = {
      "critic_updates", "critic_total", "mean_real", "mean_fake", "penalty",
      "wasserstein",    "generator_loss", "mean_r", "mean_g",  "mean_b",
      "std_r",          "std_g",        "std_b",  "saturation", "snapshot"};
  return cols;
}

const std::vector<std::string>& sr_columns() {
  static const std::vector<std::string> cols = {"loss",  "mean_r", "mean_g",     "mean_b",
                                                "std_r", "std_g",  "std_b",      "saturation",
                                                "snapshot"};
  return cols;
}

// ---------------------------------------------------------------------------
// GAN

GanTrainer::GanTrainer(GanConfig cfg)
    : GanTrainer(cfg, load_dataset(cfg.dataset, cfg.image_size)) {}

GanTrainer::GanTrainer(GanConfig cfg, ImageBatch data)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      gen_opt_(cfg_.adam),
      critic_opt_(cfg_.adam),
      rng_(derive_seed(cfg_.seed, kStreamTraining)) {
  cfg_.validate();
  if (data_.height() != cfg_.image_size || data_.width() != cfg_.image_size || data_.channels() != 3) {
    throw ShapeError("training images " + to_string(data_.values().shape()) +
                     " do not match image size " + std::to_string(cfg_.image_size));
  }
  result_.target = channel_stats(data_);
  gen_ = make_gan_generator(cfg_, result_.target, derive_seed(cfg_.seed, kStreamGenerator));
  critic_ = make_critic(cfg_, derive_seed(cfg_.seed, kStreamCritic));
  Rng zr(derive_seed(cfg_.seed, kStreamFixedZ));
  std::vector<double> z(cfg_.batch_size * cfg_.z_dim);
  for (double& v : z) v = zr.normal();
  fixed_z_ = Tensor({cfg_.batch_size, cfg_.z_dim}, std::move(z));
  result_.log.columns = gan_columns();
}

Tensor GanTrainer::sample_z(std::size_t n) {
  std::vector<double> z(n * cfg_.z_dim);
  for (double& v : z) v = rng_.normal();
  return Tensor({n, cfg_.z_dim}, std::move(z));
}

CriticLossParts GanTrainer::critic_update() {
  const Tensor real = gather_rows(data_.values(), draw_indices(rng_, data_.count(), cfg_.batch_size));
  const Tensor z = sample_z(cfg_.batch_size);
  const std::uint64_t gp_seed = rng_.next();

  gen_.set_requires_grad(false);
  critic_.set_requires_grad(true);
  critic_.zero_grad();
  Tape tape;
  const Tensor fake = gen_.forward(tape, z).image.detach();
  CriticFn d = [&](const Tensor& x) { return critic_.forward(tape, x); };
  CriticLoss loss = critic_loss(tape, d, real, fake, cfg_.lambda, gp_seed);
  if (all_finite({loss.parts.total})) {
    tape.backward(loss.objective);
    const auto params = critic_.parameters();
    adam_step(params, critic_opt_);
  }
  gen_.set_requires_grad(true);
  return loss.parts;
}

void GanTrainer::snapshot(const std::filesystem::path& dir, std::size_t id) {
  const ImageBatch samples = sample_generator(gen_, fixed_z_);
  const std::string grid = snapshot_name("samples", id, "ppm");
  const std::string hist = snapshot_name("histogram", id, "csv");
  export_image_grid(samples, grid_columns(samples.count()), dir / grid);
  write_histogram(samples, dir / hist);
  result_.artifacts.push_back(grid);
  result_.artifacts.push_back(hist);
}

bool GanTrainer::step(const std::optional<std::filesystem::path>& out_dir) {
  if (result_.abort) return false;
  const std::size_t g = gen_iter_;
  const std::size_t n_critic = critic_iters_for(cfg_.schedule, g);
  CriticLossParts parts;
  for (std::size_t k = 0; k < n_critic; ++k) {
    parts = critic_update();
    if (!all_finite({parts.total, parts.mean_real, parts.mean_fake, parts.penalty})) {
      result_.abort = AbortInfo{static_cast<std::int64_t>(g), parts, 0.0,
                                "non-finite critic loss at generator iteration " + std::to_string(g) +
                                    ", critic update " + std::to_string(k)};
      return false;
    }
    ++result_.critic_updates;
  }

  const Tensor z = sample_z(cfg_.batch_size);
  critic_.set_requires_grad(false);
  gen_.set_requires_grad(true);
  gen_.zero_grad();
  Tape tape;
  const HeadOutput out = gen_.forward(tape, z);
  CriticFn d = [&](const Tensor& x) { return critic_.forward(tape, x); };
  const Tensor g_loss = generator_loss(d, out.image);
  const double g_value = g_loss.item();
  critic_.set_requires_grad(true);
  if (!std::isfinite(g_value)) {
    result_.abort = AbortInfo{static_cast<std::int64_t>(g), parts, g_value,
                              "non-finite generator loss at generator iteration " + std::to_string(g)};
    return false;
  }
  tape.backward(g_loss);
  const auto params = gen_.parameters();
  adam_step(params, gen_opt_);
  ++result_.generator_updates;

  double snapshot_id = -1.0;
  const bool last = cfg_.generator_iterations > 0 && g + 1 == cfg_.generator_iterations;
  if (out_dir && cfg_.snapshot_every > 0 && (g % cfg_.snapshot_every == 0 || last)) {
    snapshot(*out_dir, snapshots_);
    snapshot_id = static_cast<double>(snapshots_++);
  }

  const ChannelStats s = tensor_channel_stats(out.image);
  result_.log.append(
      static_cast<std::int64_t>(g),
      {static_cast<double>(result_.critic_updates), parts.total, parts.mean_real, parts.mean_fake,
       parts.penalty, wasserstein_estimate(parts), g_value, s.mean[0], s.mean[1], s.mean[2], s.std[0],
       s.std[1], s.std[2],
       saturation_fraction(out.pre_activation, saturation_threshold(cfg_.head)), snapshot_id});
  ++gen_iter_;
  return true;
}

TrainResult GanTrainer::run(const std::optional<std::filesystem::path>& out_dir) {
  while (gen_iter_ < cfg_.generator_iterations && step(out_dir)) {
  }
  return result_;
}

TrainResult train_gan(const GanConfig& cfg, const std::optional<std::filesystem::path>& out_dir) {
  GanTrainer trainer(cfg);
  return trainer.run(out_dir);
}

// ---------------------------------------------------------------------------
// Super-resolution

SrTrainer::SrTrainer(SrConfig cfg) : SrTrainer(cfg, load_dataset(cfg.dataset, cfg.high_size)) {}

SrTrainer::SrTrainer(SrConfig cfg, ImageBatch high_res)
    : cfg_(std::move(cfg)),
      high_(std::move(high_res)),
      loss_net_(PerceptualLossNet::seeded(cfg_.loss_net_seed, 3, cfg_.loss_net_widths,
                                          cfg_.loss_weights)),
      opt_(cfg_.adam),
      rng_(derive_seed(cfg_.seed, kStreamTraining)) {
  cfg_.validate();
  if (high_.height() != cfg_.high_size || high_.width() != cfg_.high_size || high_.channels() != 3) {
    throw ShapeError("high resolution images " + to_string(high_.values().shape()) +
                     " do not match size " + std::to_string(cfg_.high_size));
  }
  low_ = downsample(high_, cfg_.factor);
  probe_ = make_probe(cfg_.dataset.synth, cfg_.high_size, cfg_.high_size);
  result_.target = channel_stats(high_);
  gen_ = make_sr_generator(cfg_, result_.target, derive_seed(cfg_.seed, kStreamGenerator));
  result_.log.columns = sr_columns();
}

void SrTrainer::snapshot(const std::filesystem::path& dir, std::size_t id) {
  // The probe is rendered as the last image of a training-sized batch so the
  // BN heads see ordinary batch statistics.
  const ImageBatch probe_low = downsample(probe_, cfg_.factor);
  std::vector<std::size_t> idx(cfg_.batch_size - 1);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i % low_.count();
  const Tensor base = gather_rows(low_.values(), idx);
  std::vector<double> v(base.values().begin(), base.values().end());
  v.insert(v.end(), probe_low.values().values().begin(), probe_low.values().values().end());
  Shape shape = base.shape();
  shape[0] += 1;
  const ImageBatch out = sample_generator(gen_, Tensor(std::move(shape), std::move(v)));
  const std::string probe = snapshot_name("probe", id, "ppm");
  const std::string hist = snapshot_name("histogram", id, "csv");
  write_ppm(out, out.count() - 1, dir / probe);
  write_histogram(out, dir / hist);
  result_.artifacts.push_back(probe);
  result_.artifacts.push_back(hist);
}

bool SrTrainer::step(const std::optional<std::filesystem::path>& out_dir) {
  if (result_.abort) return false;
  const std::size_t it = iter_;
  const auto idx = draw_indices(rng_, high_.count(), cfg_.batch_size);
  const Tensor low = gather_rows(low_.values(), idx);
  const Tensor high = gather_rows(high_.values(), idx);

  gen_.zero_grad();
  Tape tape;
  const HeadOutput out = gen_.forward(tape, low);
  const Tensor loss = perceptual_loss(loss_net_, out.image, high);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    CriticLossParts none;
    result_.abort = AbortInfo{static_cast<std::int64_t>(it), none, value,
                              "non-finite perceptual loss at iteration " + std::to_string(it)};
    return false;
  }
  tape.backward(loss);
  const auto params = gen_.parameters();
  adam_step(params, opt_);
  ++result_.generator_updates;

  double snapshot_id = -1.0;
  const bool last = cfg_.iterations > 0 && it + 1 == cfg_.iterations;
  if (out_dir && cfg_.snapshot_every > 0 && (it % cfg_.snapshot_every == 0 || last)) {
    snapshot(*out_dir, snapshots_);
    snapshot_id = static_cast<double>(snapshots_++);
  }

  const ChannelStats s = tensor_channel_stats(out.image);
  result_.log.append(static_cast<std::int64_t>(it),
                     {value, s.mean[0], s.mean[1], s.mean[2], s.std[0], s.std[1], s.std[2],
                      saturation_fraction(out.pre_activation, saturation_threshold(cfg_.head)),
                      snapshot_id});
  ++iter_;
  return true;
}

TrainResult SrTrainer::run(const std::optional<std::filesystem::path>& out_dir) {
  while (iter_ < cfg_.iterations && step(out_dir)) {
  }
  return result_;
}

TrainResult train_sr(const SrConfig& cfg, const std::optional<std::filesystem::path>& out_dir) {
  SrTrainer trainer(cfg);
  return trainer.run(out_dir);
}

// ---------------------------------------------------------------------------
// Comparison

std::optional<std::int64_t> convergence_iteration(const MetricsLog& log, const ChannelStats& target,
                                                  double delta) {
  if (target.channels() != 3) throw std::invalid_argument("convergence needs 3-channel targets");
  const std::size_t c0 = log.column_index("mean_r");
  const std::size_t c1 = log.column_index("mean_g");
  const std::size_t c2 = log.column_index("mean_b");
  for (const auto& r : log.records) {
    if (std::abs(r.values[c0] - target.mean[0]) <= delta &&
        std::abs(r.values[c1] - target.mean[1]) <= delta &&
        std::abs(r.values[c2] - target.mean[2]) <= delta) {
      return r.iteration;
    }
  }
  return std::nullopt;
}

std::optional<double> censored_median(std::vector<std::optional<std::int64_t>> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end(), [](const auto& a, const auto& b) {
    if (!a) return false;
    if (!b) return true;
    return *a < *b;
  });
  const std::size_t n = values.size();
  const auto& hi = values[n / 2];
  if (n % 2 == 1) {
    if (!hi) return std::nullopt;
    return static_cast<double>(*hi);
  }
  const auto& lo = values[n / 2 - 1];
  if (!lo || !hi) return std::nullopt;
  return 0.5 * static_cast<double>(*lo + *hi);
}

const HeadSummary& ComparisonReport::for_head(OutputHeadKind head) const {
  for (const auto& s : summary) {
    if (s.head == head) return s;
  }
  throw std::out_of_range("no comparison runs for head " + std::string(to_string(head)));
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename Config, typename Train>
ComparisonReport compare(const Config& base, const std::vector<OutputHeadKind>& heads,
                         const std::vector<std::uint64_t>& seeds, std::size_t total,
                         const std::string& metric, Train train) {
  if (heads.empty() || seeds.empty()) throw std::invalid_argument("comparison needs heads and seeds");
  ComparisonReport report;
  report.total_iterations = total;
  for (OutputHeadKind head : heads) {
    HeadSummary summary{head, std::nullopt, 0.0};
    std::vector<std::optional<std::int64_t>> events;
    std::vector<double> finals;
    for (std::uint64_t seed : seeds) {
      Config cfg = base;
      cfg.head = head;
      cfg.seed = seed;
      TrainResult r = train(cfg);
      ComparisonRun run;
      run.head = head;
      run.seed = seed;
      run.aborted = r.abort.has_value();
      run.event_iteration = convergence_iteration(r.log, r.target, cfg.convergence_delta);
      run.final_metric = r.log.records.empty() ? std::numeric_limits<double>::quiet_NaN()
                                               : r.log.records.back().values[r.log.column_index(metric)];
      run.log = std::move(r.log);
      events.push_back(run.event_iteration);
      finals.push_back(run.final_metric);
      report.runs.push_back(std::move(run));
    }
    summary.median_event = censored_median(events);
    summary.median_final_metric = median(finals);
    report.summary.push_back(summary);
  }
  return report;
}

}  // namespace

ComparisonReport run_comparison(const GanConfig& base, const std::vector<OutputHeadKind>& heads,
                                const std::vector<std::uint64_t>& seeds) {
  return compare(base, heads, seeds, base.generator_iterations, "wasserstein",
                 [](const GanConfig& c) { return train_gan(c); });
}

ComparisonReport run_comparison(const SrConfig& base, const std::vector<OutputHeadKind>& heads,
                                const std::vector<std::uint64_t>& seeds) {
  return compare(base, heads, seeds, base.iterations, "loss",
                 [](const SrConfig& c) { return train_sr(c); });
}

}  // namespace genhead
