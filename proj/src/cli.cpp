#include "genhead/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "genhead/checkpoint.hpp"
#include "genhead/gradient_suite.hpp"

#ifndef GENHEAD_VERSION
#define GENHEAD_VERSION "unknown"
#endif

namespace genhead {

using nlohmann::json;

std::string_view to_string(CommandKind kind) {
  switch (kind) {
    case CommandKind::kTrainGan: return "train-gan";
    case CommandKind::kTrainSr: return "train-sr";
    case CommandKind::kCompare: return "compare";
    case CommandKind::kStats: return "stats";
    case CommandKind::kGradcheck: return "gradcheck";
  }
  return "?";
}

namespace {

// Flag values as parsed; empty when the flag was absent.
struct Flags {
  std::string config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string head;
  std::vector<std::string> heads;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> iterations;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> snapshot_every;
  std::string dataset;
  std::string data_dir;
  std::string cls;
  std::string regime;
  std::optional<std::size_t> size;
};

void add_run_flags(CLI::App* sub, Flags& f, bool single_head) {
  sub->add_option("--config", f.config, "JSON run configuration");
  sub->add_option("--out-dir", f.out_dir, "output directory (default $GENHEAD_OUT or runs/<command>)");
  sub->add_option("--iterations", f.iterations, "generator iterations (GAN) or optimizer steps (SR)");
  sub->add_option("--batch-size", f.batch_size, "training batch size");
  sub->add_option("--dataset", f.dataset, "synthetic | cifar");
  sub->add_option("--data-dir", f.data_dir, "CIFAR-10 binary directory or batch file");
  sub->add_option("--class", f.cls, "CIFAR-10 class name or index");
  if (single_head) {
    sub->add_option("--head", f.head, "tanh | bn-tanh | bn-clip");
    sub->add_option("--seed", f.seed, "run seed");
    sub->add_option("--snapshot-every", f.snapshot_every, "image/histogram snapshot interval (0: off)");
  } else {
    sub->add_option("--heads", f.heads, "comma-separated head list")->delimiter(',');
    sub->add_option("--seeds", f.seeds, "comma-separated seed list")->delimiter(',');
    sub->add_option("--regime", f.regime, "gan | sr");
  }
}

void apply_dataset_flags(const Flags& f, DatasetConfig& d) {
  if (!f.dataset.empty()) {
    if (f.dataset == "synthetic") {
      d.source = DatasetSource::kSynthetic;
    } else if (f.dataset == "cifar") {
      d.source = DatasetSource::kCifar;
    } else {
      throw UsageError("--dataset must be 'synthetic' or 'cifar', got '" + f.dataset + "'");
    }
  }
  if (d.source == DatasetSource::kSynthetic && (!f.data_dir.empty() || !f.cls.empty())) {
    throw UsageError("--data-dir and --class only apply to --dataset cifar");
  }
  if (!f.data_dir.empty()) d.cifar_path = f.data_dir;
  if (!f.cls.empty()) {
    try {
      d.cifar_label = cifar_label(f.cls);
    } catch (const std::exception& e) {
      throw UsageError(std::string("--class: ") + e.what());
    }
  }
}

OutputHeadKind head_flag(const std::string& s, const char* flag) {
  try {
    return parse_head_kind(s);
  } catch (const std::exception& e) {
    throw UsageError(std::string(flag) + ": " + e.what());
  }
}

std::filesystem::path default_out_dir(CommandKind kind) {
  if (const char* env = std::getenv("GENHEAD_OUT"); env && *env) return env;
  return std::filesystem::path("runs") / std::string(to_string(kind));
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << "\n";
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

// manifest.json is written before any compute and rewritten when the run ends.
class Manifest {
 public:
  Manifest(const Command& cmd, json config, std::optional<std::uint64_t> seed) {
    j_ = {{"tool", "genhead"},
          {"version", GENHEAD_VERSION},
          {"command", std::string(to_string(cmd.kind))},
          {"argv", cmd.argv},
          {"config", std::move(config)},
          {"status", "running"},
          {"artifacts", json::array()}};
    if (seed) j_["seed"] = *seed;
    if (cmd.config_path) j_["config_file"] = cmd.config_path->string();
    path_ = cmd.out_dir / "manifest.json";
    std::filesystem::create_directories(cmd.out_dir);
    flush();
  }

  void add(const std::string& artifact) { j_["artifacts"].push_back(artifact); }
  void add(const std::vector<std::string>& artifacts) {
    for (const auto& a : artifacts) add(a);
  }
  json& body() { return j_; }
  void finish(const std::string& status) {
    j_["status"] = status;
    flush();
  }

 private:
  void flush() const { write_json(path_, j_); }

  json j_;
  std::filesystem::path path_;
};

json abort_json(const AbortInfo& a) {
  return {{"iteration", a.iteration},
          {"message", a.message},
          {"mean_real", a.parts.mean_real},
          {"mean_fake", a.parts.mean_fake},
          {"penalty", a.parts.penalty},
          {"critic_total", a.parts.total},
          {"generator_loss", a.generator_loss}};
}

std::string fmt(double v, int precision = 6) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

void print_stats(std::ostream& out, const ChannelStats& s) {
  static const char* names[] = {"r", "g", "b"};
  for (std::size_t c = 0; c < s.channels(); ++c) {
    out << "channel " << (c < 3 ? names[c] : std::to_string(c)) << ": mean=" << fmt(s.mean[c])
        << " std=" << fmt(s.std[c]) << "\n";
  }
}

void save_params(const std::filesystem::path& path, std::vector<Parameter*> params) {
  std::vector<const Parameter*> cp(params.begin(), params.end());
  save_checkpoint(path, cp);
}

int finish_training(const Command& cmd, Manifest& manifest, const TrainResult& r,
                    std::vector<Parameter*> gen_params, std::ostream& out, std::ostream& err) {
  export_csv(r.log, cmd.out_dir / "metrics.csv");
  manifest.add("metrics.csv");
  manifest.add(r.artifacts);
  save_params(cmd.out_dir / "generator.ckpt", std::move(gen_params));
  manifest.add("generator.ckpt");
  manifest.body()["critic_updates"] = r.critic_updates;
  manifest.body()["generator_updates"] = r.generator_updates;
  json target = {{"mean", r.target.mean}, {"std", r.target.std}};
  manifest.body()["target_stats"] = target;
  if (r.abort) {
    manifest.body()["abort"] = abort_json(*r.abort);
    manifest.finish("aborted");
    err << "training aborted: " << r.abort->message << "\n"
        << "  critic parts: mean_real=" << fmt(r.abort->parts.mean_real)
        << " mean_fake=" << fmt(r.abort->parts.mean_fake)
        << " penalty=" << fmt(r.abort->parts.penalty) << " total=" << fmt(r.abort->parts.total)
        << " generator_loss=" << fmt(r.abort->generator_loss) << "\n";
    return kExitFailed;
  }
  manifest.finish("completed");
  out << "iterations: " << r.log.records.size() << "\n";
  if (r.critic_updates > 0) out << "critic updates: " << r.critic_updates << "\n";
  out << "outputs: " << cmd.out_dir.string() << "\n";
  return kExitOk;
}

int run_train_gan(const Command& cmd, std::ostream& out, std::ostream& err) {
  const GanConfig& cfg = cmd.config.gan;
  Manifest manifest(cmd, to_json(cfg), cfg.seed);
  GanTrainer trainer(cfg);
  const TrainResult r = trainer.run(cmd.out_dir);
  return finish_training(cmd, manifest, r, trainer.generator().parameters(), out, err);
}

int run_train_sr(const Command& cmd, std::ostream& out, std::ostream& err) {
  const SrConfig& cfg = cmd.config.sr;
  Manifest manifest(cmd, to_json(cfg), cfg.seed);
  SrTrainer trainer(cfg);
  const TrainResult r = trainer.run(cmd.out_dir);
  return finish_training(cmd, manifest, r, trainer.generator().parameters(), out, err);
}

int run_compare(const Command& cmd, std::ostream& out, std::ostream& err) {
  const RunConfig& rc = cmd.config;
  const bool gan = cmd.regime == Regime::kGan;
  json config = gan ? to_json(rc.gan) : to_json(rc.sr);
  json heads = json::array();
  for (auto h : rc.heads) heads.push_back(std::string(to_string(h)));
  Manifest manifest(cmd, {{gan ? "gan" : "sr", config}, {"heads", heads}, {"seeds", rc.seeds}},
                    std::nullopt);
  const ComparisonReport report =
      gan ? run_comparison(rc.gan, rc.heads, rc.seeds) : run_comparison(rc.sr, rc.heads, rc.seeds);

  json runs = json::array();
  bool any_aborted = false;
  for (const auto& run : report.runs) {
    const std::string name =
        "run_" + std::string(to_string(run.head)) + "_seed" + std::to_string(run.seed) + ".csv";
    export_csv(run.log, cmd.out_dir / name);
    manifest.add(name);
    any_aborted = any_aborted || run.aborted;
    runs.push_back({{"head", std::string(to_string(run.head))},
                    {"seed", run.seed},
                    {"event_iteration", run.event_iteration ? json(*run.event_iteration) : json(nullptr)},
                    {"final_metric", run.final_metric},
                    {"aborted", run.aborted},
                    {"log", name}});
  }
  json summary = json::array();
  const char* metric = gan ? "wasserstein" : "loss";
  out << "head      median_event  median_final_" << metric << "\n";
  for (const auto& s : report.summary) {
    summary.push_back({{"head", std::string(to_string(s.head))},
                       {"median_event", s.median_event ? json(*s.median_event) : json(nullptr)},
                       {"median_final_metric", s.median_final_metric}});
    out << std::left << std::setw(10) << to_string(s.head) << std::setw(14)
        << (s.median_event ? fmt(*s.median_event) : std::string("never")) << fmt(s.median_final_metric)
        << "\n";
  }
  write_json(cmd.out_dir / "comparison.json",
             {{"regime", gan ? "gan" : "sr"},
              {"total_iterations", report.total_iterations},
              {"delta", gan ? rc.gan.convergence_delta : rc.sr.convergence_delta},
              {"runs", runs},
              {"summary", summary}});
  manifest.add("comparison.json");
  manifest.finish(any_aborted ? "aborted" : "completed");
  if (any_aborted) {
    err << "at least one comparison run aborted on a non-finite loss\n";
    return kExitFailed;
  }
  return kExitOk;
}

int run_stats(const Command& cmd, std::ostream& out) {
  const DatasetConfig& d = cmd.config.gan.dataset;
  const ImageBatch b = load_dataset(d, cmd.stats_size);
  out << "N=" << b.count() << "\n";
  out << "shape=" << to_string(b.values().shape()) << "\n";
  print_stats(out, channel_stats(b));
  return kExitOk;
}

int run_gradcheck(const Command& cmd, std::ostream& out) {
  const auto cases = run_gradient_suite(cmd.gradcheck_seed);
  bool ok = true;
  for (const auto& c : cases) {
    out << std::left << std::setw(28) << c.name << " max_rel_error=" << fmt(c.report.max_rel_error, 3)
        << (c.report.passed ? "  ok" : "  FAILED") << "\n";
    ok = ok && c.report.passed;
  }
  out << (ok ? "all gradient checks passed" : "gradient check failures") << " (" << cases.size()
      << " cases)\n";
  return ok ? kExitOk : kExitFailed;
}

}  // namespace

Command parse_args(int argc, const char* const* argv, std::string* help) {
  CLI::App app{"Generator output-head experiments", "genhead"};
  app.require_subcommand(1);
  app.set_version_flag("--version", GENHEAD_VERSION);

  Flags f;
  std::uint64_t gradcheck_seed = 2024;
  CLI::App* gan = app.add_subcommand("train-gan", "train the adversarial generator");
  CLI::App* sr = app.add_subcommand("train-sr", "train the super-resolution generator");
  CLI::App* cmp = app.add_subcommand("compare", "run every (head, seed) pair and report convergence");
  CLI::App* stats = app.add_subcommand("stats", "print dataset size and per-channel statistics");
  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_run_flags(gan, f, true);
  add_run_flags(sr, f, true);
  add_run_flags(cmp, f, false);
  stats->add_option("--config", f.config, "JSON run configuration (gan.dataset section)");
  stats->add_option("--dataset", f.dataset, "synthetic | cifar");
  stats->add_option("--data-dir", f.data_dir, "CIFAR-10 binary directory or batch file");
  stats->add_option("--class", f.cls, "CIFAR-10 class name or index");
  stats->add_option("--size", f.size, "image side (synthetic size, or CIFAR downsample target)");
  grad->add_option("--seed", gradcheck_seed, "input seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    if (help) *help = app.help();
    return {};
  } catch (const CLI::CallForVersion&) {
    if (help) *help = std::string(GENHEAD_VERSION) + "\n";
    return {};
  } catch (const CLI::ParseError& e) {
    throw UsageError(std::string(e.what()) + "\n" + app.help());
  }
  if (help) help->clear();

  Command cmd;
  for (int i = 0; i < argc; ++i) cmd.argv.emplace_back(argv[i]);
  if (gan->parsed()) cmd.kind = CommandKind::kTrainGan;
  if (sr->parsed()) cmd.kind = CommandKind::kTrainSr;
  if (cmp->parsed()) cmd.kind = CommandKind::kCompare;
  if (stats->parsed()) cmd.kind = CommandKind::kStats;
  if (grad->parsed()) cmd.kind = CommandKind::kGradcheck;
  cmd.gradcheck_seed = gradcheck_seed;

  if (!f.config.empty()) {
    cmd.config_path = f.config;
    if (!std::filesystem::exists(*cmd.config_path)) {
      throw UsageError("config file not found: " + f.config);
    }
    try {
      cmd.config = load_run_config(*cmd.config_path);
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
  }

  RunConfig& rc = cmd.config;
  apply_dataset_flags(f, rc.gan.dataset);
  apply_dataset_flags(f, rc.sr.dataset);
  if (!f.head.empty()) rc.gan.head = rc.sr.head = head_flag(f.head, "--head");
  if (f.seed) rc.gan.seed = rc.sr.seed = *f.seed;
  if (f.iterations) {
    rc.gan.generator_iterations = *f.iterations;
    rc.sr.iterations = *f.iterations;
  }
  if (f.batch_size) rc.gan.batch_size = rc.sr.batch_size = *f.batch_size;
  if (f.snapshot_every) rc.gan.snapshot_every = rc.sr.snapshot_every = *f.snapshot_every;
  if (!f.heads.empty()) {
    rc.heads.clear();
    for (const auto& h : f.heads) rc.heads.push_back(head_flag(h, "--heads"));
  }
  if (!f.seeds.empty()) rc.seeds = f.seeds;
  if (!f.regime.empty()) {
    if (f.regime == "gan") {
      cmd.regime = Regime::kGan;
    } else if (f.regime == "sr") {
      cmd.regime = Regime::kSr;
    } else {
      throw UsageError("--regime must be 'gan' or 'sr', got '" + f.regime + "'");
    }
  }
  if (f.size) cmd.stats_size = *f.size;
  cmd.out_dir = f.out_dir.empty() ? default_out_dir(cmd.kind) : std::filesystem::path(f.out_dir);

  // Validate before any compute.
  try {
    switch (cmd.kind) {
      case CommandKind::kTrainGan: rc.gan.validate(); break;
      case CommandKind::kTrainSr: rc.sr.validate(); break;
      case CommandKind::kCompare:
        if (rc.heads.empty() || rc.seeds.empty()) throw UsageError("compare needs heads and seeds");
        if (cmd.regime == Regime::kGan) {
          rc.gan.validate();
        } else {
          rc.sr.validate();
        }
        break;
      case CommandKind::kStats:
        if (cmd.stats_size == 0) throw UsageError("--size must be positive");
        break;
      case CommandKind::kGradcheck: break;
    }
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(std::string("invalid configuration: ") + e.what());
  }
  return cmd;
}

int dispatch(const Command& cmd, std::ostream& out, std::ostream& err) {
  switch (cmd.kind) {
    case CommandKind::kTrainGan: return run_train_gan(cmd, out, err);
    case CommandKind::kTrainSr: return run_train_sr(cmd, out, err);
    case CommandKind::kCompare: return run_compare(cmd, out, err);
    case CommandKind::kStats: return run_stats(cmd, out);
    case CommandKind::kGradcheck: return run_gradcheck(cmd, out);
  }
  return kExitUsage;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Command cmd;
  try {
    std::string help;
    cmd = parse_args(argc, argv, &help);
    if (!help.empty()) {
      out << help;
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (auto warning = cmd.config.gan.dataset.synth.validate();
      warning && cmd.kind != CommandKind::kGradcheck) {
    err << "warning: " << *warning << "\n";
  }
  try {
    return dispatch(cmd, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailed;
  }
}

}  // namespace genhead
