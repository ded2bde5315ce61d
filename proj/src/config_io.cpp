#include "genhead/config_io.hpp"

#include <fstream>
#include <set>
#include <string>

namespace genhead {

using nlohmann::json;

namespace {

// Reads keys of one JSON object and rejects any key that was not consumed.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + where_ + "." + it.key());
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

OutputHeadKind head_from(const json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + " must be a head name string");
  try {
    return parse_head_kind(j.get<std::string>());
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

json adam_json(const AdamConfig& a) {
  return {{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
}

void read_adam(const json& j, const std::string& where, AdamConfig& a) {
  Section s(j, where);
  s.read("lr", a.lr);
  s.read("beta1", a.beta1);
  s.read("beta2", a.beta2);
  s.read("eps", a.eps);
  s.finish();
}

json dataset_json(const DatasetConfig& d) {
  return {{"source", d.source == DatasetSource::kSynthetic ? "synthetic" : "cifar"},
          {"synth",
           {{"mean", d.synth.mean},
            {"std", d.synth.std},
            {"structure", std::string(to_string(d.synth.structure))},
            {"seed", d.synth.seed}}},
          {"synth_count", d.synth_count},
          {"cifar_path", d.cifar_path},
          {"cifar_label", d.cifar_label}};
}

void read_dataset(const json& j, const std::string& where, DatasetConfig& d) {
  Section s(j, where);
  std::string source = d.source == DatasetSource::kSynthetic ? "synthetic" : "cifar";
  s.read("source", source);
  if (source == "synthetic") {
    d.source = DatasetSource::kSynthetic;
  } else if (source == "cifar") {
    d.source = DatasetSource::kCifar;
  } else {
    throw ConfigError(s.path("source") + ": expected \"synthetic\" or \"cifar\", got \"" + source + "\"");
  }
  if (const json* synth = s.child("synth")) {
    Section ss(*synth, s.path("synth"));
    ss.read("mean", d.synth.mean);
    ss.read("std", d.synth.std);
    std::string structure(to_string(d.synth.structure));
    ss.read("structure", structure);
    try {
      d.synth.structure = parse_synth_structure(structure);
    } catch (const std::exception& e) {
      throw ConfigError(ss.path("structure") + ": " + e.what());
    }
    ss.read("seed", d.synth.seed);
    ss.finish();
  }
  s.read("synth_count", d.synth_count);
  s.read("cifar_path", d.cifar_path);
  if (const json* label = s.child("cifar_label")) {
    try {
      d.cifar_label = label->is_string() ? cifar_label(label->get<std::string>()) : label->get<int>();
    } catch (const std::exception& e) {
      throw ConfigError(s.path("cifar_label") + ": " + e.what());
    }
  }
  s.finish();
}

}  // namespace

json to_json(const GanConfig& c) {
  const TrainSchedule& t = c.schedule;
  return {{"z_dim", c.z_dim},
          {"image_size", c.image_size},
          {"batch_size", c.batch_size},
          {"generator_iterations", c.generator_iterations},
          {"head", std::string(to_string(c.head))},
          {"lambda", c.lambda},
          {"adam", adam_json(c.adam)},
          {"seed", c.seed},
          {"dataset", dataset_json(c.dataset)},
          {"schedule",
           {{"n_critic_default", t.n_critic_default},
            {"warmup_gen_iters", t.warmup_gen_iters},
            {"warmup_n_critic", t.warmup_n_critic},
            {"recalibration_gen_iter", t.recalibration_gen_iter},
            {"recalibration_n_critic", t.recalibration_n_critic},
            {"recalibration_repeats", t.recalibration_repeats}}},
          {"generator_width", c.generator_width},
          {"critic_width", c.critic_width},
          {"snapshot_every", c.snapshot_every},
          {"convergence_delta", c.convergence_delta}};
}

json to_json(const SrConfig& c) {
  return {{"high_size", c.high_size},
          {"factor", c.factor},
          {"batch_size", c.batch_size},
          {"iterations", c.iterations},
          {"head", std::string(to_string(c.head))},
          {"loss_net_seed", c.loss_net_seed},
          {"loss_net_widths", c.loss_net_widths},
          {"loss_weights", c.loss_weights},
          {"adam", adam_json(c.adam)},
          {"seed", c.seed},
          {"dataset", dataset_json(c.dataset)},
          {"generator_width", c.generator_width},
          {"snapshot_every", c.snapshot_every},
          {"convergence_delta", c.convergence_delta}};
}

json to_json(const RunConfig& c) {
  json heads = json::array();
  for (OutputHeadKind h : c.heads) heads.push_back(std::string(to_string(h)));
  return {{"gan", to_json(c.gan)},
          {"sr", to_json(c.sr)},
          {"compare", {{"heads", heads}, {"seeds", c.seeds}}}};
}

GanConfig gan_config_from_json(const json& j, GanConfig c) {
  Section s(j, "gan");
  s.read("z_dim", c.z_dim);
  s.read("image_size", c.image_size);
  s.read("batch_size", c.batch_size);
  s.read("generator_iterations", c.generator_iterations);
  if (const json* h = s.child("head")) c.head = head_from(*h, s.path("head"));
  s.read("lambda", c.lambda);
  if (const json* a = s.child("adam")) read_adam(*a, s.path("adam"), c.adam);
  s.read("seed", c.seed);
  if (const json* d = s.child("dataset")) read_dataset(*d, s.path("dataset"), c.dataset);
  if (const json* t = s.child("schedule")) {
    Section ts(*t, s.path("schedule"));
    ts.read("n_critic_default", c.schedule.n_critic_default);
    ts.read("warmup_gen_iters", c.schedule.warmup_gen_iters);
    ts.read("warmup_n_critic", c.schedule.warmup_n_critic);
    ts.read("recalibration_gen_iter", c.schedule.recalibration_gen_iter);
    ts.read("recalibration_n_critic", c.schedule.recalibration_n_critic);
    ts.read("recalibration_repeats", c.schedule.recalibration_repeats);
    ts.finish();
  }
  s.read("generator_width", c.generator_width);
  s.read("critic_width", c.critic_width);
  s.read("snapshot_every", c.snapshot_every);
  s.read("convergence_delta", c.convergence_delta);
  s.finish();
  return c;
}

SrConfig sr_config_from_json(const json& j, SrConfig c) {
  Section s(j, "sr");
  s.read("high_size", c.high_size);
  s.read("factor", c.factor);
  s.read("batch_size", c.batch_size);
  s.read("iterations", c.iterations);
  if (const json* h = s.child("head")) c.head = head_from(*h, s.path("head"));
  s.read("loss_net_seed", c.loss_net_seed);
  s.read("loss_net_widths", c.loss_net_widths);
  s.read("loss_weights", c.loss_weights);
  if (const json* a = s.child("adam")) read_adam(*a, s.path("adam"), c.adam);
  s.read("seed", c.seed);
  if (const json* d = s.child("dataset")) read_dataset(*d, s.path("dataset"), c.dataset);
  s.read("generator_width", c.generator_width);
  s.read("snapshot_every", c.snapshot_every);
  s.read("convergence_delta", c.convergence_delta);
  s.finish();
  return c;
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
  Section s(j, "config");
  if (const json* g = s.child("gan")) c.gan = gan_config_from_json(*g, c.gan);
  if (const json* r = s.child("sr")) c.sr = sr_config_from_json(*r, c.sr);
  if (const json* cmp = s.child("compare")) {
    Section cs(*cmp, "compare");
    if (const json* heads = cs.child("heads")) {
      if (!heads->is_array()) throw ConfigError("compare.heads must be an array");
      c.heads.clear();
      for (const auto& h : *heads) c.heads.push_back(head_from(h, "compare.heads"));
    }
    cs.read("seeds", c.seeds);
    cs.finish();
  }
  s.finish();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace genhead
