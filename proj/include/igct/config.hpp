#pragma once

// JSON run configuration: schedule, world, train, net and eval sections.

#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "igct/error.hpp"
#include "igct/net.hpp"
#include "igct/oracle.hpp"
#include "igct/schedule.hpp"
#include "igct/train.hpp"

namespace igct {

using nlohmann::json;

struct EvalConfig {
  int k = 5;
  double band_sigmas = 3.0;
  int count = 10000;
  std::vector<double> w_values{1.0, 7.0, 13.0};
  int nfe = 1;           // consistency models
  int heun_steps = 18;   // diffusion baseline and oracle
  double t_mid = 0.8;
  int recon_samples = 1000;

  void validate() const {
    auto fail = [](const std::string& f, const std::string& why) { throw ConfigError("eval." + f + ": " + why); };
    if (k < 1) fail("k", "must be >= 1");
    if (!(band_sigmas > 0.0)) fail("band_sigmas", "must be > 0");
    if (count <= k) fail("count", "must exceed k");
    if (w_values.empty()) fail("w_values", "must be non-empty");
    if (nfe < 1 || nfe > 2) fail("nfe", "must be 1 or 2");
    if (heun_steps < 1) fail("heun_steps", "must be >= 1");
    if (recon_samples < 1) fail("recon_samples", "must be >= 1");
  }
};

struct RunConfig {
  ScheduleConfig schedule;
  MixtureWorld world;
  TrainConfig train;
  NetSpec net;
  EvalConfig eval;
  std::uint64_t seed = 0;
  std::string output_dir = "runs";
};

namespace detail {

/// Reads a field, naming it by dotted path in errors.
template <class T>
T field(const json& obj, const std::string& section, const std::string& key, std::optional<T> fallback = std::nullopt) {
  const std::string path = section.empty() ? key : section + "." + key;
  if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) {
    if (fallback) return *fallback;
    throw ConfigError(path + ": missing required field");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + ": wrong type");
  }
}

inline const json& section(const json& root, const std::string& key, bool required) {
  static const json empty = json::object();
  if (!root.contains(key)) {
    if (required) throw ConfigError(key + ": missing required section");
    return empty;
  }
  if (!root.at(key).is_object()) throw ConfigError(key + ": must be an object");
  return root.at(key);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Section codecs
// ---------------------------------------------------------------------------

inline json to_json(const ScheduleConfig& s) {
  return json{{"p_mean", s.p_mean}, {"p_std", s.p_std}, {"t_min", s.t_min},   {"t_max", s.t_max},
              {"d", s.d},           {"t_low", s.t_low}, {"t_high", s.t_high}, {"w_min", s.w_min},
              {"w_max", s.w_max},   {"sigma_data", s.sigma_data}, {"q_cap", s.q_cap}};
}

/// sigma_data may be omitted; the caller then fills it from the world.
inline ScheduleConfig schedule_from_json(const json& j, bool* has_sigma_data = nullptr) {
  using detail::field;
  const std::string sec = "schedule";
  ScheduleConfig d;
  ScheduleConfig s;
  s.p_mean = field<double>(j, sec, "p_mean");
  s.p_std = field<double>(j, sec, "p_std");
  s.t_min = field<double>(j, sec, "t_min");
  s.t_max = field<double>(j, sec, "t_max");
  s.d = field<std::int64_t>(j, sec, "d");
  s.w_min = field<double>(j, sec, "w_min");
  s.w_max = field<double>(j, sec, "w_max");
  s.t_low = field<double>(j, sec, "t_low", d.t_low);
  s.t_high = field<double>(j, sec, "t_high", d.t_high);
  s.q_cap = field<double>(j, sec, "q_cap", d.q_cap);
  const bool has = j.contains("sigma_data") && !j.at("sigma_data").is_null();
  if (has) s.sigma_data = field<double>(j, sec, "sigma_data");
  if (has_sigma_data) *has_sigma_data = has;
  return s;
}

inline json to_json(const MixtureWorld& w) {
  json comps = json::array();
  for (const auto& c : w.components()) {
    comps.push_back({{"class_id", c.class_id},
                     {"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())},
                     {"std", c.std},
                     {"weight", c.weight}});
  }
  return json{{"dims", w.dims()}, {"components", comps}};
}

inline MixtureWorld world_from_json(const json& j) {
  using detail::field;
  const int dims = field<int>(j, "world", "dims");
  if (!j.contains("components") || !j.at("components").is_array()) {
    throw ConfigError("world.components: missing required field");
  }
  std::vector<Component> comps;
  for (std::size_t i = 0; i < j.at("components").size(); ++i) {
    const json& c = j.at("components")[i];
    const std::string sec = "world.components[" + std::to_string(i) + "]";
    const auto mean = field<std::vector<double>>(c, sec, "mean");
    Component comp;
    comp.class_id = field<int>(c, sec, "class_id");
    comp.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    comp.std = field<double>(c, sec, "std");
    comp.weight = field<double>(c, sec, "weight");
    comps.push_back(std::move(comp));
  }
  return MixtureWorld(dims, std::move(comps));
}

inline json to_json(const TrainConfig& t) {
  json sched = json::array();
  for (const auto& [until, value] : t.lambda_recon_schedule) sched.push_back({{"until", until}, {"value", value}});
  return json{{"batch_size", t.batch_size},
              {"iterations", t.iterations},
              {"i_skip", t.i_skip},
              {"lambda_recon_schedule", sched},
              {"huber_c", t.huber_c},
              {"label_dropout", t.label_dropout},
              {"distill_n", t.distill_n},
              {"rho", t.rho},
              {"lr", t.lr},
              {"lr_noiser", t.lr_noiser},
              {"lr_final_ratio", t.lr_final_ratio},
              {"max_stage", t.max_stage ? json(*t.max_stage) : json(nullptr)},
              {"log_every", t.log_every},
              {"checkpoint_every", t.checkpoint_every},
              {"record_wall_ms", t.record_wall_ms}};
}

inline TrainConfig train_from_json(const json& j) {
  using detail::field;
  const std::string sec = "train";
  TrainConfig d;
  TrainConfig t;
  t.batch_size = field<int>(j, sec, "batch_size", d.batch_size);
  t.iterations = field<std::int64_t>(j, sec, "iterations", d.iterations);
  t.i_skip = field<std::int64_t>(j, sec, "i_skip", d.i_skip);
  if (j.contains("lambda_recon_schedule")) {
    const json& arr = j.at("lambda_recon_schedule");
    if (!arr.is_array()) throw ConfigError("train.lambda_recon_schedule: must be an array");
    t.lambda_recon_schedule.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string s = sec + ".lambda_recon_schedule[" + std::to_string(i) + "]";
      t.lambda_recon_schedule.emplace_back(
          field<std::int64_t>(arr[i], s, "until", std::numeric_limits<std::int64_t>::max()),
          field<double>(arr[i], s, "value"));
    }
  }
  t.huber_c = field<double>(j, sec, "huber_c", d.huber_c);
  t.label_dropout = field<double>(j, sec, "label_dropout", d.label_dropout);
  t.distill_n = field<int>(j, sec, "distill_n", d.distill_n);
  t.rho = field<double>(j, sec, "rho", d.rho);
  t.lr = field<double>(j, sec, "lr", d.lr);
  t.lr_noiser = field<double>(j, sec, "lr_noiser", d.lr_noiser);
  t.lr_final_ratio = field<double>(j, sec, "lr_final_ratio", d.lr_final_ratio);
  if (j.contains("max_stage") && !j.at("max_stage").is_null()) t.max_stage = field<std::int64_t>(j, sec, "max_stage");
  t.log_every = field<std::int64_t>(j, sec, "log_every", d.log_every);
  t.checkpoint_every = field<std::int64_t>(j, sec, "checkpoint_every", d.checkpoint_every);
  t.record_wall_ms = field<bool>(j, sec, "record_wall_ms", d.record_wall_ms);
  return t;
}

inline json to_json(const NetSpec& n) {
  return json{{"data_dim", n.data_dim},
              {"n_classes", n.n_classes},
              {"fourier_frequencies", n.fourier_frequencies},
              {"time_freq_min", n.time_freq_min},
              {"time_freq_max", n.time_freq_max},
              {"time_features", n.time_features},
              {"class_features", n.class_features},
              {"guidance_features", n.guidance_features},
              {"w_freq_min", n.w_freq_min},
              {"w_freq_max", n.w_freq_max},
              {"hidden", n.hidden},
              {"depth", n.depth},
              {"zero_init_output", n.zero_init_output}};
}

inline NetSpec net_from_json(const json& j) {
  using detail::field;
  const std::string sec = "net";
  NetSpec d;
  NetSpec n;
  n.data_dim = field<int>(j, sec, "data_dim", d.data_dim);
  n.n_classes = field<int>(j, sec, "n_classes", d.n_classes);
  n.fourier_frequencies = field<int>(j, sec, "fourier_frequencies", d.fourier_frequencies);
  n.time_freq_min = field<double>(j, sec, "time_freq_min", d.time_freq_min);
  n.time_freq_max = field<double>(j, sec, "time_freq_max", d.time_freq_max);
  n.time_features = field<int>(j, sec, "time_features", d.time_features);
  n.class_features = field<int>(j, sec, "class_features", d.class_features);
  n.guidance_features = field<int>(j, sec, "guidance_features", d.guidance_features);
  n.w_freq_min = field<double>(j, sec, "w_freq_min", d.w_freq_min);
  n.w_freq_max = field<double>(j, sec, "w_freq_max", d.w_freq_max);
  n.hidden = field<int>(j, sec, "hidden", d.hidden);
  n.depth = field<int>(j, sec, "depth", d.depth);
  n.zero_init_output = field<bool>(j, sec, "zero_init_output", d.zero_init_output);
  return n;
}

inline json to_json(const EvalConfig& e) {
  return json{{"k", e.k},       {"band_sigmas", e.band_sigmas}, {"count", e.count},
              {"w_values", e.w_values}, {"nfe", e.nfe}, {"heun_steps", e.heun_steps},
              {"t_mid", e.t_mid}, {"recon_samples", e.recon_samples}};
}

inline EvalConfig eval_from_json(const json& j) {
  using detail::field;
  const std::string sec = "eval";
  EvalConfig d;
  EvalConfig e;
  e.k = field<int>(j, sec, "k", d.k);
  e.band_sigmas = field<double>(j, sec, "band_sigmas", d.band_sigmas);
  e.count = field<int>(j, sec, "count", d.count);
  e.w_values = field<std::vector<double>>(j, sec, "w_values", d.w_values);
  e.nfe = field<int>(j, sec, "nfe", d.nfe);
  e.heun_steps = field<int>(j, sec, "heun_steps", d.heun_steps);
  e.t_mid = field<double>(j, sec, "t_mid", d.t_mid);
  e.recon_samples = field<int>(j, sec, "recon_samples", d.recon_samples);
  return e;
}

// ---------------------------------------------------------------------------
// Whole config
// ---------------------------------------------------------------------------

/// Parses and validates a run config. Throws ConfigError naming the field.
inline RunConfig parse_run_config(const json& root) {
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  RunConfig rc;
  bool has_sigma = false;
  rc.schedule = schedule_from_json(detail::section(root, "schedule", true), &has_sigma);
  rc.world = world_from_json(detail::section(root, "world", true));
  if (!has_sigma) rc.schedule.sigma_data = rc.world.sigma_data();
  rc.train = train_from_json(detail::section(root, "train", false));
  rc.net = net_from_json(detail::section(root, "net", false));
  rc.eval = eval_from_json(detail::section(root, "eval", false));
  rc.seed = detail::field<std::uint64_t>(root, "", "seed", std::uint64_t{0});
  rc.output_dir = detail::field<std::string>(root, "", "output_dir", std::string("runs"));

  // The network shape always follows the world.
  if (root.contains("net") && root.at("net").contains("data_dim") && rc.net.data_dim != rc.world.dims()) {
    throw ConfigError("net.data_dim: does not match world.dims");
  }
  if (root.contains("net") && root.at("net").contains("n_classes") && rc.net.n_classes != rc.world.n_classes()) {
    throw ConfigError("net.n_classes: does not match the classes in world.components");
  }
  rc.net.data_dim = rc.world.dims();
  rc.net.n_classes = rc.world.n_classes();

  rc.schedule.validate();
  rc.train.validate();
  rc.net.validate();
  rc.eval.validate();
  if (!(rc.eval.t_mid >= rc.schedule.t_min && rc.eval.t_mid <= rc.schedule.t_max)) {
    throw ConfigError("eval.t_mid: must lie in [schedule.t_min, schedule.t_max]");
  }
  return rc;
}

inline json to_json(const RunConfig& rc) {
  return json{{"schedule", to_json(rc.schedule)}, {"world", to_json(rc.world)}, {"train", to_json(rc.train)},
              {"net", to_json(rc.net)},           {"eval", to_json(rc.eval)},   {"seed", rc.seed},
              {"output_dir", rc.output_dir}};
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_run_config(root);
}

}  // namespace igct
