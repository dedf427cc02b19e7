#pragma once

// Checkpoint JSON envelopes and CSV readers/writers.

#include <cstdio>
#include <cstdlib>
#include <limits>
#include <span>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "igct/config.hpp"
#include "igct/error.hpp"
#include "igct/metrics.hpp"
#include "igct/train.hpp"

namespace igct {

inline constexpr int kCheckpointSchemaVersion = 1;

/// Shortest decimal text that round-trips a double.
inline std::string fmt_double(double v) {
  char buf[64];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace detail {

inline json tensors_to_json(const NetParams& p) {
  json arr = json::array();
  for (const auto& [name, t] : p.tensors()) {
    std::vector<double> flat(t->data(), t->data() + t->size());  // column-major
    arr.push_back({{"name", name}, {"shape", {t->rows(), t->cols()}}, {"data", flat}});
  }
  return arr;
}

/// Fills the tensors of `p` (already shaped from its spec) from JSON.
inline void tensors_from_json(NetParams& p, const json& arr, const std::string& where) {
  auto dst = p.tensors();
  if (!arr.is_array() || arr.size() != dst.size()) throw SchemaError(where + ": tensor count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const json& t = arr[i];
    const auto& [name, m] = dst[i];
    if (t.at("name").get<std::string>() != name) throw SchemaError(where + ": expected tensor '" + name + "'");
    const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != m->rows() || shape[1] != m->cols()) {
      throw SchemaError(where + "." + name + ": shape mismatch");
    }
    const auto data = t.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != m->size()) throw SchemaError(where + "." + name + ": size mismatch");
    *m = Eigen::Map<const Eigen::MatrixXd>(data.data(), m->rows(), m->cols());
  }
}

inline json model_to_json(const PrecondModel& m) {
  return json{{"kind", m.kind == ModelKind::kDenoiser ? "denoiser" : "noiser"},
              {"spec", to_json(m.net.spec)},
              {"sigma_data", m.sigma_data},
              {"t_min", m.t_min},
              {"t_max", m.t_max},
              {"tensors", tensors_to_json(m.net)}};
}

inline PrecondModel model_from_json(const json& j, const std::string& where) {
  PrecondModel m;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind != "denoiser" && kind != "noiser") throw SchemaError(where + ".kind: unknown value");
  m.kind = kind == "denoiser" ? ModelKind::kDenoiser : ModelKind::kNoiser;
  const NetSpec spec = net_from_json(j.at("spec"));
  Rng dummy(0);
  m.net = init_params(spec, dummy);
  tensors_from_json(m.net, j.at("tensors"), where);
  m.sigma_data = j.at("sigma_data").get<double>();
  m.t_min = j.at("t_min").get<double>();
  m.t_max = j.at("t_max").get<double>();
  return m;
}

inline json opt_to_json(const OptState& o) {
  return json{{"lr", o.lr},     {"beta1", o.beta1},           {"beta2", o.beta2},          {"eps", o.eps},
              {"step", o.step}, {"m", tensors_to_json(o.m)}, {"v", tensors_to_json(o.v)}};
}

inline OptState opt_from_json(const json& j, const NetParams& shape, const std::string& where) {
  OptState o = OptState::for_params(shape, j.at("lr").get<double>());
  o.beta1 = j.at("beta1").get<double>();
  o.beta2 = j.at("beta2").get<double>();
  o.eps = j.at("eps").get<double>();
  o.step = j.at("step").get<std::int64_t>();
  tensors_from_json(o.m, j.at("m"), where + ".m");
  tensors_from_json(o.v, j.at("v"), where + ".v");
  return o;
}

}  // namespace detail

struct Checkpoint {
  TrainState state;
  ScheduleConfig schedule;
  MixtureWorld world;
};

inline json checkpoint_to_json(const TrainState& s, const ScheduleConfig& sched, const MixtureWorld& world) {
  json j{{"schema_version", kCheckpointSchemaVersion},
         {"algorithm", to_string(s.algorithm)},
         {"k", s.k},
         {"seed", s.seed},
         {"schedule", to_json(sched)},
         {"world", to_json(world)},
         {"denoiser", detail::model_to_json(s.denoiser)},
         {"optimizer", {{"denoiser", detail::opt_to_json(s.opt_denoiser)}}}};
  if (s.noiser) {
    j["noiser"] = detail::model_to_json(*s.noiser);
    if (s.opt_noiser) j["optimizer"]["noiser"] = detail::opt_to_json(*s.opt_noiser);
  }
  return j;
}

inline Checkpoint checkpoint_from_json(const json& j) {
  if (!j.is_object() || !j.contains("schema_version")) throw SchemaError("checkpoint: missing schema_version");
  const int ver = j.at("schema_version").get<int>();
  if (ver != kCheckpointSchemaVersion) {
    throw SchemaError("checkpoint: schema_version " + std::to_string(ver) + " unsupported (expected " +
                      std::to_string(kCheckpointSchemaVersion) + ")");
  }
  try {
    Checkpoint c;
    c.schedule = schedule_from_json(j.at("schedule"));
    c.world = world_from_json(j.at("world"));
    TrainState& s = c.state;
    s.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
    s.record.algorithm = s.algorithm;
    s.k = j.at("k").get<std::int64_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.denoiser = detail::model_from_json(j.at("denoiser"), "denoiser");
    s.opt_denoiser = detail::opt_from_json(j.at("optimizer").at("denoiser"), s.denoiser.net, "optimizer.denoiser");
    if (j.contains("noiser")) {
      s.noiser = detail::model_from_json(j.at("noiser"), "noiser");
      if (j.at("optimizer").contains("noiser")) {
        s.opt_noiser = detail::opt_from_json(j.at("optimizer").at("noiser"), s.noiser->net, "optimizer.noiser");
      }
    }
    return c;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
}

/// Writes to a temporary file then renames, so an existing checkpoint is
/// never left half-written.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

inline void save_checkpoint(const std::filesystem::path& path, const TrainState& s, const ScheduleConfig& sched,
                            const MixtureWorld& world) {
  write_text_atomic(path, checkpoint_to_json(s, sched, world).dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("checkpoint '" + path.string() + "' not found");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  return checkpoint_from_json(j);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string run_record_csv(const RunRecord& r) {
  std::ostringstream os;
  os << "k,loss_gct,loss_ict,loss_recon,lambda_recon,delta_t_stage,wall_ms\n";
  for (const auto& row : r.rows) {
    os << row.k << ',' << fmt_double(row.loss_gct) << ',' << fmt_double(row.loss_ict) << ','
       << fmt_double(row.loss_recon) << ',' << fmt_double(row.lambda_recon) << ',' << row.delta_t_stage << ','
       << row.wall_ms << '\n';
  }
  return os.str();
}

/// Per-column rows: index, class, w, x_0 ... x_{d-1}. A class of -1 marks
/// the null class.
inline std::string samples_csv(const Eigen::MatrixXd& x, std::span<const int> classes, double w) {
  if (static_cast<Eigen::Index>(classes.size()) != x.cols()) throw std::invalid_argument("samples_csv: class count");
  std::ostringstream os;
  os << "index,class,w";
  for (Eigen::Index d = 0; d < x.rows(); ++d) os << ",x_" << d;
  os << '\n';
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    os << i << ',' << classes[static_cast<std::size_t>(i)] << ',' << fmt_double(w);
    for (Eigen::Index d = 0; d < x.rows(); ++d) os << ',' << fmt_double(x(d, i));
    os << '\n';
  }
  return os.str();
}

inline std::string eval_csv_header() {
  return "run_id,method,w,nfe,n_samples,w1,precision,recall,overshoot_fraction,recon_mae,latent_mean_norm,"
         "latent_std_ratio\n";
}

inline std::string eval_csv_row(const std::string& run_id, const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); };
  std::ostringstream os;
  os << run_id << ',' << r.method << ',' << fmt_double(r.w) << ',' << r.nfe << ',' << r.n_samples << ','
     << fmt_double(r.w1) << ',' << fmt_double(r.precision) << ',' << fmt_double(r.recall) << ','
     << fmt_double(r.overshoot_fraction) << ',' << opt(r.recon_mae) << ',' << opt(r.latent_mean_norm) << ','
     << opt(r.latent_std_ratio) << '\n';
  return os.str();
}

/// Appends rows; writes the header first when the file is new or empty.
inline void append_eval_csv(const std::filesystem::path& path, const std::string& run_id,
                            const std::vector<EvalReport>& reports) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  if (fresh) out << eval_csv_header();
  for (const auto& r : reports) out << eval_csv_row(run_id, r);
}

inline json eval_summary_json(const std::string& run_id, const std::vector<EvalReport>& reports) {
  json rows = json::array();
  for (const auto& r : reports) {
    json row{{"method", r.method},       {"w", r.w},           {"nfe", r.nfe},
             {"n_samples", r.n_samples}, {"w1", r.w1},         {"precision", r.precision},
             {"recall", r.recall},       {"overshoot_fraction", r.overshoot_fraction}};
    if (r.recon_mae) row["recon_mae"] = *r.recon_mae;
    if (r.latent_mean_norm) row["latent_mean_norm"] = *r.latent_mean_norm;
    if (r.latent_std_ratio) row["latent_std_ratio"] = *r.latent_std_ratio;
    rows.push_back(row);
  }
  return json{{"run_id", run_id}, {"rows", rows}};
}

/// CSV table with a header row; cells are kept as text.
struct CsvTable {
  std::string name = "csv";
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& col) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == col) return static_cast<int>(i);
    }
    return -1;
  }

  int require_column(const std::string& col) const {
    const int c = column(col);
    if (c < 0) throw std::runtime_error(name + ": missing column '" + col + "'");
    return c;
  }

  /// Numeric value of a cell. Empty cells read as NaN.
  double number(std::size_t row, int col) const {
    const std::string& c = rows.at(row).at(static_cast<std::size_t>(col));
    if (c.empty()) return std::numeric_limits<double>::quiet_NaN();
    char* end = nullptr;
    const double v = std::strtod(c.c_str(), &end);
    if (end == c.c_str() || *end != '\0') {
      throw std::runtime_error(name + ": row " + std::to_string(row + 1) + " column '" + header[static_cast<std::size_t>(col)] +
                               "' is not numeric");
    }
    return v;
  }
};

/// Parses a comma separated table. Rows whose field count differs from the
/// header are malformed.
inline CsvTable parse_csv(const std::string& text, const std::string& name = "csv") {
  std::istringstream in(text);
  std::string line;
  CsvTable t;
  t.name = name;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(s);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line) || line.empty()) throw std::runtime_error(name + ": missing header");
  t.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size()) {
      throw std::runtime_error(name + ": line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                               " fields, expected " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace igct
