// Command-line front end: train, sample, invert, edit, eval, plot.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "igct/config.hpp"
#include "igct/error.hpp"
#include "igct/evaluate.hpp"
#include "igct/io.hpp"
#include "igct/plot.hpp"
#include "igct/sampler.hpp"
#include "igct/train.hpp"

namespace fs = std::filesystem;
using namespace igct;

namespace {

struct Flags {
  std::string config;
  std::string algorithm = "igct";
  std::string method = "igct";
  std::vector<std::string> methods;
  std::optional<double> w;
  std::vector<double> ws;
  std::optional<int> nfe;
  int cls = 0;
  int target = 1;
  std::optional<int> count;
  std::optional<std::uint64_t> seed;
  std::string input;
  std::vector<std::string> inputs;
  std::vector<std::string> labels;
  std::string output;
  std::string checkpoint;
  std::string run_id = "run";
  std::string kind = "histogram";
  std::string metric = "precision";
  bool trajectory = false;
  int ddim_steps = 18;
};

fs::path output_dir(const RunConfig& rc) {
  if (const char* env = std::getenv("IGCT_OUTPUT_DIR"); env && *env) return env;
  return rc.output_dir;
}

fs::path checkpoint_path(const fs::path& out, const std::string& algo) { return out / algo / "checkpoint.json"; }

void write_file(const fs::path& path, const std::string& text) {
  write_text_atomic(path, text);
  std::cout << "wrote " << path.string() << "\n";
}

std::string w_tag(double w) {
  std::string s = fmt_double(w);
  for (char& c : s) {
    if (c == '.') c = 'p';
  }
  return s;
}

/// Loads a checkpoint and checks it was trained on the configured world.
TrainState load_state(const fs::path& path, const RunConfig& rc, std::optional<Algorithm> expect) {
  Checkpoint ck = load_checkpoint(path);
  if (expect && ck.state.algorithm != *expect) {
    throw SchemaError("checkpoint '" + path.string() + "' holds " + to_string(ck.state.algorithm) + ", expected " +
                      to_string(*expect));
  }
  if (ck.world.dims() != rc.world.dims() || ck.world.n_classes() != rc.world.n_classes()) {
    throw SchemaError("checkpoint '" + path.string() + "' was trained on a different world");
  }
  return std::move(ck.state);
}

Algorithm algorithm_for(ModelSource m) {
  switch (m) {
    case ModelSource::kIgct: return Algorithm::kIgct;
    case ModelSource::kCfgEdm: return Algorithm::kCfgEdm;
    case ModelSource::kGuidedCd: return Algorithm::kGuidedCd;
    case ModelSource::kOracle: break;
  }
  throw std::logic_error("oracle has no checkpoint");
}

ModelSet load_models(const RunConfig& rc, const std::vector<ModelSource>& needed, const std::string& explicit_ckpt) {
  ModelSet set;
  for (ModelSource m : needed) {
    if (m == ModelSource::kOracle) continue;
    const Algorithm a = algorithm_for(m);
    const fs::path p = !explicit_ckpt.empty() && needed.size() == 1 ? fs::path(explicit_ckpt)
                                                                    : checkpoint_path(output_dir(rc), to_string(a));
    TrainState s = load_state(p, rc, a);
    if (m == ModelSource::kIgct) set.igct = std::move(s);
    if (m == ModelSource::kCfgEdm) set.cfg_edm = std::move(s);
    if (m == ModelSource::kGuidedCd) set.guided_cd = std::move(s);
  }
  return set;
}

/// Rows of x_0.. from a samples CSV, or fresh data of one class.
Eigen::MatrixXd input_points(const Flags& f, const RunConfig& rc, int cls, int count, std::uint64_t seed) {
  if (f.input.empty()) return reference_data(rc.world, cls, count, seed);
  const CsvTable t = parse_csv(read_file(f.input), f.input);
  Eigen::MatrixXd x(rc.world.dims(), static_cast<Eigen::Index>(t.rows.size()));
  for (int d = 0; d < rc.world.dims(); ++d) {
    const int c = t.require_column("x_" + std::to_string(d));
    for (std::size_t r = 0; r < t.rows.size(); ++r) x(d, static_cast<Eigen::Index>(r)) = t.number(r, c);
  }
  return x;
}

// ---------------------------------------------------------------------------

int cmd_train(const Flags& f) {
  const RunConfig rc = load_run_config(f.config);
  const Algorithm algo = parse_algorithm(f.algorithm);
  const std::uint64_t seed = f.seed.value_or(rc.seed);
  const fs::path dir = output_dir(rc) / to_string(algo);
  const fs::path ckpt = dir / "checkpoint.json";

  TrainState state = init_state(algo, rc.net, rc.schedule, rc.world, rc.train, seed);
  auto save = [&](const TrainState& s) { save_checkpoint(ckpt, s, rc.schedule, rc.world); };
  try {
    run_training(state, rc.train, rc.schedule, rc.world, save);
  } catch (const DivergenceError&) {
    write_file(dir / "run_record.csv", run_record_csv(state.record));
    throw;
  }
  save(state);
  std::cout << "wrote " << ckpt.string() << "\n";
  write_file(dir / "run_record.csv", run_record_csv(state.record));
  return kExitOk;
}

int cmd_sample(const Flags& f) {
  const RunConfig rc = load_run_config(f.config);
  SampleRequest req;
  req.model = parse_model_source(f.method);
  const bool cm = req.model == ModelSource::kIgct || req.model == ModelSource::kGuidedCd;
  req.cls = f.cls;
  req.w = f.w.value_or(1.0);
  req.nfe = f.nfe.value_or(cm ? rc.eval.nfe : rc.eval.heun_steps);
  req.count = f.count.value_or(rc.eval.count);
  req.seed = f.seed.value_or(rc.seed);
  req.t_mid = rc.eval.t_mid;
  rc.world.check_class(req.cls);
  const ModelSet models = load_models(rc, {req.model}, f.checkpoint);

  NfeCounter counter;
  std::vector<TrajectoryPoint> path;
  const Eigen::MatrixXd x = generate(models, rc.world, rc.schedule, req, &counter, f.trajectory ? &path : nullptr);
  const std::string stem = "samples_" + f.method + "_c" + std::to_string(req.cls) + "_w" + w_tag(req.w) + "_nfe" +
                           std::to_string(req.nfe);
  const fs::path out = f.output.empty() ? output_dir(rc) / (stem + ".csv") : fs::path(f.output);
  const std::vector<int> cls(static_cast<std::size_t>(x.cols()), req.cls);
  write_file(out, samples_csv(x, cls, req.w));
  if (f.trajectory) {
    std::ostringstream os;
    os << "index,t";
    for (int d = 0; d < rc.world.dims(); ++d) os << ",x_" << d;
    os << '\n';
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
      for (const auto& p : path) {
        os << i << ',' << fmt_double(p.t);
        for (int d = 0; d < rc.world.dims(); ++d) os << ',' << fmt_double(p.x(d, i));
        os << '\n';
      }
    }
    fs::path tp = out;
    tp.replace_filename(out.stem().string() + "_trajectory.csv");
    write_file(tp, os.str());
  }
  if (req.model != ModelSource::kOracle) std::cout << "network evaluations: " << counter.evals << "\n";
  return kExitOk;
}

int cmd_invert(const Flags& f) {
  const RunConfig rc = load_run_config(f.config);
  const ModelSource m = parse_model_source(f.method);
  rc.world.check_class(f.cls);
  const std::uint64_t seed = f.seed.value_or(rc.seed);
  const Eigen::MatrixXd x = input_points(f, rc, f.cls, f.count.value_or(rc.eval.recon_samples), seed);
  Eigen::MatrixXd latent;
  if (m == ModelSource::kIgct) {
    const ModelSet models = load_models(rc, {m}, f.checkpoint);
    if (!models.igct->noiser) throw SchemaError("checkpoint has no noiser");
    latent = noiser_invert(*models.igct->noiser, x, f.cls);
  } else if (m == ModelSource::kCfgEdm) {
    const ModelSet models = load_models(rc, {m}, f.checkpoint);
    latent = ddim_invert(model_denoiser(models.cfg_edm->denoiser), x, f.cls, f.ddim_steps, rc.schedule);
  } else if (m == ModelSource::kOracle) {
    latent = ddim_invert(oracle_denoiser(rc.world), x, f.cls, f.ddim_steps, rc.schedule);
  } else {
    throw ConfigError("--method: invert supports igct | cfg-edm | oracle");
  }
  const fs::path out = f.output.empty() ? output_dir(rc) / ("latents_" + f.method + "_c" + std::to_string(f.cls) + ".csv")
                                        : fs::path(f.output);
  const std::vector<int> cls(static_cast<std::size_t>(x.cols()), f.cls);
  write_file(out, samples_csv(latent, cls, 1.0));
  const auto [mean_norm, std_ratio] = latent_statistics(latent, rc.schedule.t_max);
  std::cout << "latent |mean|/t_max " << fmt_double(mean_norm) << " std/t_max " << fmt_double(std_ratio) << "\n";
  return kExitOk;
}

int cmd_edit(const Flags& f) {
  const RunConfig rc = load_run_config(f.config);
  rc.world.check_class(f.cls);
  rc.world.check_class(f.target);
  const double w = f.w.value_or(rc.schedule.w_min);
  const std::uint64_t seed = f.seed.value_or(rc.seed);
  const Eigen::MatrixXd x = input_points(f, rc, f.cls, f.count.value_or(rc.eval.recon_samples), seed);
  Eigen::MatrixXd edited;
  std::int64_t per_edit = 0;
  if (f.method == "igct") {
    const ModelSet models = load_models(rc, {ModelSource::kIgct}, f.checkpoint);
    if (!models.igct->noiser) throw SchemaError("checkpoint has no noiser");
    NfeCounter counter;
    edited = edit_igct(models.igct->denoiser, *models.igct->noiser, x, f.cls, f.target, w, &counter);
    per_edit = counter.evals;
  } else if (f.method == "ddim" || f.method == "cfg-edm") {
    const ModelSet models = load_models(rc, {ModelSource::kCfgEdm}, f.checkpoint);
    NfeCounter counter;
    edited = edit_ddim(model_denoiser(models.cfg_edm->denoiser, &counter), x, f.cls, f.target, w, f.ddim_steps,
                       rc.schedule);
    per_edit = counter.evals;
  } else {
    throw ConfigError("--method: edit supports igct | ddim");
  }
  const fs::path out = f.output.empty() ? output_dir(rc) / ("edit_" + f.method + "_c" + std::to_string(f.cls) + "_to" +
                                                            std::to_string(f.target) + "_w" + w_tag(w) + ".csv")
                                        : fs::path(f.output);
  const std::vector<int> cls(static_cast<std::size_t>(x.cols()), f.target);
  write_file(out, samples_csv(edited, cls, w));
  std::cout << "network evaluations per edit: " << per_edit << "\n";
  return kExitOk;
}

int cmd_eval(const Flags& f) {
  const RunConfig rc = load_run_config(f.config);
  std::vector<ModelSource> methods;
  for (const auto& m : f.methods.empty() ? std::vector<std::string>{f.method} : f.methods) {
    methods.push_back(parse_model_source(m));
  }
  const std::vector<double> ws = !f.ws.empty() ? f.ws : f.w ? std::vector<double>{*f.w} : rc.eval.w_values;
  EvalSettings es;
  es.count = f.count.value_or(rc.eval.count);
  es.k = rc.eval.k;
  es.band_sigmas = rc.eval.band_sigmas;
  es.nfe = f.nfe.value_or(rc.eval.nfe);
  es.heun_steps = rc.eval.heun_steps;
  es.t_mid = rc.eval.t_mid;
  es.recon_samples = rc.eval.recon_samples;
  es.seed = f.seed.value_or(rc.seed);
  const ModelSet models = load_models(rc, methods, f.checkpoint);

  std::vector<EvalReport> reports;
  for (ModelSource m : methods) {
    for (double w : ws) {
      reports.push_back(evaluate_condition(models, rc.world, rc.schedule, m, w, es));
      const EvalReport& r = reports.back();
      std::cout << r.method << " w=" << fmt_double(r.w) << " nfe=" << r.nfe << " W1=" << fmt_double(r.w1)
                << " precision=" << fmt_double(r.precision) << " recall=" << fmt_double(r.recall)
                << " overshoot=" << fmt_double(r.overshoot_fraction) << "\n";
    }
  }

  // Rows of the same run_id are replaced, so re-running is idempotent.
  const fs::path csv = f.output.empty() ? output_dir(rc) / "eval.csv" : fs::path(f.output);
  std::string text = eval_csv_header();
  if (fs::exists(csv)) {
    const CsvTable old = parse_csv(read_file(csv), csv.string());
    const int rid = old.require_column("run_id");
    std::istringstream in(read_file(csv));
    std::string line;
    std::getline(in, line);
    std::size_t r = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (old.rows[r][static_cast<std::size_t>(rid)] != f.run_id) text += line + "\n";
      ++r;
    }
  }
  for (const auto& r : reports) text += eval_csv_row(f.run_id, r);
  write_file(csv, text);
  fs::path js = csv;
  js.replace_filename(csv.stem().string() + "_" + f.run_id + ".json");
  write_file(js, eval_summary_json(f.run_id, reports).dump(2) + "\n");
  return kExitOk;
}

int cmd_plot(const Flags& f) {
  std::vector<std::string> inputs = f.inputs;
  if (!f.input.empty()) inputs.insert(inputs.begin(), f.input);
  if (inputs.empty()) throw ConfigError("--input: at least one CSV is required");
  if (f.output.empty()) throw ConfigError("--output: an SVG path is required");
  std::vector<CsvTable> tables;
  for (const auto& p : inputs) tables.push_back(parse_csv(read_file(p), p));
  std::vector<std::string> labels = f.labels;
  for (std::size_t i = labels.size(); i < inputs.size(); ++i) labels.push_back(fs::path(inputs[i]).stem().string());

  Chart chart;
  switch (parse_plot_kind(f.kind)) {
    case PlotKind::kHistogram: chart = histogram_chart(tables, labels); break;
    case PlotKind::kTrajectory: chart = trajectory_chart(tables.front(), labels.front()); break;
    case PlotKind::kSweep: chart = sweep_chart(tables, f.metric); break;
  }
  write_file(f.output, render_svg(chart));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided consistency training toolkit"};
  app.require_subcommand(1);
  Flags f;

  auto add_config = [&](CLI::App* c) { c->add_option("--config", f.config, "Run config JSON")->required(); };
  auto add_common = [&](CLI::App* c) {
    add_config(c);
    c->add_option("--seed", f.seed, "Override the config seed");
    c->add_option("--checkpoint", f.checkpoint, "Explicit checkpoint path");
    c->add_option("--output", f.output, "Output file");
  };

  CLI::App* train = app.add_subcommand("train", "Train a model");
  add_config(train);
  train->add_option("--algorithm", f.algorithm, "igct | cfg-edm | guided-cd");
  train->add_option("--seed", f.seed, "Override the config seed");

  CLI::App* sample = app.add_subcommand("sample", "Draw samples");
  add_common(sample);
  sample->add_option("--method", f.method, "igct | cfg-edm | guided-cd | oracle");
  sample->add_option("--class", f.cls, "Class label");
  sample->add_option("--w", f.w, "Guidance scale");
  sample->add_option("--nfe", f.nfe, "Network evaluations (steps for multi-step methods)");
  sample->add_option("--count", f.count, "Number of samples");
  sample->add_flag("--trajectory", f.trajectory, "Also dump the ODE path (multi-step methods)");

  CLI::App* invert = app.add_subcommand("invert", "Map data to latents");
  add_common(invert);
  invert->add_option("--method", f.method, "igct | cfg-edm | oracle");
  invert->add_option("--class", f.cls, "Class label");
  invert->add_option("--count", f.count, "Fresh data points when no --input is given");
  invert->add_option("--input", f.input, "Samples CSV to invert");
  invert->add_option("--steps", f.ddim_steps, "Steps for ODE inversion");

  CLI::App* edit = app.add_subcommand("edit", "Class-to-class editing");
  add_common(edit);
  edit->add_option("--method", f.method, "igct | ddim");
  edit->add_option("--class", f.cls, "Source class");
  edit->add_option("--target", f.target, "Target class");
  edit->add_option("--w", f.w, "Guidance scale");
  edit->add_option("--count", f.count, "Fresh data points when no --input is given");
  edit->add_option("--input", f.input, "Samples CSV to edit");
  edit->add_option("--steps", f.ddim_steps, "Steps for the ODE baseline");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate over a w sweep");
  add_common(eval);
  eval->add_option("--method", f.methods, "Methods to evaluate (repeatable)");
  eval->add_option("--w", f.ws, "Guidance scales (repeatable, default from config)");
  eval->add_option("--nfe", f.nfe, "Consistency model NFE");
  eval->add_option("--count", f.count, "Samples per class");
  eval->add_option("--run-id", f.run_id, "Row key in the EvalReport CSV");

  CLI::App* plot = app.add_subcommand("plot", "Render CSV outputs as SVG");
  plot->add_option("--kind", f.kind, "histogram | trajectory | sweep");
  plot->add_option("--input", f.inputs, "Input CSV (repeatable)");
  plot->add_option("--label", f.labels, "Series label (repeatable)");
  plot->add_option("--metric", f.metric, "Metric column for sweep plots");
  plot->add_option("--output", f.output, "SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(f);
    if (*sample) return cmd_sample(f);
    if (*invert) return cmd_invert(f);
    if (*edit) return cmd_edit(f);
    if (*eval) return cmd_eval(f);
    if (*plot) return cmd_plot(f);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const std::out_of_range& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
