#include <cmath>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "igct/config.hpp"
#include "igct/io.hpp"

using namespace igct;
using nlohmann::json;

namespace {

std::filesystem::path source_config(const std::string& name) {
  return std::filesystem::path(IGCT_SOURCE_DIR) / "configs" / name;
}

std::string error_of(const json& j) {
  try {
    parse_run_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TrainState trained_state() {
  ScheduleConfig sched;
  sched.d = 5;
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.iterations = 7;
  NetSpec spec;
  spec.hidden = 8;
  const MixtureWorld world = MixtureWorld::two_mode();
  TrainState s = init_state(Algorithm::kIgct, spec, sched, world, cfg, 3);
  run_training(s, cfg, sched, world);
  return s;
}

}  // namespace

TEST(RunConfig, ShippedConfigsParse) {
  for (const char* name : {"two_mode.json", "smoke.json"}) {
    const RunConfig rc = load_run_config(source_config(name).string());
    EXPECT_EQ(rc.world.n_classes(), 2) << name;
    EXPECT_EQ(rc.net.data_dim, 1) << name;
    EXPECT_DOUBLE_EQ(rc.schedule.sigma_data, rc.world.sigma_data()) << name;
  }
}

TEST(RunConfig, SerializationIsAFixedPoint) {
  const RunConfig rc = load_run_config(source_config("two_mode.json").string());
  const json once = to_json(rc);
  const json twice = to_json(parse_run_config(once));
  EXPECT_EQ(once.dump(), twice.dump());
}

TEST(RunConfig, MissingRequiredFieldIsNamed) {
  json j = json::parse(read_file(source_config("smoke.json")));
  j["schedule"].erase("t_max");
  EXPECT_NE(error_of(j).find("schedule.t_max"), std::string::npos) << error_of(j);
  j = json::parse(read_file(source_config("smoke.json")));
  j.erase("world");
  EXPECT_NE(error_of(j).find("world"), std::string::npos);
  j = json::parse(read_file(source_config("smoke.json")));
  j["train"]["batch_size"] = "big";
  EXPECT_NE(error_of(j).find("train.batch_size"), std::string::npos);
}

TEST(RunConfig, InvalidValuesAreRejected) {
  json j = json::parse(read_file(source_config("smoke.json")));
  j["schedule"]["t_low"] = 20.0;
  EXPECT_NE(error_of(j).find("schedule.t_high"), std::string::npos);
  j = json::parse(read_file(source_config("smoke.json")));
  j["net"]["data_dim"] = 3;
  EXPECT_NE(error_of(j).find("net.data_dim"), std::string::npos);
  j = json::parse(read_file(source_config("smoke.json")));
  j["world"]["components"][0]["weight"] = -1.0;
  EXPECT_FALSE(error_of(j).empty());
}

TEST(Checkpoint, RoundTripPreservesEverything) {
  const TrainState s = trained_state();
  ScheduleConfig sched;
  sched.d = 5;
  const MixtureWorld world = MixtureWorld::two_mode();
  const auto dir = std::filesystem::temp_directory_path() / "igct_ckpt_test";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir / "c.json", s, sched, world);
  const Checkpoint c = load_checkpoint(dir / "c.json");
  EXPECT_EQ(c.state.algorithm, s.algorithm);
  EXPECT_EQ(c.state.k, s.k);
  EXPECT_EQ(c.state.seed, s.seed);
  EXPECT_TRUE(c.state.denoiser.net == s.denoiser.net);
  ASSERT_TRUE(c.state.noiser.has_value());
  EXPECT_TRUE(c.state.noiser->net == s.noiser->net);
  EXPECT_TRUE(c.state.opt_denoiser.m == s.opt_denoiser.m);
  EXPECT_TRUE(c.state.opt_noiser->v == s.opt_noiser->v);
  EXPECT_EQ(c.state.opt_denoiser.step, s.opt_denoiser.step);
  EXPECT_EQ(c.schedule.d, 5);
  EXPECT_EQ(c.state.denoiser.sigma_data, s.denoiser.sigma_data);
  EXPECT_EQ(checkpoint_to_json(c.state, c.schedule, c.world).dump(), checkpoint_to_json(s, sched, world).dump());
  EXPECT_FALSE(std::filesystem::exists(dir / "c.json.tmp"));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, SchemaProblemsAreSchemaErrors) {
  const TrainState s = trained_state();
  json j = checkpoint_to_json(s, ScheduleConfig{}, MixtureWorld::two_mode());
  json bad = j;
  bad["schema_version"] = kCheckpointSchemaVersion + 1;
  EXPECT_THROW(checkpoint_from_json(bad), SchemaError);
  bad = j;
  bad.erase("schema_version");
  EXPECT_THROW(checkpoint_from_json(bad), SchemaError);
  bad = j;
  bad["denoiser"]["tensors"][0]["data"].erase(0);
  EXPECT_THROW(checkpoint_from_json(bad), SchemaError);
  bad = j;
  bad.erase("denoiser");
  EXPECT_THROW(checkpoint_from_json(bad), SchemaError);
  EXPECT_THROW(load_checkpoint("/nonexistent/igct.json"), std::invalid_argument);
}

TEST(Format, ShortestRoundTripDoubles) {
  for (double v : {0.1, 1.0 / 3.0, 2e-5, -80.0, 1e300, 5e-324}) EXPECT_EQ(std::strtod(fmt_double(v).c_str(), nullptr), v);
  EXPECT_EQ(fmt_double(0.1), "0.1");
  EXPECT_EQ(fmt_double(2.0), "2");
}

TEST(Csv, RunRecordLayout) {
  RunRecord r;
  r.rows.push_back({0, 0.5, 0.25, 0.0, 2e-5, 0, 0});
  r.rows.push_back({100, 0.125, 0.0625, 0.01, 2e-5, 1, 0});
  const std::string text = run_record_csv(r);
  EXPECT_EQ(text.substr(0, text.find('\n')), "k,loss_gct,loss_ict,loss_recon,lambda_recon,delta_t_stage,wall_ms");
  const CsvTable t = parse_csv(text);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.number(1, t.require_column("loss_ict")), 0.0625);
  EXPECT_EQ(t.number(1, t.require_column("delta_t_stage")), 1.0);
}

TEST(Csv, EvalRowsLeaveMissingMetricsEmpty) {
  EvalReport r;
  r.method = "cfg-edm";
  r.w = 7;
  r.nfe = 18;
  r.n_samples = 20;
  r.w1 = 0.5;
  const CsvTable t = parse_csv(eval_csv_header() + eval_csv_row("run", r));
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_TRUE(std::isnan(t.number(0, t.require_column("recon_mae"))));
  EXPECT_EQ(t.number(0, t.require_column("w")), 7.0);
  EXPECT_EQ(t.rows[0][static_cast<std::size_t>(t.require_column("method"))], "cfg-edm");
}

TEST(Csv, MalformedInputsAreReported) {
  EXPECT_THROW(parse_csv(""), std::runtime_error);
  EXPECT_THROW(parse_csv("a,b\n1,2,3\n"), std::runtime_error);
  const CsvTable t = parse_csv("a,b\n1,x\n");
  EXPECT_THROW(t.number(0, 1), std::runtime_error);
  EXPECT_THROW(t.require_column("c"), std::runtime_error);
}

TEST(Csv, SamplesLayout) {
  Eigen::MatrixXd x(1, 2);
  x << -2.0, 2.5;
  const std::vector<int> cls{0, 1};
  const CsvTable t = parse_csv(samples_csv(x, cls, 13.0));
  EXPECT_EQ(t.header, (std::vector<std::string>{"index", "class", "w", "x_0"}));
  EXPECT_EQ(t.number(1, 3), 2.5);
  EXPECT_EQ(t.number(1, 1), 1.0);
}
