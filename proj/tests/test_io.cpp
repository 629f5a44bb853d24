#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"

#include "padsim/error.hpp"
#include "padsim/io.hpp"

using namespace padsim;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "padsim_io_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

}  // namespace

TEST_CASE("format_double round-trips") {
  for (double x : {0.0, 1.0, -2.5, 0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -0.0}) {
    const std::string s = io::format_double(x);
    CHECK(std::stod(s) == x);
  }
  CHECK(io::format_double(0.3) == "0.3");
  CHECK(io::format_double(std::numeric_limits<double>::quiet_NaN()) == "NA");
}

TEST_CASE("config json round-trip") {
  ScenarioConfig c;
  c.seed = 99;
  c.replicates = 17;
  c.effects = {0.0, 0.25};
  c.sample_sizes = {400};
  c.dropout.placebo.inefficacy_prob = 0.11;
  c.params.progressor.year[2] = -0.123;
  c.mmrm_covariance = MmrmCovariance::Ar1;
  c.forest_training.forest.n_trees = 33;
  const ScenarioConfig back = io::config_from_json(io::to_json(c));
  CHECK(io::to_json(back) == io::to_json(c));
  CHECK(back.seed == 99);
  CHECK(back.design.seed == 99);
  CHECK(back.dropout.placebo.inefficacy_prob == 0.11);
  CHECK(back.params.progressor.year[2] == -0.123);
  CHECK(back.params.stable.random_effects_cov == c.params.stable.random_effects_cov);
  CHECK(back.mmrm_covariance == MmrmCovariance::Ar1);
  CHECK(io::config_hash(back) == io::config_hash(c));

  ScenarioConfig d = c;
  d.seed = 100;
  CHECK(io::config_hash(d) != io::config_hash(c));
  CHECK(io::config_hash(c).size() == 16);
  CHECK(io::file_header(c) == "# padsim config_hash=" + io::config_hash(c) + " seed=99");
}

TEST_CASE("config rejects unknown keys and bad values") {
  using io::json;
  CHECK_THROWS_AS(io::config_from_json(json{{"replicats", 3}}), ConfigError);
  CHECK_THROWS_AS(io::config_from_json(json{{"dropout", {{"placebo", {{"rate", 0.1}}}}}}), ConfigError);
  CHECK_THROWS_AS(io::config_from_json(json{{"mmrm_covariance", "toeplitz"}}), ConfigError);
  CHECK_NOTHROW(io::config_from_json(json{{"dropout", "none"}}));
  const ScenarioConfig none = io::config_from_json(json{{"dropout", "none"}});
  CHECK(none.dropout.placebo.mcar_annual_rate == 0.0);
  CHECK(none.dropout.treatment_alternative.intolerability_prob == 0.0);
}

TEST_CASE("params accept the random-effects shape") {
  using io::json;
  json j = io::to_json(GenerativeParams::defaults());
  j["stable"].erase("random_effects_cov");
  j["stable"]["random_effects"] = {{"intercept_sd", 2.0}};
  const GenerativeParams p = io::params_from_json(j);
  CHECK(p.stable.random_effects_cov(0, 0) == doctest::Approx(4.0));
  j["stable"]["random_effects"] = {{"intercept_sd", 2.0}, {"spin", 1}};
  CHECK_THROWS_AS(io::params_from_json(j), ConfigError);
}

TEST_CASE("config file resolves relative params") {
  const fs::path params = scratch("params.json");
  GenerativeParams g = GenerativeParams::defaults();
  g.progressor_proportion = 0.3;
  write_text(params, io::to_json(g).dump());
  const fs::path cfg = scratch("cfg.json");
  write_text(cfg, R"({"params": "params.json", "replicates": 5})");
  const ScenarioConfig c = io::load_config(cfg);
  CHECK(c.params.progressor_proportion == 0.3);
  CHECK(c.replicates == 5);
  write_text(cfg, "{ not json");
  CHECK_THROWS_AS(io::load_config(cfg), ConfigError);
}

TEST_CASE("replicate csv round-trip") {
  std::vector<ReplicateRow> rows(2);
  rows[0] = {0.3, 1000, 4, "clda2", "observed", Estimand::AreaBetweenCurves, 0.1234567890123, 0.05,
             0.013, true, ""};
  rows[1] = {0.0, 1000, 5, "cox", "complete", Estimand::LogHazardRatio,
             std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
             std::numeric_limits<double>::quiet_NaN(), false, "no events, at all"};
  const fs::path p = scratch("rep.csv");
  io::write_replicates(rows, p, "# padsim config_hash=0 seed=1");
  CHECK(io::read_header(p) == "# padsim config_hash=0 seed=1");
  const auto back = io::read_replicates(p);
  REQUIRE(back.size() == 2);
  CHECK(back[0].estimate == rows[0].estimate);
  CHECK(back[0].estimand == Estimand::AreaBetweenCurves);
  CHECK(back[0].model == "clda2");
  CHECK(back[0].converged);
  CHECK(std::isnan(back[1].estimate));
  CHECK_FALSE(back[1].converged);
  CHECK_FALSE(back[1].message.empty());

  write_text(p, "effect,n\n0.1,2\n");
  CHECK_THROWS_AS(io::read_replicates(p), DataError);
}

TEST_CASE("longitudinal and survival csv round-trip") {
  LongitudinalDataset d;
  d.visit_grid = {0.0, 0.5, 1.0};
  d.horizon = 1.0;
  d.rows = {{1, Arm::Placebo, 0.0, 0.2, 0.2, 70.5, 1},
            {1, Arm::Placebo, 0.5, -0.1, 0.2, 70.5, 1},
            {2, Arm::Treatment, 0.0, 0.4, 0.4, 66.0, 0}};
  const fs::path p = scratch("long.csv");
  io::write_longitudinal(d, p);
  const LongitudinalDataset back = io::read_longitudinal(p, d.visit_grid, d.horizon);
  REQUIRE(back.rows.size() == 3);
  CHECK(back.rows[1].pacc == -0.1);
  CHECK(back.rows[2].arm == Arm::Treatment);
  CHECK(back.rows[0].age == 70.5);

  write_text(p, "subject,arm,time,pacc,baseline_pacc,age,apoe4\n1,0,0,0.1,,70,1\n1,1,0.5,0.3,NA,70,1\n");
  const LongitudinalDataset na = io::read_longitudinal(p, d.visit_grid, d.horizon);
  CHECK(std::isnan(na.rows[0].baseline_pacc));
  CHECK(na.rows[1].arm == Arm::Treatment);
  write_text(p, "subject,arm,time,pacc,baseline_pacc,age,apoe4\n1,drug,0,0.1,,70,1\n");
  CHECK_THROWS_AS(io::read_longitudinal(p, d.visit_grid, d.horizon), DataError);

  SurvivalDataset s;
  s.rows = {{1, Arm::Placebo, 2.5, true, 70.0, 0}, {2, Arm::Treatment, 8.0, false, 71.0, 1}};
  const fs::path q = scratch("surv.csv");
  io::write_survival(s, q, "# h");
  const SurvivalDataset sb = io::read_survival(q);
  REQUIRE(sb.rows.size() == 2);
  CHECK(sb.rows[0].event);
  CHECK_FALSE(sb.rows[1].event);
  CHECK(sb.rows[1].time == 8.0);
}

TEST_CASE("forest artifact round-trip") {
  diagnosis::TrainingSet t;
  t.features.resize(40, diagnosis::kFeatureCount);
  for (int i = 0; i < 40; ++i) {
    for (int k = 0; k < diagnosis::kFeatureCount; ++k) t.features(i, k) = std::sin(i * 1.7 + k);
    t.labels.push_back(t.features(i, 0) > 0 ? Diagnosis::MciPlus : Diagnosis::CN);
  }
  ForestArtifact a;
  a.forest = diagnosis::train_forest(t, {7, 3, 2}, Stream(5, {1}));
  a.threshold = 1.25;
  const fs::path p = scratch("forest.json");
  io::save_forest(a, p);
  const ForestArtifact b = io::load_forest(p);
  CHECK(b.threshold == 1.25);
  CHECK(b.forest.trees.size() == 7);
  for (int i = 0; i < 40; ++i) {
    std::vector<double> row(diagnosis::kFeatureCount);
    for (int k = 0; k < diagnosis::kFeatureCount; ++k) row[k] = t.features(i, k) * 0.9;
    CHECK(a.forest.predict(row) == b.forest.predict(row));
  }
  CHECK(io::to_json(b) == io::to_json(a));
}
