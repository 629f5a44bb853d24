#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

#include "padsim/error.hpp"
#include "padsim/harness.hpp"
#include "padsim/io.hpp"
#include "padsim/parallel.hpp"

namespace fs = std::filesystem;
using namespace padsim;

namespace {

ForestArtifact obtain_forest(const ScenarioConfig& config, const std::string& override_path, int threads) {
  const std::string path = override_path.empty() ? config.forest_path : override_path;
  if (!path.empty()) return io::load_forest(path);
  std::cerr << "no forest artifact given; calibrating and training in process\n";
  return prepare_forest(config, threads);
}

io::json fit_json(const FitResult& fit) {
  io::json coef = io::json::array();
  for (std::size_t i = 0; i < fit.names.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    coef.push_back({{"name", fit.names[i]},
                    {"estimate", fit.coefficients(k)},
                    {"se", std::sqrt(fit.covariance(k, k))}});
  }
  io::json vc = io::json::object();
  for (const auto& [name, value] : fit.variance_components) vc[name] = value;
  return {{"model", model_name(fit.model)},
          {"converged", fit.converged},
          {"iterations", fit.iterations},
          {"gradient_norm", fit.gradient_norm},
          {"log_likelihood", fit.log_likelihood},
          {"subjects", fit.subjects},
          {"observations", fit.observations},
          {"events", fit.events},
          {"coefficients", coef},
          {"variance_components", vc},
          {"message", fit.message}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo trial simulator for pre-symptomatic Alzheimer's endpoints"};
  app.require_subcommand(1);
  int threads = default_thread_count();
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string config_path, out_path, forest_path;

  auto* fit_forest = app.add_subcommand("fit-forest", "Calibrate the labeler and train the forest");
  fit_forest->add_option("--config", config_path)->required();
  fit_forest->add_option("--out", out_path)->required();

  auto* calibrate = app.add_subcommand("calibrate", "Calibrate the labeler threshold");
  calibrate->add_option("--config", config_path)->required();
  std::uint64_t check_seed = 0;
  calibrate->add_option("--check-seed", check_seed, "Re-measure the fraction on a fresh seed");

  auto* run = app.add_subcommand("run-scenario", "Run all replicates and write result CSVs");
  run->add_option("--config", config_path)->required();
  run->add_option("--out", out_path)->required();
  run->add_option("--forest", forest_path, "Forest artifact (overrides the config)");
  int replicates = 0;
  run->add_option("--replicates", replicates, "Override the replicate count");

  auto* summarize_cmd = app.add_subcommand("summarize", "Rebuild summary CSVs from replicates.csv");
  std::string dir;
  std::string format = "csv";
  summarize_cmd->add_option("dir", dir)->required();
  summarize_cmd->add_option("--format", format)->check(CLI::IsMember({"csv"}));
  double alpha = 0.05;
  summarize_cmd->add_option("--alpha", alpha);

  auto* analyze = app.add_subcommand("analyze", "Fit one model to a dataset file");
  std::string data_path, model = "mmrm";
  double horizon = 4.5;
  OptimizerOptions opt;
  CoxOptions cox;
  analyze->add_option("--data", data_path)->required();
  analyze->add_option("--model", model)->check(CLI::IsMember({"mmrm", "clda1", "clda2", "cox"}));
  analyze->add_option("--horizon", horizon);
  std::string mmrm_cov = "unstructured";
  analyze->add_option("--mmrm-covariance", mmrm_cov)->check(CLI::IsMember({"ar1", "ar1_hetero", "unstructured"}));
  analyze->add_option("--gradient-tolerance", opt.gradient_tolerance);
  analyze->add_option("--simplex-tolerance", opt.simplex_tolerance);
  analyze->add_option("--max-simplex-iterations", opt.max_simplex_iterations);
  analyze->add_option("--max-newton-iterations", opt.max_newton_iterations);
  analyze->add_option("--cox-tolerance", cox.gradient_tolerance);
  analyze->add_option("--cox-max-iterations", cox.max_iterations);

  auto* simulate = app.add_subcommand("simulate", "Simulate one trial and write its datasets");
  double effect = 0.0;
  int n = 1000, replicate = 0;
  simulate->add_option("--config", config_path)->required();
  simulate->add_option("--out", out_path)->required();
  simulate->add_option("--forest", forest_path);
  simulate->add_option("--effect", effect);
  simulate->add_option("--n", n);
  simulate->add_option("--replicate", replicate);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit_forest) {
      const ScenarioConfig config = io::load_config(config_path);
      const ForestArtifact art = prepare_forest(config, threads);
      io::save_forest(art, out_path);
      std::printf("threshold %.10g  oob_error %.4f  trees %zu\n", art.threshold, art.forest.oob_error(),
                  art.forest.trees.size());
    } else if (*calibrate) {
      const ScenarioConfig config = io::load_config(config_path);
      const CalibrationResult cal = calibrate_labeler(config.params, config.design, config.calibration,
                                                      config.labeler, config.seed);
      std::printf("threshold %.10g  fraction %.4f  steps %d\n", cal.threshold, cal.fraction, cal.steps);
      if (check_seed != 0) {
        const double f = labeler_progression_fraction(config.params, config.design, cal.threshold,
                                                      config.labeler, config.calibration.subjects,
                                                      check_seed);
        std::printf("fresh-seed fraction %.4f\n", f);
      }
    } else if (*run) {
      ScenarioConfig config = io::load_config(config_path);
      if (replicates > 0) config.replicates = replicates;
      const ForestArtifact art = obtain_forest(config, forest_path, threads);
      const auto rows = run_scenario(config, art, out_path, threads);
      std::printf("wrote %zu result rows to %s\n", rows.size(), out_path.c_str());
    } else if (*summarize_cmd) {
      const fs::path d(dir);
      const auto rows = io::read_replicates(d / "replicates.csv");
      write_summary(summarize(rows, alpha), d, io::read_header(d / "replicates.csv"));
      std::ifstream power(d / "power.csv");
      std::cout << power.rdbuf();
    } else if (*analyze) {
      const ModelKind kind = model_from_name(model);
      FitResult fit;
      if (kind == ModelKind::Cox) {
        fit = fit_coxph(io::read_survival(data_path), cox);
      } else {
        const auto data = io::read_longitudinal(data_path, TrialDesign::default_visit_grid(), horizon);
        fit = kind == ModelKind::Mmrm ? fit_mmrm(data, opt, covariance_from_name(mmrm_cov))
                                      : fit_clda(data, kind == ModelKind::Clda1 ? 1 : 2, opt);
      }
      io::json out = fit_json(fit);
      if (fit.converged) {
        const ContrastResult c = primary_contrast(fit, horizon);
        out["contrast"] = {{"estimand", estimand_name(c.estimand)},
                           {"estimate", c.estimate},
                           {"se", c.se},
                           {"z", c.z},
                           {"p", c.p}};
      }
      std::cout << out.dump(2) << '\n';
    } else if (*simulate) {
      const ScenarioConfig config = io::load_config(config_path);
      const ForestArtifact art = obtain_forest(config, forest_path, threads);
      const SimulatedTrial trial = simulate_trial(config, art.forest, effect, n, replicate);
      const fs::path out(out_path);
      fs::create_directories(out);
      const std::string header = io::file_header(config);
      io::write_longitudinal(longitudinal_dataset(trial, DatasetKind::Observed), out / "longitudinal_observed.csv", header);
      io::write_longitudinal(longitudinal_dataset(trial, DatasetKind::Complete), out / "longitudinal_complete.csv", header);
      io::write_survival(survival_dataset(trial, DatasetKind::Observed), out / "survival_observed.csv", header);
      io::write_survival(survival_dataset(trial, DatasetKind::Complete), out / "survival_complete.csv", header);
      std::printf("wrote datasets for %d subjects to %s\n", n, out_path.c_str());
    }
  } catch (const padsim::Error& e) {
    std::cerr << "padsim: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
