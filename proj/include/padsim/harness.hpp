#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "padsim/datagen.hpp"
#include "padsim/diagnosis.hpp"
#include "padsim/dropout.hpp"
#include "padsim/estimators.hpp"
#include "padsim/inference.hpp"
#include "padsim/stats.hpp"
#include "padsim/transforms.hpp"

namespace padsim {

struct CalibrationConfig {
  double target = 0.24;
  double tolerance = 0.01;
  int subjects = 20000;
  int max_steps = 60;
};

struct ForestTrainingConfig {
  int rows = 2000;
  diagnosis::ForestOptions forest;
};

// Which fits a replicate runs. Observed-data fits always run.
struct ReplicateOptions {
  bool complete = true;
  bool mehrotra = true;
  bool cox = true;
};

struct ScenarioConfig {
  TrialDesign design;
  GenerativeParams params = GenerativeParams::defaults();
  DropoutSpec dropout;
  std::string forest_path;  // empty: calibrate and train in process
  int replicates = 1000;
  std::vector<double> effects{0.0, 0.2, 0.3, 0.4};
  std::vector<int> sample_sizes{1000, 1500};
  double alpha = 0.05;
  std::uint64_t seed = 20180406;
  diagnosis::LabelerWeights labeler;
  ForestTrainingConfig forest_training;
  CalibrationConfig calibration;
  ReplicateOptions replicate;
  OptimizerOptions optimizer;
  MmrmCovariance mmrm_covariance = MmrmCovariance::Unstructured;
  bool write_curves = true;

  // Throws ConfigError.
  void validate() const;
};

// Trained forest plus the labeler it imitates.
struct ForestArtifact {
  diagnosis::Forest forest;
  double threshold = 0.0;
  diagnosis::LabelerWeights weights;
};

// Bisection on the labeler threshold so that the fraction of placebo subjects
// labeled MCI+ at some post-baseline visit within 8 years hits the target.
// Throws CalibrationError when the tolerance is not reached.
struct CalibrationResult {
  double threshold = 0.0;
  double fraction = 0.0;
  int steps = 0;
};
CalibrationResult calibrate_labeler(const GenerativeParams& params, const TrialDesign& design,
                                    const CalibrationConfig& config,
                                    const diagnosis::LabelerWeights& weights, std::uint64_t seed);

// Fraction of fresh placebo subjects the labeler marks MCI+ after baseline.
double labeler_progression_fraction(const GenerativeParams& params, const TrialDesign& design,
                                    double threshold, const diagnosis::LabelerWeights& weights,
                                    int subjects, std::uint64_t seed);

// Placebo visits labeled by the synthetic labeler, one random grid visit per
// simulated subject.
diagnosis::TrainingSet forest_corpus(const GenerativeParams& params, const TrialDesign& design,
                                     double threshold, const diagnosis::LabelerWeights& weights,
                                     int rows, std::uint64_t seed);

// Calibrate, build the corpus and train.
ForestArtifact prepare_forest(const ScenarioConfig& config, int threads = 1);

// Simulated trial: subjects after dropout, counterfactual adjustment,
// diagnosis and censoring.
struct SimulatedTrial {
  TrialDesign design;
  std::vector<SubjectRecord> subjects;
  transforms::BaselineStats baseline_stats;
};

SimulatedTrial simulate_trial(const ScenarioConfig& config, const diagnosis::Forest& forest,
                              double effect, int n, int replicate);

enum class DatasetKind { Observed, Complete };

LongitudinalDataset longitudinal_dataset(const SimulatedTrial& trial, DatasetKind kind);
// Rows with a zero time (no post-baseline visit) are left out.
SurvivalDataset survival_dataset(const SimulatedTrial& trial, DatasetKind kind);

struct ReplicateRow {
  double effect = 0.0;
  int n = 0;
  int replicate = 0;
  std::string model;    // mmrm, clda1, clda2, cox, <base>_mehrotra
  std::string dataset;  // observed, complete
  Estimand estimand = Estimand::FinalVisit;
  double estimate = 0.0;
  double se = 0.0;
  double p = 1.0;
  bool converged = false;
  std::string message;  // failure reason, empty on success
};

std::vector<ReplicateRow> run_replicate(const ScenarioConfig& config,
                                        const diagnosis::Forest& forest, double effect, int n,
                                        int replicate);

struct PowerCell {
  int successes = 0;
  int failures = 0;
  std::optional<double> rejection_rate;  // empty when no fit succeeded
};

struct BiasCell {
  int pairs = 0;
  std::optional<stats::Quartiles> bias;
  std::optional<stats::Quartiles> bias_percent;  // percent units
};

struct CellKey {
  double effect = 0.0;
  int n = 0;
  std::string model;
  std::string dataset;
  auto operator<=>(const CellKey&) const = default;
};

struct ScenarioSummary {
  double alpha = 0.05;
  std::map<CellKey, PowerCell> power;
  // dataset field is "observed"; bias is observed minus the complete-data
  // estimate of the same (base) model.
  std::map<CellKey, BiasCell> bias;
};

ScenarioSummary summarize(const std::vector<ReplicateRow>& rows, double alpha);

// Runs every (effect, n, replicate) cell on `threads` workers and writes
// replicates.csv, power.csv, bias.csv, bias_percent.csv, failures.csv and,
// when enabled, km_curves.csv and mean_trajectories.csv to out_dir.
std::vector<ReplicateRow> run_scenario(const ScenarioConfig& config,
                                       const ForestArtifact& artifact,
                                       const std::filesystem::path& out_dir, int threads);

// Writes the summary CSVs for rows already on disk or in memory.
void write_summary(const ScenarioSummary& summary, const std::filesystem::path& out_dir,
                   const std::string& header);

}  // namespace padsim
