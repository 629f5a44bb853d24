#include "padsim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include "padsim/error.hpp"
#include "padsim/io.hpp"
#include "padsim/parallel.hpp"

namespace padsim {

namespace {

// Stream tags. Subjects are keyed by replicate and index only, so the same
// subject reappears across effect sizes and sample sizes.
enum : std::uint64_t {
  kReplicateTag = 1,
  kArmsTag = 2,
  kSubjectTag = 3,
  kCalibrationTag = 4,
  kCorpusTag = 5,
  kForestTag = 6,
};
enum : std::uint64_t { kCovariates = 0, kResiduals = 1, kDropout = 2, kVisit = 3 };

constexpr double kTimeTol = 1e-9;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::vector<std::string> kModelOrder{"mmrm",          "clda1",          "clda2",
                                           "cox",           "mmrm_mehrotra",  "clda1_mehrotra",
                                           "clda2_mehrotra"};

// Placebo subject with a complete trajectory, for calibration and the corpus.
SubjectRecord placebo_subject(const GenerativeParams& params, const TrialDesign& design,
                              const Stream& root) {
  Stream cov = root.child({kCovariates});
  Stream res = root.child({kResiduals});
  SubjectRecord s = draw_subject(params, design, Arm::Placebo, cov);
  s.complete_trajectory = simulate_trajectory(s, params, design, res);
  return s;
}

std::vector<double> max_post_baseline_scores(const GenerativeParams& params,
                                             const TrialDesign& design,
                                             const diagnosis::LabelerWeights& weights,
                                             int subjects, std::uint64_t seed) {
  TrialDesign d = design;
  d.effect_size = 0.0;
  std::vector<double> scores(static_cast<std::size_t>(subjects));
  for (int i = 0; i < subjects; ++i) {
    const SubjectRecord s =
        placebo_subject(params, d, Stream(seed, {kCalibrationTag, static_cast<std::uint64_t>(i)}));
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 1; j < d.visit_count(); ++j) {
      if (d.visit_grid[j] > d.max_follow_up + kTimeTol) break;
      OutcomeVector z{};
      for (int k = 0; k < kOutcomeCount; ++k) z[k] = s.complete_trajectory(j, k);
      best = std::max(best, diagnosis::labeler_score(z, weights));
    }
    scores[i] = best;
  }
  return scores;
}

double fraction_at_least(const std::vector<double>& scores, double threshold) {
  std::size_t hit = 0;
  for (double s : scores) hit += s >= threshold ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(scores.size());
}

}  // namespace

void ScenarioConfig::validate() const {
  design.validate();
  params.validate();
  dropout.validate();
  if (replicates < 1) throw ConfigError("replicates must be at least 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (effects.empty() || sample_sizes.empty()) throw ConfigError("effect and sample-size grids must be nonempty");
  for (double e : effects)
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("effect sizes must lie in [0, 1]");
  for (int n : sample_sizes)
    if (n < 4) throw ConfigError("sample sizes must be at least 4");
  if (calibration.subjects < 100) throw ConfigError("calibration needs at least 100 subjects");
  if (!(calibration.tolerance > 0.0)) throw ConfigError("calibration tolerance must be positive");
  if (forest_training.rows < 10) throw ConfigError("forest corpus needs at least 10 rows");
  if (forest_training.forest.n_trees < 1 || forest_training.forest.mtry < 1)
    throw ConfigError("forest needs at least one tree and mtry >= 1");
}

CalibrationResult calibrate_labeler(const GenerativeParams& params, const TrialDesign& design,
                                    const CalibrationConfig& config,
                                    const diagnosis::LabelerWeights& weights, std::uint64_t seed) {
  const std::vector<double> scores =
      max_post_baseline_scores(params, design, weights, config.subjects, seed);
  const auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
  double lo = *mn - 1.0;  // fraction 1
  double hi = *mx + 1.0;  // fraction 0
  CalibrationResult out;
  out.threshold = 0.5 * (lo + hi);
  out.fraction = fraction_at_least(scores, out.threshold);
  for (out.steps = 1; out.steps <= config.max_steps; ++out.steps) {
    out.threshold = 0.5 * (lo + hi);
    out.fraction = fraction_at_least(scores, out.threshold);
    if (std::abs(out.fraction - config.target) <= 0.1 * config.tolerance) break;
    if (out.fraction > config.target)
      lo = out.threshold;
    else
      hi = out.threshold;
  }
  if (std::abs(out.fraction - config.target) > config.tolerance)
    throw CalibrationError("labeler calibration did not reach the target progression fraction");
  return out;
}

double labeler_progression_fraction(const GenerativeParams& params, const TrialDesign& design,
                                    double threshold, const diagnosis::LabelerWeights& weights,
                                    int subjects, std::uint64_t seed) {
  return fraction_at_least(max_post_baseline_scores(params, design, weights, subjects, seed),
                           threshold);
}

diagnosis::TrainingSet forest_corpus(const GenerativeParams& params, const TrialDesign& design,
                                     double threshold, const diagnosis::LabelerWeights& weights,
                                     int rows, std::uint64_t seed) {
  TrialDesign d = design;
  d.effect_size = 0.0;
  diagnosis::TrainingSet set;
  set.features.resize(rows, diagnosis::kFeatureCount);
  set.labels.resize(static_cast<std::size_t>(rows));
  for (int i = 0; i < rows; ++i) {
    const Stream root(seed, {kCorpusTag, static_cast<std::uint64_t>(i)});
    const SubjectRecord s = placebo_subject(params, d, root);
    Stream pick = root.child({kVisit});
    const auto j = static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(d.visit_count())));
    const auto f = diagnosis::visit_features(s.complete_trajectory.row(j), s.age, s.apoe4);
    for (int k = 0; k < diagnosis::kFeatureCount; ++k) set.features(i, k) = f[k];
    set.labels[i] = diagnosis::synthetic_labeler(s.complete_trajectory.row(j), threshold, weights);
  }
  return set;
}

ForestArtifact prepare_forest(const ScenarioConfig& config, int threads) {
  ForestArtifact art;
  art.weights = config.labeler;
  art.threshold =
      calibrate_labeler(config.params, config.design, config.calibration, config.labeler, config.seed)
          .threshold;
  const diagnosis::TrainingSet corpus =
      forest_corpus(config.params, config.design, art.threshold, config.labeler,
                    config.forest_training.rows, config.seed);
  art.forest = diagnosis::train_forest(corpus, config.forest_training.forest,
                                       Stream(config.seed, {kForestTag}), threads);
  return art;
}

SimulatedTrial simulate_trial(const ScenarioConfig& config, const diagnosis::Forest& forest,
                              double effect, int n, int replicate) {
  SimulatedTrial trial;
  trial.design = config.design;
  trial.design.effect_size = effect;
  trial.design.n_total = n;
  const TrialDesign& design = trial.design;
  const Stream root(config.seed, {kReplicateTag, static_cast<std::uint64_t>(replicate)});
  Stream arm_stream = root.child({kArmsTag});
  const std::vector<Arm> arms = assign_arms(n, design, arm_stream);

  trial.subjects.resize(static_cast<std::size_t>(n));
  Eigen::MatrixXd baseline(n, transforms::kPaccComponents);
  for (int i = 0; i < n; ++i) {
    const Stream sub = root.child({kSubjectTag, static_cast<std::uint64_t>(i)});
    Stream cov = sub.child({kCovariates});
    Stream res = sub.child({kResiduals});
    Stream drop = sub.child({kDropout});
    SubjectRecord& s = trial.subjects[i];
    s = draw_subject(config.params, design, arms[i], cov);
    s.id = i;
    s.complete_trajectory = simulate_trajectory(s, config.params, design, res);
    s.dropout = assign_dropout(s, config.dropout, effect, drop);
    s.complete_trajectory =
        apply_counterfactual(s, s.dropout.cause, config.params, design, config.dropout);
    std::vector<diagnosis::Features> visits;
    for (int j = 0; j < design.visit_count(); ++j) {
      if (design.visit_grid[j] > s.follow_up_limit + kTimeTol) break;
      visits.push_back(diagnosis::visit_features(s.complete_trajectory.row(j), s.age, s.apoe4));
    }
    s.diagnosis_sequence = forest.predict_batch(visits);
    censor(s, design);
    for (int c = 0; c < transforms::kPaccComponents; ++c)
      baseline(i, c) = s.complete_trajectory(0, index(transforms::kPaccOutcomes[c]));
  }
  trial.baseline_stats =
      transforms::BaselineStats::estimate(baseline, transforms::BaselineStats::z_scale());
  return trial;
}

LongitudinalDataset longitudinal_dataset(const SimulatedTrial& trial, DatasetKind kind) {
  LongitudinalDataset data;
  data.visit_grid = trial.design.visit_grid;
  data.horizon = trial.design.analysis_horizon;
  for (const SubjectRecord& s : trial.subjects) {
    const Eigen::MatrixXd& traj =
        kind == DatasetKind::Complete ? s.complete_trajectory : s.observed_trajectory;
    double base = kNaN;
    for (int j = 0; j < trial.design.visit_count(); ++j) {
      const double t = trial.design.visit_grid[j];
      if (t > data.horizon + kTimeTol) break;
      std::array<double, transforms::kPaccComponents> scores{};
      for (int c = 0; c < transforms::kPaccComponents; ++c)
        scores[c] = traj(j, index(transforms::kPaccOutcomes[c]));
      const auto pacc = transforms::compute_pacc(scores, trial.baseline_stats);
      if (!pacc) continue;
      if (j == 0) base = *pacc;
      data.rows.push_back({s.id, s.arm, t, *pacc, base, s.age, s.apoe4});
    }
  }
  return data;
}

SurvivalDataset survival_dataset(const SimulatedTrial& trial, DatasetKind kind) {
  SurvivalDataset data;
  for (const SubjectRecord& s : trial.subjects) {
    const bool complete = kind == DatasetKind::Complete;
    const std::vector<Diagnosis>& seq = complete ? s.diagnosis_sequence : s.observed_diagnosis;
    if (seq.empty()) continue;
    const diagnosis::ProgressionTime pt = diagnosis::progression_time(
        seq, trial.design.visit_grid,
        complete ? s.follow_up_limit : std::min(s.follow_up_limit, s.dropout.time));
    if (!(pt.time > 0.0)) continue;
    data.rows.push_back({s.id, s.arm, pt.time, pt.event, s.age, s.apoe4});
  }
  return data;
}

namespace {

struct Curves {
  std::vector<std::string> km_lines;
  std::vector<std::string> trajectory_lines;
};

template <typename Fn>
void record(std::vector<ReplicateRow>& rows, const ReplicateRow& proto, const std::string& model,
            const std::string& dataset, Estimand estimand, Fn&& fit) {
  ReplicateRow row = proto;
  row.model = model;
  row.dataset = dataset;
  row.estimand = estimand;
  try {
    const ContrastResult c = fit();
    row.estimate = c.estimate;
    row.se = c.se;
    row.p = c.p;
    row.converged = true;
  } catch (const Error& e) {
    row.estimate = row.se = row.p = kNaN;
    row.converged = false;
    row.message = e.what();
  }
  rows.push_back(std::move(row));
}

Estimand estimand_of(ModelKind kind) {
  switch (kind) {
    case ModelKind::Mmrm:
    case ModelKind::Clda1:
      return Estimand::FinalVisit;
    case ModelKind::Clda2:
      return Estimand::AreaBetweenCurves;
    case ModelKind::Cox:
      break;
  }
  return Estimand::LogHazardRatio;
}

std::vector<ReplicateRow> replicate_rows(const ScenarioConfig& config, const diagnosis::Forest& forest,
                                         double effect, int n, int replicate, Curves* curves) {
  const SimulatedTrial trial = simulate_trial(config, forest, effect, n, replicate);
  ReplicateRow proto;
  proto.effect = effect;
  proto.n = n;
  proto.replicate = replicate;
  std::vector<ReplicateRow> rows;
  const double horizon = trial.design.analysis_horizon;

  std::vector<DatasetKind> kinds{DatasetKind::Observed};
  if (config.replicate.complete) kinds.push_back(DatasetKind::Complete);
  LongitudinalDataset observed;
  for (DatasetKind kind : kinds) {
    const std::string label = kind == DatasetKind::Observed ? "observed" : "complete";
    const LongitudinalDataset data = longitudinal_dataset(trial, kind);
    for (ModelKind m : {ModelKind::Mmrm, ModelKind::Clda1, ModelKind::Clda2}) {
      record(rows, proto, std::string(model_name(m)), label, estimand_of(m), [&] {
        const FitResult fit = m == ModelKind::Mmrm ? fit_mmrm(data, config.optimizer, config.mmrm_covariance)
                                                   : fit_clda(data, m == ModelKind::Clda1 ? 1 : 2,
                                                              config.optimizer);
        return primary_contrast(fit, horizon);
      });
    }
    if (config.replicate.cox) {
      const SurvivalDataset surv = survival_dataset(trial, kind);
      record(rows, proto, "cox", label, Estimand::LogHazardRatio,
             [&] { return hazard_contrast(fit_coxph(surv)); });
      if (curves && kind == DatasetKind::Observed) {
        for (Arm arm : {Arm::Placebo, Arm::Treatment}) {
          const KaplanMeier km = kaplan_meier(surv, arm);
          for (const KaplanMeierStep& st : km.steps) {
            char buf[256];
            std::snprintf(buf, sizeof buf, "%s,%d,%s,%s,%d,%d,%d,%s,%s,%s",
                          io::format_double(effect).c_str(), n,
                          arm == Arm::Placebo ? "placebo" : "treatment",
                          io::format_double(st.time).c_str(), st.at_risk, st.events, st.censored,
                          io::format_double(st.survival).c_str(), io::format_double(st.lower).c_str(),
                          io::format_double(st.upper).c_str());
            curves->km_lines.emplace_back(buf);
          }
        }
      }
    }
    if (curves) {
      std::map<std::pair<int, double>, std::pair<double, int>> sums;
      for (const LongitudinalRow& r : data.rows) {
        auto& cell = sums[{static_cast<int>(r.arm), r.time}];
        cell.first += r.pacc;
        cell.second += 1;
      }
      for (const auto& [key, cell] : sums) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s,%d,%s,%s,%s,%s,%d", io::format_double(effect).c_str(), n,
                      label.c_str(), key.first == 0 ? "placebo" : "treatment",
                      io::format_double(key.second).c_str(),
                      io::format_double(cell.first / cell.second).c_str(), cell.second);
        curves->trajectory_lines.emplace_back(buf);
      }
    }
    if (kind == DatasetKind::Observed) observed = data;
  }

  if (config.replicate.mehrotra) {
    for (ModelKind m : {ModelKind::Mmrm, ModelKind::Clda1, ModelKind::Clda2}) {
      record(rows, proto, std::string(model_name(m)) + "_mehrotra", "observed", estimand_of(m),
             [&] { return mehrotra_adjust(observed, m, config.optimizer, config.mmrm_covariance).contrast; });
    }
  }
  return rows;
}

std::string cell_text(const std::optional<double>& v) {
  return v ? io::format_double(*v) : std::string("NA");
}

std::string base_model(const std::string& model) {
  const auto pos = model.find("_mehrotra");
  return pos == std::string::npos ? model : model.substr(0, pos);
}

void write_lines(const std::filesystem::path& path, const std::string& header,
                 const std::string& columns, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << header << '\n' << columns << '\n';
  for (const std::string& l : lines) out << l << '\n';
}

}  // namespace

std::vector<ReplicateRow> run_replicate(const ScenarioConfig& config, const diagnosis::Forest& forest,
                                        double effect, int n, int replicate) {
  return replicate_rows(config, forest, effect, n, replicate, nullptr);
}

ScenarioSummary summarize(const std::vector<ReplicateRow>& rows, double alpha) {
  ScenarioSummary summary;
  summary.alpha = alpha;
  std::map<CellKey, int> rejections;
  struct RepKey {
    double effect;
    int n;
    int replicate;
    std::string model;
    auto operator<=>(const RepKey&) const = default;
  };
  std::map<RepKey, double> complete;
  for (const ReplicateRow& r : rows) {
    const CellKey key{r.effect, r.n, r.model, r.dataset};
    PowerCell& cell = summary.power[key];
    if (r.converged) {
      ++cell.successes;
      if (r.p < alpha) ++rejections[key];
      if (r.dataset == "complete") complete[{r.effect, r.n, r.replicate, r.model}] = r.estimate;
    } else {
      ++cell.failures;
    }
  }
  for (auto& [key, cell] : summary.power)
    if (cell.successes > 0)
      cell.rejection_rate = static_cast<double>(rejections[key]) / cell.successes;

  std::map<CellKey, std::pair<std::vector<double>, std::vector<double>>> diffs;
  for (const ReplicateRow& r : rows) {
    if (r.dataset != "observed" || !r.converged) continue;
    const auto it = complete.find({r.effect, r.n, r.replicate, base_model(r.model)});
    if (it == complete.end()) continue;
    auto& d = diffs[{r.effect, r.n, r.model, r.dataset}];
    const double diff = r.estimate - it->second;
    d.first.push_back(diff);
    if (r.effect != 0.0 && it->second != 0.0) d.second.push_back(100.0 * diff / it->second);
  }
  for (auto& [key, d] : diffs) {
    BiasCell& cell = summary.bias[key];
    cell.pairs = static_cast<int>(d.first.size());
    if (!d.first.empty()) cell.bias = stats::quartiles(d.first);
    if (!d.second.empty()) cell.bias_percent = stats::quartiles(d.second);
  }
  return summary;
}

void write_summary(const ScenarioSummary& summary, const std::filesystem::path& out_dir,
                   const std::string& header) {
  std::set<double> effects;
  std::set<int> sizes;
  std::set<std::string> present;
  for (const auto& [key, cell] : summary.power) {
    effects.insert(key.effect);
    sizes.insert(key.n);
    present.insert(key.model);
  }
  std::vector<std::string> models;
  for (const std::string& m : kModelOrder)
    if (present.contains(m)) models.push_back(m);
  for (const std::string& m : present)
    if (std::find(models.begin(), models.end(), m) == models.end()) models.push_back(m);

  {
    std::string cols = "effect,n,dataset";
    for (const std::string& m : models) cols += "," + m;
    std::vector<std::string> lines;
    for (double e : effects)
      for (int n : sizes)
        for (const char* ds : {"observed", "complete"}) {
          std::string line = io::format_double(e) + "," + std::to_string(n) + "," + ds;
          bool any = false;
          for (const std::string& m : models) {
            const auto it = summary.power.find({e, n, m, ds});
            if (it != summary.power.end()) any = true;
            line += "," + (it == summary.power.end() ? std::string("NA") : cell_text(it->second.rejection_rate));
          }
          if (any) lines.push_back(line);
        }
    write_lines(out_dir / "power.csv", header, cols, lines);
  }
  {
    std::vector<std::string> lines;
    for (const auto& [key, cell] : summary.power)
      lines.push_back(io::format_double(key.effect) + "," + std::to_string(key.n) + "," + key.model +
                      "," + key.dataset + "," + std::to_string(cell.successes) + "," +
                      std::to_string(cell.failures));
    write_lines(out_dir / "failures.csv", header, "effect,n,model,dataset,successes,failures", lines);
  }
  for (const bool percent : {false, true}) {
    std::vector<double> cols_effects;
    for (double e : effects)
      if (!percent || e != 0.0) cols_effects.push_back(e);
    std::string cols = "n,method";
    for (double e : cols_effects) {
      const std::string p = "effect_" + io::format_double(e);
      cols += "," + p + "_median," + p + "_q1," + p + "_q3";
    }
    std::vector<std::string> lines;
    for (int n : sizes)
      for (const std::string& m : models) {
        std::string line = std::to_string(n) + "," + m;
        bool any = false;
        for (double e : cols_effects) {
          const auto it = summary.bias.find({e, n, m, "observed"});
          std::optional<stats::Quartiles> q;
          if (it != summary.bias.end()) q = percent ? it->second.bias_percent : it->second.bias;
          if (q) any = true;
          line += q ? "," + io::format_double(q->median) + "," + io::format_double(q->q1) + "," +
                          io::format_double(q->q3)
                    : std::string(",NA,NA,NA");
        }
        if (any) lines.push_back(line);
      }
    write_lines(out_dir / (percent ? "bias_percent.csv" : "bias.csv"), header, cols, lines);
  }
}

std::vector<ReplicateRow> run_scenario(const ScenarioConfig& config, const ForestArtifact& artifact,
                                       const std::filesystem::path& out_dir, int threads) {
  config.validate();
  std::filesystem::create_directories(out_dir);
  struct Job {
    double effect;
    int n;
    int replicate;
  };
  std::vector<Job> jobs;
  for (double e : config.effects)
    for (int n : config.sample_sizes)
      for (int r = 0; r < config.replicates; ++r) jobs.push_back({e, n, r});

  std::vector<std::vector<ReplicateRow>> results(jobs.size());
  std::vector<Curves> curves(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), threads, [&](int i) {
    const Job& j = jobs[i];
    const bool want = config.write_curves && j.replicate == 0;
    results[i] = replicate_rows(config, artifact.forest, j.effect, j.n, j.replicate,
                                want ? &curves[i] : nullptr);
  });

  std::vector<ReplicateRow> rows;
  for (auto& r : results) rows.insert(rows.end(), r.begin(), r.end());
  const std::string header = io::file_header(config);
  io::write_replicates(rows, out_dir / "replicates.csv", header);
  write_summary(summarize(rows, config.alpha), out_dir, header);
  if (config.write_curves) {
    std::vector<std::string> km, traj;
    for (const Curves& c : curves) {
      km.insert(km.end(), c.km_lines.begin(), c.km_lines.end());
      traj.insert(traj.end(), c.trajectory_lines.begin(), c.trajectory_lines.end());
    }
    write_lines(out_dir / "km_curves.csv", header,
                "effect,n,arm,time,at_risk,events,censored,survival,lower,upper", km);
    write_lines(out_dir / "mean_trajectories.csv", header, "effect,n,dataset,arm,time,mean_pacc,count",
                traj);
  }
  return rows;
}

}  // namespace padsim
