// Acceptance report: one PASS/FAIL line per criterion. Scenario runs are
// cached under --work keyed by the config hash, so per-criterion invocations
// share them.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "CLI11.hpp"

#include "padsim/error.hpp"
#include "padsim/estimators.hpp"
#include "padsim/harness.hpp"
#include "padsim/inference.hpp"
#include "padsim/io.hpp"
#include "padsim/parallel.hpp"

namespace fs = std::filesystem;
using namespace padsim;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

struct Context {
  fs::path work;
  int threads = 1;
  bool full = false;
  int replicates = 300;
};

ScenarioConfig base_config() {
  ScenarioConfig c;
  c.seed = 20180406;
  c.sample_sizes = {1000};
  c.write_curves = false;
  return c;
}

// Forest for the default config, trained once per work directory.
const ForestArtifact& forest(const Context& ctx) {
  static std::optional<ForestArtifact> art;
  if (art) return *art;
  const ScenarioConfig c = base_config();
  const fs::path path = ctx.work / ("forest_" + io::config_hash(c) + ".json");
  if (fs::exists(path)) {
    art = io::load_forest(path);
  } else {
    art = prepare_forest(c, ctx.threads);
    fs::create_directories(ctx.work);
    io::save_forest(*art, path);
  }
  return *art;
}

struct Run {
  ScenarioSummary summary;
  double seconds = 0.0;
};

// Runs the scenario unless a run with the same config hash is on disk.
Run scenario(const Context& ctx, const std::string& name, const std::vector<double>& effects) {
  ScenarioConfig c = base_config();
  c.effects = effects;
  c.replicates = ctx.replicates;
  const fs::path dir = ctx.work / (name + "_" + io::config_hash(c));
  const fs::path timing = dir / "seconds.txt";
  Run run;
  if (fs::exists(timing) && io::read_header(dir / "replicates.csv") == io::file_header(c)) {
    std::ifstream(timing) >> run.seconds;
    run.summary = summarize(io::read_replicates(dir / "replicates.csv"), c.alpha);
    return run;
  }
  const ForestArtifact& art = forest(ctx);
  const auto t0 = Clock::now();
  const auto rows = run_scenario(c, art, dir, ctx.threads);
  run.seconds = seconds_since(t0);
  std::ofstream(timing) << run.seconds << '\n';
  run.summary = summarize(rows, c.alpha);
  return run;
}

double power(const ScenarioSummary& s, double effect, const std::string& model,
             const std::string& dataset = "observed") {
  const auto it = s.power.find({effect, 1000, model, dataset});
  if (it == s.power.end() || !it->second.rejection_rate) return std::nan("");
  return *it->second.rejection_rate;
}

double median_bias(const ScenarioSummary& s, double effect, const std::string& model, bool percent) {
  const auto it = s.bias.find({effect, 1000, model, "observed"});
  if (it == s.bias.end()) return std::nan("");
  const auto& q = percent ? it->second.bias_percent : it->second.bias;
  return q ? q->median : std::nan("");
}

// ------------------------------------------------------------ criterion 1

double cox_hand_oracle() {
  auto loglik = [](double b) {
    const double u = std::exp(b);
    return b - std::log(2 * u + 2) - std::log(u + 2);
  };
  double lo = -5, hi = 5;
  const double g = (std::sqrt(5.0) - 1) / 2;
  while (hi - lo > 1e-12) {
    const double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
    if (loglik(a) > loglik(b))
      hi = b;
    else
      lo = a;
  }
  return 0.5 * (lo + hi);
}

Verdict criterion_oracles() {
  const auto t0 = Clock::now();
  std::ostringstream out;
  bool ok = true;

  {  // GLS against explicit normal equations
    Stream rng(1, {1});
    Eigen::MatrixXd x(30, 4), a(30, 30);
    Eigen::VectorXd y(30);
    for (int i = 0; i < 30; ++i) {
      x(i, 0) = 1;
      for (int j = 1; j < 4; ++j) x(i, j) = rng.normal();
      y(i) = rng.normal();
      for (int j = 0; j < 30; ++j) a(i, j) = rng.normal();
    }
    const Eigen::MatrixXd v = a * a.transpose() + 30 * Eigen::MatrixXd::Identity(30, 30);
    Eigen::VectorXd beta;
    Eigen::MatrixXd cov;
    gls_estimate(x, y, v, beta, cov);
    const Eigen::MatrixXd vi = v.inverse();
    const Eigen::VectorXd hand = (x.transpose() * vi * x).inverse() * (x.transpose() * vi * y);
    const double err = (beta - hand).cwiseAbs().maxCoeff();
    ok &= err < 1e-10;
    out << "gls " << fmt("%.1e", err);
  }
  {  // Cox, four subjects
    SurvivalDataset d;
    d.rows = {{1, Arm::Treatment, 1.0, true, 70, 0},
              {2, Arm::Placebo, 2.0, true, 70, 0},
              {3, Arm::Treatment, 3.0, false, 70, 0},
              {4, Arm::Placebo, 4.0, false, 70, 0}};
    CoxOptions opt;
    opt.covariates = {"treatment"};
    const double err = std::abs(fit_coxph(d, opt).coefficient("treatment") - cox_hand_oracle());
    ok &= err < 1e-6;
    out << ", cox " << fmt("%.1e", err);
  }
  {  // product-limit by hand
    SurvivalDataset d;
    d.rows = {{1, Arm::Placebo, 1.0, true, 70, 0}, {2, Arm::Placebo, 2.0, false, 70, 0},
              {3, Arm::Placebo, 2.5, true, 70, 0}, {4, Arm::Placebo, 2.5, true, 70, 0},
              {5, Arm::Placebo, 4.0, true, 70, 0}, {6, Arm::Placebo, 5.0, false, 70, 0}};
    const KaplanMeier km = kaplan_meier(d);
    const double s1 = 1.0 * (1.0 - 1.0 / 6.0);
    const double s2 = s1 * (1.0 - 2.0 / 4.0);
    const double s3 = s2 * (1.0 - 1.0 / 2.0);
    const bool exact = km.survival_at(1.0) == s1 && km.survival_at(2.0) == s1 &&
                       km.survival_at(2.5) == s2 && km.survival_at(4.0) == s3 &&
                       km.survival_at(6.0) == s3 && km.survival_at(0.5) == 1.0;
    ok &= exact;
    out << ", km " << (exact ? "exact" : "mismatch");
  }
  {  // area between quadratic curves
    Stream rng(2, {1});
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      FitResult f;
      f.model = ModelKind::Clda2;
      f.names = {"intercept", "time", "time:trt", "time2", "time2:trt", "age", "apoe4"};
      f.coefficients = Eigen::VectorXd::Zero(7);
      f.coefficients(2) = 0.2 * rng.normal();
      f.coefficients(4) = 0.05 * rng.normal();
      f.covariance = Eigen::MatrixXd::Identity(7, 7) * 1e-4;
      f.converged = true;
      const double t1 = 0.5 + 6 * rng.uniform();
      const double b2 = f.coefficients(2), b4 = f.coefficients(4);
      const double quad = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
          [&](double t) { return b2 * t + b4 * t * t; }, 0.0, t1, 15, 1e-14);
      worst = std::max(worst, std::abs(area_between_curves(f, 0.0, t1).estimate - quad));
    }
    ok &= worst < 1e-10;
    out << ", abc " << fmt("%.1e", worst);
  }
  {  // noise-free polynomials through cLDA
    LongitudinalDataset lin, quad;
    lin.visit_grid = quad.visit_grid = TrialDesign::default_visit_grid();
    lin.horizon = quad.horizon = 4.5;
    for (int id = 0; id < 40; ++id) {
      const Arm arm = id % 2 ? Arm::Treatment : Arm::Placebo;
      const double age = 65 + (id * 7 % 20);
      for (int k = 0; k <= 9; ++k) {
        if (k > 0 && k % 4 == id % 4) continue;
        const double t = 0.5 * k;
        const double y1 = arm == Arm::Treatment ? 1 - 0.12 * t : 1 - 0.2 * t;
        const double y2 =
            0.5 - 0.1 * t - 0.02 * t * t + (arm == Arm::Treatment ? 0.03 * t + 0.004 * t * t : 0.0);
        lin.rows.push_back({id, arm, t, y1, 1.0, age, id % 3 == 0});
        quad.rows.push_back({id, arm, t, y2, 0.5, age, id % 3 == 0});
      }
    }
    const FitResult f1 = fit_clda(lin, 1);
    const FitResult f2 = fit_clda(quad, 2);
    const double err = std::max({std::abs(f1.coefficient("time:trt") - 0.08),
                                 std::abs(f1.coefficient("time") + 0.2),
                                 std::abs(f2.coefficient("time:trt") - 0.03),
                                 std::abs(f2.coefficient("time2:trt") - 0.004),
                                 std::abs(f2.coefficient("time2") + 0.02)});
    ok &= err < 1e-6;
    out << ", clda " << fmt("%.1e", err);
  }
  const double secs = seconds_since(t0);
  ok &= secs < 5.0;
  out << "; " << fmt("%.2f", secs) << " s";
  return {ok, out.str()};
}

// ------------------------------------------------------------ criterion 2

Verdict criterion_type_one(const Context& ctx) {
  const Run run = scenario(ctx, "null", {0.0});
  const double lo = ctx.full ? 0.033 : 0.02, hi = ctx.full ? 0.069 : 0.09;
  const double limit = ctx.full ? 1800.0 : 600.0;
  std::ostringstream out;
  bool ok = true;
  for (const char* m : {"clda1", "clda2", "cox"}) {
    const double r = power(run.summary, 0.0, m);
    ok &= r >= lo && r <= hi;
    out << m << ' ' << fmt("%.3f", r) << ", ";
  }
  const double mmrm = power(run.summary, 0.0, "mmrm");
  ok &= mmrm <= 0.07;
  ok &= run.seconds < limit;
  out << "mmrm " << fmt("%.3f", mmrm) << " (R=" << ctx.replicates << ", band [" << lo << ", " << hi
      << "], mmrm <= 0.07); " << fmt("%.0f", run.seconds) << " s";
  return {ok, out.str()};
}

// ------------------------------------------------------------ criteria 3-5

Run alternatives(const Context& ctx) { return scenario(ctx, "alt", {0.2, 0.3, 0.4}); }

Verdict criterion_power_order(const Context& ctx) {
  const Run run = alternatives(ctx);
  const double cox = power(run.summary, 0.3, "cox");
  double best = 0.0;
  bool ok = true;
  std::ostringstream out;
  for (const char* m : {"mmrm", "clda1", "clda2"}) {
    const double p = power(run.summary, 0.3, m);
    ok &= cox < p;
    best = std::max(best, p);
    out << m << ' ' << fmt("%.3f", p) << ", ";
  }
  ok &= best - cox >= 0.15 && best >= 1.5 * cox;
  out << "cox " << fmt("%.3f", cox) << " at effect 0.3";
  return {ok, out.str()};
}

Verdict criterion_bias_direction(const Context& ctx) {
  const Run run = alternatives(ctx);
  bool bias_ok = true, power_ok = true;
  std::ostringstream out;
  for (double e : {0.2, 0.3, 0.4}) {
    out << "effect " << e << ':';
    for (const char* m : {"mmrm", "clda1", "clda2"}) {
      const double b = median_bias(run.summary, e, m, false);
      const double po = power(run.summary, e, m, "observed");
      const double pc = power(run.summary, e, m, "complete");
      bias_ok &= b > 0.0;
      power_ok &= po > pc;
      out << ' ' << m << " bias " << fmt("%+.4f", b) << " power " << fmt("%.3f", po) << '/'
          << fmt("%.3f", pc);
    }
    out << "; ";
  }
  out << "bias " << (bias_ok ? "ok" : "not positive") << ", observed power "
      << (power_ok ? "above complete" : "not above complete");
  return {bias_ok && power_ok, out.str()};
}

Verdict criterion_mehrotra(const Context& ctx) {
  const Run run = alternatives(ctx);
  bool closer = true, over = true;
  std::ostringstream out;
  for (const char* m : {"mmrm", "clda1", "clda2"}) {
    const std::string adj = std::string(m) + "_mehrotra";
    int nonpositive = 0;
    out << m << ':';
    for (double e : {0.2, 0.3, 0.4}) {
      const double u = median_bias(run.summary, e, m, true);
      const double a = median_bias(run.summary, e, adj, true);
      closer &= std::abs(a) < std::abs(u);
      nonpositive += a <= 0.0;
      out << ' ' << fmt("%+.1f", u) << "%->" << fmt("%+.1f", a) << '%';
    }
    over &= nonpositive >= 2;
    out << "; ";
  }
  out << "|adjusted| " << (closer ? "below" : "not below") << " |unadjusted|, adjusted <= 0 "
      << (over ? "in >= 2 of 3" : "in < 2 of 3");
  return {closer && over, out.str()};
}

// ------------------------------------------------------------ criterion 6

Verdict criterion_calibration(const Context& ctx) {
  const ScenarioConfig c = base_config();
  const ForestArtifact& art = forest(ctx);
  const double fresh = labeler_progression_fraction(c.params, c.design, art.threshold, c.labeler,
                                                    c.calibration.subjects, c.seed + 1);
  bool ok = std::abs(fresh - 0.24) <= 0.01;

  // large placebo group: null trial, placebo arm, observed survival data
  const SimulatedTrial trial = simulate_trial(c, art.forest, 0.0, 20000, 0);
  const KaplanMeier km = kaplan_meier(survival_dataset(trial, DatasetKind::Observed), Arm::Placebo);
  bool monotone = true;
  double prev = 1.0;
  for (const KaplanMeierStep& st : km.steps) {
    monotone &= st.survival <= prev;
    prev = st.survival;
  }
  const double s8 = km.survival_at(8.0);
  ok &= monotone && std::abs(s8 - 0.76) <= 0.03;
  std::ostringstream out;
  out << "fresh-sample fraction " << fmt("%.4f", fresh) << " (0.24 +/- 0.01), threshold "
      << fmt("%.4f", art.threshold) << "; placebo KM " << (monotone ? "monotone" : "not monotone")
      << ", S(8) " << fmt("%.3f", s8) << " (0.76 +/- 0.03)";
  return {ok, out.str()};
}

// ------------------------------------------------------------ criterion 7

Verdict criterion_forest(const Context& ctx) {
  const ForestArtifact& art = forest(ctx);
  const double oob = art.forest.oob_error();
  const auto rows = art.forest.oob_votes.size();
  return {oob <= 0.12 && rows == 2000,
          "oob error " + fmt("%.4f", oob) + " on " + std::to_string(rows) + " rows (<= 0.12), " +
              std::to_string(art.forest.trees.size()) + " trees"};
}

// ------------------------------------------------------------ criterion 8

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict criterion_determinism(const Context& ctx) {
  ScenarioConfig c = base_config();
  c.effects = {0.0, 0.3};
  c.sample_sizes = {300};
  c.replicates = 6;
  c.write_curves = true;
  const ForestArtifact& art = forest(ctx);
  const fs::path a = ctx.work / "determinism_1", b = ctx.work / "determinism_3";
  fs::remove_all(a);
  fs::remove_all(b);
  run_scenario(c, art, a, 1);
  run_scenario(c, art, b, 3);
  int files = 0, same = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    if (entry.path().extension() != ".csv") continue;
    ++files;
    same += fs::exists(b / entry.path().filename()) &&
            slurp(entry.path()) == slurp(b / entry.path().filename());
  }
  return {files >= 6 && same == files,
          std::to_string(same) + " of " + std::to_string(files) + " csv files byte-identical (1 vs 3 threads)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance report"};
  Context ctx;
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "padsim_acceptance").string();
  ctx.threads = default_thread_count();
  app.add_flag("--full", ctx.full, "Type I error at R = 1000 instead of the R = 300 smoke run");
  app.add_option("--criterion", only, "Criteria to check (default: all)")->check(CLI::Range(1, 8));
  app.add_option("--work", work, "Cache directory for forests and scenario runs");
  app.add_option("--threads", ctx.threads)->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  ctx.work = work;
  ctx.replicates = ctx.full ? 1000 : 300;
  fs::create_directories(ctx.work);

  const std::map<int, std::pair<std::string, std::function<Verdict()>>> criteria{
      {1, {"estimator oracles", [] { return criterion_oracles(); }}},
      {2, {"type I error", [&] { return criterion_type_one(ctx); }}},
      {3, {"power ordering", [&] { return criterion_power_order(ctx); }}},
      {4, {"missingness bias direction", [&] { return criterion_bias_direction(ctx); }}},
      {5, {"mehrotra correction", [&] { return criterion_mehrotra(ctx); }}},
      {6, {"calibration", [&] { return criterion_calibration(ctx); }}},
      {7, {"forest quality", [&] { return criterion_forest(ctx); }}},
      {8, {"determinism", [&] { return criterion_determinism(ctx); }}},
  };
  int failed = 0;
  for (const auto& [id, entry] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Verdict v;
    try {
      v = entry.second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << entry.first
              << "): " << v.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
