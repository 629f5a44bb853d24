#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "padsim/mixed_model.hpp"
#include "padsim/types.hpp"

namespace padsim {

struct LongitudinalRow {
  int subject = 0;
  Arm arm = Arm::Placebo;
  double time = 0.0;
  double pacc = 0.0;
  double baseline_pacc = 0.0;  // NaN when the baseline visit is missing
  double age = 0.0;
  int apoe4 = 0;
};

struct LongitudinalDataset {
  std::vector<LongitudinalRow> rows;
  std::vector<double> visit_grid;  // scheduled times; rows must sit on it
  double horizon = 4.5;
  // Throws DataError on duplicate (subject, visit) rows, off-grid times, or
  // times past the horizon.
  void validate() const;
};

struct SurvivalRow {
  int subject = 0;
  Arm arm = Arm::Placebo;
  double time = 0.0;
  bool event = false;
  double age = 0.0;
  int apoe4 = 0;
};

struct SurvivalDataset {
  std::vector<SurvivalRow> rows;
  // Throws DataError on nonpositive times.
  void validate() const;
};

enum class ModelKind { Mmrm, Clda1, Clda2, Cox };

std::string_view model_name(ModelKind kind);
// Accepts mmrm, clda1, clda2, cox. Throws ConfigError.
ModelKind model_from_name(std::string_view name);

struct FitResult {
  ModelKind model = ModelKind::Mmrm;
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd covariance;
  std::vector<std::pair<std::string, double>> variance_components;
  // Log-likelihood: restricted for MMRM, full for cLDA, partial for Cox.
  double log_likelihood = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  // Minimized criterion (-2 log likelihood, or -log partial likelihood for
  // Cox) after each accepted optimizer step.
  std::vector<double> trace;
  int subjects = 0;
  int observations = 0;
  int events = 0;
  std::string message;

  // Throws FitError for an unknown name.
  int index_of(std::string_view name) const;
  double coefficient(std::string_view name) const { return coefficients(index_of(name)); }
  double standard_error(std::string_view name) const;
};

struct OptimizerOptions {
  int max_simplex_iterations = 400;
  double simplex_tolerance = 1e-2;
  int max_newton_iterations = 50;
  double gradient_tolerance = 1e-6;
};

// beta = (X'V^-1X)^-1 X'V^-1 y and its covariance, via Cholesky of V.
// Throws FitError on a rank-deficient X or non-PD V.
void gls_estimate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::MatrixXd& v,
                  Eigen::VectorXd& beta, Eigen::MatrixXd& beta_cov);

// Residual covariance of the MMRM on the post-baseline visit grid: AR(1)
// with one common variance, AR(1) correlation with a variance per visit, or
// unstructured.
enum class MmrmCovariance { Ar1, HeteroAr1, Unstructured };

std::string_view covariance_name(MmrmCovariance c);
// Accepts ar1, ar1_hetero and unstructured. Throws ConfigError.
MmrmCovariance covariance_from_name(std::string_view name);

// Change from baseline at post-baseline visits up to the horizon, categorical
// time, treatment-by-visit terms, baseline PACC, age and APOE4; REML.
// Subjects without a baseline are dropped. Coefficients: visit_<t>,
// trt:visit_<t>, baseline, age, apoe4.
FitResult fit_mmrm(const LongitudinalDataset& data, const OptimizerOptions& options = {},
                   MmrmCovariance covariance = MmrmCovariance::Unstructured);

// Baseline as a response with a shared intercept (no treatment main effect);
// random intercept and slope; ML. Coefficients for degree 1: intercept,
// time, time:trt, age, apoe4; degree 2 adds time2 and time2:trt after
// time:trt.
FitResult fit_clda(const LongitudinalDataset& data, int degree,
                   const OptimizerOptions& options = {});

struct CoxOptions {
  std::vector<std::string> covariates{"treatment", "age", "apoe4"};
  double gradient_tolerance = 1e-8;
  int max_iterations = 50;
  // |beta_j| * sd(x_j) above this flags a monotone likelihood.
  double separation_bound = 10.0;
};

// Efron partial likelihood maximized by Newton-Raphson with step halving.
// Coefficients are log hazard ratios named after the covariates. Throws
// FitError when there are no events or the information matrix is singular
// at the start.
FitResult fit_coxph(const SurvivalDataset& data, const CoxOptions& options = {});

struct KaplanMeierStep {
  double time = 0.0;
  int at_risk = 0;
  int events = 0;
  int censored = 0;
  double survival = 1.0;
  double std_error = 0.0;  // Greenwood
  double lower = 1.0;      // 95% interval on the log scale
  double upper = 1.0;
};

struct KaplanMeier {
  std::vector<KaplanMeierStep> steps;  // one per distinct observed time
  double survival_at(double t) const;
};

KaplanMeier kaplan_meier(const SurvivalDataset& data, std::optional<Arm> group = std::nullopt);

}  // namespace padsim
