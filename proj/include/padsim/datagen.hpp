#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "padsim/rng.hpp"
#include "padsim/types.hpp"

namespace padsim {

inline constexpr int kRandomEffects = 2 * kOutcomeCount;  // intercepts, then slopes

using OutcomeVector = std::array<double, kOutcomeCount>;

// Fixed effects are on the impairment-positive Z scale; age is in years
// (uncentered), time in years.
struct SubpopulationParams {
  OutcomeVector intercept{};
  OutcomeVector year{};
  OutcomeVector age{};
  OutcomeVector apoe4{};
  OutcomeVector residual_sd{};
  Eigen::MatrixXd random_effects_cov = Eigen::MatrixXd::Zero(kRandomEffects, kRandomEffects);
};

// Exchangeable-within-type covariance: Sigma = S (C_type kron C_outcome) S
// with S the diagonal of intercept/slope SDs.
struct RandomEffectsShape {
  double intercept_sd = 0.9;
  double slope_sd = 0.12;
  double within_type_corr = 0.5;
  double intercept_slope_corr = 0.25;

  Eigen::MatrixXd covariance() const;
};

struct GenerativeParams {
  SubpopulationParams progressor;
  SubpopulationParams stable;
  double progressor_proportion = 0.24;

  const SubpopulationParams& of(Subpopulation s) const {
    return s == Subpopulation::Progressor ? progressor : stable;
  }
  SubpopulationParams& of(Subpopulation s) {
    return s == Subpopulation::Progressor ? progressor : stable;
  }

  // Posterior means of the joint model fit (progressor / stable), residual
  // SD 0.35, random effects per RandomEffectsShape (slope SD 0.12 / 0.05).
  static GenerativeParams defaults();
  // Throws ParameterError on non-PSD covariance, sigma <= 0, bad proportion.
  void validate() const;
};

struct TrialDesign {
  int n_total = 1000;
  int allocation_treatment = 1;
  int allocation_placebo = 1;
  std::vector<double> visit_grid = default_visit_grid();
  double analysis_horizon = 4.5;
  double enrollment_duration = 4.0;
  double max_follow_up = 8.0;
  double effect_size = 0.0;
  std::uint64_t seed = 20180406;

  static std::vector<double> default_visit_grid();  // 0, 0.5, ..., 8
  // Throws ConfigError.
  void validate() const;
  int horizon_index() const;
  // Index of the last grid time <= t (-1 when t < 0).
  int last_visit_at_or_before(double t) const;
  int visit_count() const { return static_cast<int>(visit_grid.size()); }
};

enum class DropoutCause : int { None = 0, Inefficacy, Intolerability, Mcar };

struct Dropout {
  DropoutCause cause = DropoutCause::None;
  double time = std::numeric_limits<double>::infinity();
};

// Fixed-slope multiplier over time: `initial` until `switch_time`, then
// `after`. The fixed-effect time term is year * cumulative(t).
struct SlopeSchedule {
  double initial = 1.0;
  double switch_time = std::numeric_limits<double>::infinity();
  double after = 1.0;

  double cumulative(double t) const;
  static SlopeSchedule constant(double m) { return {m, std::numeric_limits<double>::infinity(), m}; }
};

struct SubjectRecord {
  int id = 0;
  Arm arm = Arm::Placebo;
  double age = 0.0;
  int apoe4 = 0;
  Subpopulation subpopulation = Subpopulation::Stable;
  Eigen::Matrix<double, kRandomEffects, 1> random_effects = Eigen::Matrix<double, kRandomEffects, 1>::Zero();
  double enrollment_time = 0.0;
  double follow_up_limit = 0.0;
  // visits x outcomes residual draws; reused by counterfactual regeneration.
  Eigen::MatrixXd residuals;
  // visits x outcomes Z-scores over the whole grid.
  Eigen::MatrixXd complete_trajectory;
  // Same shape; NaN where not observed (after dropout or follow-up).
  Eigen::MatrixXd observed_trajectory;
  Dropout dropout;
  // One entry per visit up to follow_up_limit, from the complete trajectory.
  std::vector<Diagnosis> diagnosis_sequence;
  // Prefix of diagnosis_sequence observed before dropout.
  std::vector<Diagnosis> observed_diagnosis;
};

struct EnrollmentFollowUp {
  double enrollment_time = 0.0;
  double follow_up_limit = 0.0;
};

// Covariates, latent subpopulation, random effects and enrollment. Age is
// Normal(74.57, 5.90^2) truncated to [55, 95]; APOE4 carriage Bernoulli(0.54).
SubjectRecord draw_subject(const GenerativeParams& params, const TrialDesign& design, Arm arm,
                           Stream& rng);

// Permuted-block randomization with blocks of allocation_treatment +
// allocation_placebo.
std::vector<Arm> assign_arms(int n, const TrialDesign& design, Stream& rng);

// Draws residuals into `subject` and returns the complete trajectory for the
// arm's slope multiplier (1 for placebo, 1 - effect for treatment).
Eigen::MatrixXd simulate_trajectory(SubjectRecord& subject, const GenerativeParams& params,
                                    const TrialDesign& design, Stream& rng);

// Deterministic trajectory from the stored random effects and residuals.
Eigen::MatrixXd evaluate_trajectory(const SubjectRecord& subject, const GenerativeParams& params,
                                    const std::vector<double>& visit_grid,
                                    const SlopeSchedule& schedule);

SlopeSchedule arm_schedule(Arm arm, double effect_size);

// Uniform enrollment over [0, enrollment_duration]; study closes at
// enrollment_duration + analysis_horizon; follow-up capped at max_follow_up.
EnrollmentFollowUp enrollment_and_followup(const TrialDesign& design, Stream& rng);
EnrollmentFollowUp follow_up_for(const TrialDesign& design, double enrollment_time);

// Square-root factor F with F F' = cov (Cholesky when PD, eigen otherwise). Throws
// ParameterError when cov is not PSD within 1e-8.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov);

}  // namespace padsim
