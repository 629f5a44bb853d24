#include "padsim/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "padsim/error.hpp"

namespace padsim {

namespace {

constexpr double kAgeMean = 74.57;
constexpr double kAgeSd = 5.90;
constexpr double kAgeMin = 55.0;
constexpr double kAgeMax = 95.0;
constexpr double kApoe4Rate = 0.54;

constexpr double kResidualSd = 0.35;

}  // namespace

Eigen::MatrixXd RandomEffectsShape::covariance() const {
  Eigen::Matrix2d type_corr;
  type_corr << 1.0, intercept_slope_corr, intercept_slope_corr, 1.0;
  Eigen::MatrixXd outcome_corr = Eigen::MatrixXd::Constant(kOutcomeCount, kOutcomeCount, within_type_corr);
  outcome_corr.diagonal().setOnes();
  Eigen::MatrixXd cov(kRandomEffects, kRandomEffects);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const double sa = a == 0 ? intercept_sd : slope_sd;
      const double sb = b == 0 ? intercept_sd : slope_sd;
      cov.block(a * kOutcomeCount, b * kOutcomeCount, kOutcomeCount, kOutcomeCount) =
          sa * sb * type_corr(a, b) * outcome_corr;
    }
  return cov;
}

GenerativeParams GenerativeParams::defaults() {
  GenerativeParams p;
  SubpopulationParams& pr = p.progressor;
  pr.intercept = {-8.244, -6.897, -9.458, 0.852, 1.430, -6.537, 3.458};
  pr.year = {0.330, 0.261, 0.353, 0.009, 0.047, 0.082, 0.023};
  pr.age = {0.110, 0.096, 0.124, 0.007, -0.009, 0.081, -0.002};
  pr.apoe4 = {0.572, 0.039, 0.141, 0.040, 0.036, -0.224, 0.343};
  pr.residual_sd.fill(kResidualSd);
  pr.random_effects_cov = RandomEffectsShape{0.9, 0.12, 0.5, 0.25}.covariance();

  SubpopulationParams& st = p.stable;
  st.intercept = {-4.913, -1.840, -6.364, -1.385, 0.942, 1.094, 0.261};
  st.year = {0.064, 0.033, 0.022, 0.022, 0.025, 0.006, 0.0007};
  st.age = {0.062, 0.020, 0.084, 0.020, -0.011, -0.011, -0.003};
  st.apoe4 = {0.218, 0.465, 0.622, 0.115, -0.118, 0.117, 0.014};
  st.residual_sd.fill(kResidualSd);
  st.random_effects_cov = RandomEffectsShape{0.9, 0.05, 0.5, 0.25}.covariance();

  p.progressor_proportion = 0.24;
  return p;
}

void GenerativeParams::validate() const {
  if (!(progressor_proportion >= 0.0 && progressor_proportion <= 1.0))
    throw ParameterError("progressor_proportion must lie in [0, 1]");
  for (const SubpopulationParams* s : {&progressor, &stable}) {
    for (double sd : s->residual_sd)
      if (!(sd > 0.0)) throw ParameterError("residual SDs must be positive");
    if (s->random_effects_cov.rows() != kRandomEffects || s->random_effects_cov.cols() != kRandomEffects)
      throw ParameterError("random-effects covariance must be 14 x 14");
    if (!s->random_effects_cov.isApprox(s->random_effects_cov.transpose(), 1e-12))
      throw ParameterError("random-effects covariance must be symmetric");
    psd_factor(s->random_effects_cov);
  }
}

std::vector<double> TrialDesign::default_visit_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 16; ++k) grid.push_back(0.5 * k);
  return grid;
}

void TrialDesign::validate() const {
  if (n_total < 2) throw ConfigError("n_total must be at least 2");
  if (allocation_treatment < 1 || allocation_placebo < 1)
    throw ConfigError("allocation ratio terms must be positive");
  if (visit_grid.empty() || visit_grid.front() != 0.0)
    throw ConfigError("visit grid must start at 0");
  if (std::adjacent_find(visit_grid.begin(), visit_grid.end(), std::greater_equal<>()) != visit_grid.end())
    throw ConfigError("visit grid must be strictly increasing");
  if (horizon_index() < 0) throw ConfigError("analysis horizon must be a visit time");
  if (!(effect_size >= 0.0 && effect_size <= 1.0)) throw ConfigError("effect size must lie in [0, 1]");
  if (!(enrollment_duration >= 0.0)) throw ConfigError("enrollment duration must be nonnegative");
  if (!(max_follow_up >= analysis_horizon)) throw ConfigError("max follow-up must reach the analysis horizon");
  if (max_follow_up > visit_grid.back() + 1e-12) throw ConfigError("max follow-up exceeds the visit grid");
}

int TrialDesign::horizon_index() const {
  for (int k = 0; k < visit_count(); ++k)
    if (std::abs(visit_grid[k] - analysis_horizon) < 1e-9) return k;
  return -1;
}

int TrialDesign::last_visit_at_or_before(double t) const {
  int last = -1;
  for (int k = 0; k < visit_count(); ++k)
    if (visit_grid[k] <= t + 1e-9) last = k;
  return last;
}

double SlopeSchedule::cumulative(double t) const {
  if (t <= switch_time) return initial * t;
  return initial * switch_time + after * (t - switch_time);
}

SlopeSchedule arm_schedule(Arm arm, double effect_size) {
  return SlopeSchedule::constant(arm == Arm::Treatment ? 1.0 - effect_size : 1.0);
}

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw ParameterError("eigendecomposition of covariance failed");
  const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -1e-8 * scale)
    throw ParameterError("random-effects covariance is not positive semidefinite");
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

EnrollmentFollowUp follow_up_for(const TrialDesign& design, double enrollment_time) {
  const double close = design.enrollment_duration + design.analysis_horizon;
  return {enrollment_time, std::min(design.max_follow_up, close - enrollment_time)};
}

EnrollmentFollowUp enrollment_and_followup(const TrialDesign& design, Stream& rng) {
  if (design.enrollment_duration < 0.0) throw ConfigError("enrollment duration must be nonnegative");
  const double u = rng.uniform();
  return follow_up_for(design, design.enrollment_duration * u);
}

std::vector<Arm> assign_arms(int n, const TrialDesign& design, Stream& rng) {
  const int block = design.allocation_treatment + design.allocation_placebo;
  std::vector<Arm> pattern(static_cast<std::size_t>(block), Arm::Placebo);
  std::fill_n(pattern.begin(), design.allocation_treatment, Arm::Treatment);
  std::vector<Arm> arms;
  arms.reserve(static_cast<std::size_t>(n));
  while (static_cast<int>(arms.size()) < n) {
    std::vector<Arm> b = pattern;
    for (int i = block - 1; i > 0; --i)
      std::swap(b[i], b[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    for (Arm a : b)
      if (static_cast<int>(arms.size()) < n) arms.push_back(a);
  }
  return arms;
}

SubjectRecord draw_subject(const GenerativeParams& params, const TrialDesign& design, Arm arm,
                           Stream& rng) {
  SubjectRecord s;
  s.arm = arm;
  do {
    s.age = kAgeMean + kAgeSd * rng.normal();
  } while (s.age < kAgeMin || s.age > kAgeMax);
  s.apoe4 = rng.bernoulli(kApoe4Rate) ? 1 : 0;
  s.subpopulation = rng.bernoulli(params.progressor_proportion) ? Subpopulation::Progressor
                                                                : Subpopulation::Stable;
  Eigen::Matrix<double, kRandomEffects, 1> z;
  for (int k = 0; k < kRandomEffects; ++k) z(k) = rng.normal();
  s.random_effects = psd_factor(params.of(s.subpopulation).random_effects_cov) * z;
  const EnrollmentFollowUp e = enrollment_and_followup(design, rng);
  s.enrollment_time = e.enrollment_time;
  s.follow_up_limit = e.follow_up_limit;
  return s;
}

Eigen::MatrixXd evaluate_trajectory(const SubjectRecord& subject, const GenerativeParams& params,
                                    const std::vector<double>& visit_grid,
                                    const SlopeSchedule& schedule) {
  const SubpopulationParams& p = params.of(subject.subpopulation);
  const int visits = static_cast<int>(visit_grid.size());
  Eigen::MatrixXd z(visits, kOutcomeCount);
  for (int k = 0; k < kOutcomeCount; ++k) {
    const double level = p.intercept[k] + p.age[k] * subject.age + p.apoe4[k] * subject.apoe4 +
                         subject.random_effects(k);
    const double b1 = subject.random_effects(kOutcomeCount + k);
    for (int j = 0; j < visits; ++j) {
      const double t = visit_grid[j];
      const double eps = subject.residuals.size() ? subject.residuals(j, k) : 0.0;
      z(j, k) = level + p.year[k] * schedule.cumulative(t) + b1 * t + eps;
    }
  }
  return z;
}

Eigen::MatrixXd simulate_trajectory(SubjectRecord& subject, const GenerativeParams& params,
                                    const TrialDesign& design, Stream& rng) {
  const SubpopulationParams& p = params.of(subject.subpopulation);
  const int visits = design.visit_count();
  subject.residuals.resize(visits, kOutcomeCount);
  for (int j = 0; j < visits; ++j)
    for (int k = 0; k < kOutcomeCount; ++k) subject.residuals(j, k) = p.residual_sd[k] * rng.normal();
  return evaluate_trajectory(subject, params, design.visit_grid,
                             arm_schedule(subject.arm, design.effect_size));
}

}  // namespace padsim
