#include "padsim/dropout.hpp"

#include <cmath>
#include <limits>

#include "padsim/error.hpp"

namespace padsim {

const ArmDropout& DropoutSpec::for_arm(Arm arm, double effect_size) const {
  if (arm == Arm::Placebo) return placebo;
  return effect_size == 0.0 ? treatment_null : treatment_alternative;
}

void DropoutSpec::validate() const {
  for (const ArmDropout* a : {&treatment_null, &treatment_alternative, &placebo}) {
    if (a->inefficacy_prob < 0.0 || a->intolerability_prob < 0.0 || a->mcar_annual_rate < 0.0)
      throw ConfigError("dropout probabilities and rates must be nonnegative");
    if (a->inefficacy_prob + a->intolerability_prob > 1.0)
      throw ConfigError("dropout cause probabilities exceed one");
  }
  if (!(intolerability_time > 0.0) || !(inefficacy_time > 0.0))
    throw ConfigError("dropout times must be positive");
  if (intolerability_benefit_retention < 0.0 || intolerability_benefit_retention > 1.0)
    throw ConfigError("intolerability benefit retention must lie in [0, 1]");
}

DropoutSpec DropoutSpec::none() {
  DropoutSpec s;
  s.treatment_null = s.treatment_alternative = s.placebo = ArmDropout{};
  return s;
}

Dropout assign_dropout(const SubjectRecord& subject, const DropoutSpec& spec, double effect_size,
                       Stream& rng) {
  const ArmDropout& a = spec.for_arm(subject.arm, effect_size);
  const double u_cause = rng.uniform();
  const double u_mcar = rng.uniform();

  Dropout scheduled;
  if (u_cause < a.inefficacy_prob) {
    scheduled = {DropoutCause::Inefficacy, spec.inefficacy_time};
  } else if (u_cause < a.inefficacy_prob + a.intolerability_prob) {
    scheduled = {DropoutCause::Intolerability, spec.intolerability_time};
  }
  if (scheduled.time > subject.follow_up_limit) scheduled = {};

  if (a.mcar_annual_rate > 0.0) {
    const double t = u_mcar / a.mcar_annual_rate;
    if (t < subject.follow_up_limit && t < scheduled.time) return {DropoutCause::Mcar, t};
  }
  return scheduled;
}

SlopeSchedule counterfactual_schedule(Arm arm, DropoutCause cause, double effect_size,
                                      const DropoutSpec& spec) {
  if (arm == Arm::Placebo) return SlopeSchedule::constant(1.0);
  switch (cause) {
    case DropoutCause::Inefficacy:
      return SlopeSchedule::constant(1.0);
    case DropoutCause::Intolerability:
      return {1.0 - effect_size, spec.intolerability_time,
              1.0 - spec.intolerability_benefit_retention * effect_size};
    case DropoutCause::None:
    case DropoutCause::Mcar:
      break;
  }
  return SlopeSchedule::constant(1.0 - effect_size);
}

Eigen::MatrixXd apply_counterfactual(const SubjectRecord& subject, DropoutCause cause,
                                     const GenerativeParams& params, const TrialDesign& design,
                                     const DropoutSpec& spec) {
  if (subject.complete_trajectory.size() == 0)
    throw DataError("counterfactual requires a simulated trajectory");
  if (subject.arm == Arm::Placebo || cause == DropoutCause::None || cause == DropoutCause::Mcar)
    return subject.complete_trajectory;
  return evaluate_trajectory(subject, params, design.visit_grid,
                             counterfactual_schedule(subject.arm, cause, design.effect_size, spec));
}

void censor(SubjectRecord& subject, const TrialDesign& design) {
  const int visits = static_cast<int>(subject.complete_trajectory.rows());
  subject.observed_trajectory = subject.complete_trajectory;
  const double stop = std::min(subject.dropout.time, subject.follow_up_limit);
  int observed_visits = 0;
  for (int j = 0; j < visits; ++j) {
    if (design.visit_grid[j] > stop + 1e-9) {
      subject.observed_trajectory.row(j).setConstant(std::numeric_limits<double>::quiet_NaN());
    } else {
      ++observed_visits;
    }
  }
  const auto keep = std::min<std::size_t>(subject.diagnosis_sequence.size(),
                                          static_cast<std::size_t>(observed_visits));
  subject.observed_diagnosis.assign(subject.diagnosis_sequence.begin(),
                                    subject.diagnosis_sequence.begin() + static_cast<long>(keep));
}

}  // namespace padsim
