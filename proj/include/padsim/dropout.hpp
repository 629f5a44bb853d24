#pragma once

#include <Eigen/Core>

#include "padsim/datagen.hpp"
#include "padsim/rng.hpp"

namespace padsim {

struct ArmDropout {
  double inefficacy_prob = 0.0;
  double intolerability_prob = 0.0;
  double mcar_annual_rate = 0.0;
};

struct DropoutSpec {
  ArmDropout treatment_null{0.15, 0.10, 0.05};
  ArmDropout treatment_alternative{0.08, 0.10, 0.05};
  ArmDropout placebo{0.15, 0.0, 0.05};
  double intolerability_time = 0.5;
  double inefficacy_time = 1.0;
  // Share of the treatment benefit kept after an intolerability dropout.
  double intolerability_benefit_retention = 0.85;

  // Treatment arm uses the null probabilities when effect_size == 0.
  const ArmDropout& for_arm(Arm arm, double effect_size) const;
  // Throws ConfigError.
  void validate() const;
  // No dropout of any kind.
  static DropoutSpec none();
};

// One multinomial draw picks inefficacy / intolerability / neither; an
// independent MCAR time T ~ Uniform(0, 1 / rate) applies when it falls before
// the follow-up limit and before any scheduled cause (ties go to the
// scheduled cause). Always consumes exactly two uniforms.
Dropout assign_dropout(const SubjectRecord& subject, const DropoutSpec& spec, double effect_size,
                       Stream& rng);

// Fixed-slope schedule a treated subject follows given its dropout cause.
SlopeSchedule counterfactual_schedule(Arm arm, DropoutCause cause, double effect_size,
                                      const DropoutSpec& spec);

// Complete trajectory after removing benefit the subject would not have had:
// inefficacy dropouts get no benefit at all, intolerability dropouts keep
// `retention` of it after the dropout time. Reuses the subject's residual
// and random-effect draws.
Eigen::MatrixXd apply_counterfactual(const SubjectRecord& subject, DropoutCause cause,
                                     const GenerativeParams& params, const TrialDesign& design,
                                     const DropoutSpec& spec);

// Fills observed_trajectory (NaN after dropout or follow-up) and
// observed_diagnosis (prefix of diagnosis_sequence up to the dropout).
void censor(SubjectRecord& subject, const TrialDesign& design);

}  // namespace padsim
