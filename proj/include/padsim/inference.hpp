#pragma once

#include <string_view>

#include "padsim/estimators.hpp"

namespace padsim {

enum class Estimand { FinalVisit, AreaBetweenCurves, LogHazardRatio };

std::string_view estimand_name(Estimand e);
// Throws ConfigError.
Estimand estimand_from_name(std::string_view name);

// Contrasts are oriented treatment minus placebo: a positive PACC contrast is
// a benefit, a negative log hazard ratio is a benefit.
struct ContrastResult {
  Estimand estimand = Estimand::FinalVisit;
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;  // two-sided, normal reference
  double hazard_ratio = 0.0;  // exp(estimate) for log hazard ratios, else 0
};

// Wald test of estimate / se. A zero estimate with zero se gives z = 0,
// p = 1. Throws FitError for a negative or non-finite se.
ContrastResult wald(Estimand estimand, double estimate, double se);

// MMRM: the last treatment-by-visit coefficient. cLDA1: horizon * beta_time:trt.
// cLDA2: beta2 * horizon + beta4 * horizon^2. Throws FitError for an
// unconverged fit or a Cox fit.
ContrastResult final_visit_contrast(const FitResult& fit, double horizon = 4.5);

// Integral over [t0, tT] of the fitted treatment-minus-placebo mean curve of
// a degree-2 cLDA fit: 1/2 b2 (tT^2 - t0^2) + 1/3 b4 (tT^3 - t0^3).
ContrastResult area_between_curves(const FitResult& fit, double t0, double tT);

ContrastResult hazard_contrast(const FitResult& fit);

// Estimand the replicate driver reports for each model.
ContrastResult primary_contrast(const FitResult& fit, double horizon = 4.5);

// Control-based mixture: treated dropouts are assumed to follow the placebo
// mean, so the treated-arm mean is (1 - pi) mu_completer + pi mu_placebo and
// the contrast shrinks to (1 - pi) times the completer contrast. Variance by
// the delta method with pi binomial on n_treated subjects.
ContrastResult mehrotra_combine(const ContrastResult& completer_contrast, double dropout_fraction,
                                int n_treated);

struct MehrotraResult {
  ContrastResult contrast;
  ContrastResult completer_contrast;
  double dropout_fraction = 0.0;
  int n_treated = 0;
  FitResult fit;
};

// Treated subjects without a PACC value at the horizon are dropouts. The base
// model is fitted once to placebo plus treated completers, its primary
// contrast is taken as the completer contrast, and mehrotra_combine applies
// the mixture. Throws FitError when there are no treated completers or the
// base fit does not converge.
MehrotraResult mehrotra_adjust(const LongitudinalDataset& data, ModelKind base,
                               const OptimizerOptions& options = {},
                               MmrmCovariance covariance = MmrmCovariance::Unstructured);

}  // namespace padsim
