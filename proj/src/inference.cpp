#include "padsim/inference.hpp"

#include <cmath>
#include <map>
#include <set>
#include <string>

#include "padsim/error.hpp"
#include "padsim/stats.hpp"

namespace padsim {

std::string_view estimand_name(Estimand e) {
  switch (e) {
    case Estimand::FinalVisit:
      return "final_visit";
    case Estimand::AreaBetweenCurves:
      return "area_between_curves";
    case Estimand::LogHazardRatio:
      return "log_hazard_ratio";
  }
  return "?";
}

Estimand estimand_from_name(std::string_view name) {
  for (Estimand e : {Estimand::FinalVisit, Estimand::AreaBetweenCurves, Estimand::LogHazardRatio})
    if (estimand_name(e) == name) return e;
  throw ConfigError("unknown estimand '" + std::string(name) + "'");
}

ContrastResult wald(Estimand estimand, double estimate, double se) {
  if (!std::isfinite(se) || se < 0.0 || !std::isfinite(estimate))
    throw FitError("contrast needs a finite estimate and nonnegative standard error");
  ContrastResult c;
  c.estimand = estimand;
  c.estimate = estimate;
  c.se = se;
  if (se == 0.0) {
    if (estimate != 0.0) throw FitError("nonzero contrast with zero standard error");
    c.z = 0.0;
  } else {
    c.z = estimate / se;
  }
  c.p = stats::two_sided_p(c.z);
  if (estimand == Estimand::LogHazardRatio) c.hazard_ratio = std::exp(estimate);
  return c;
}

namespace {

void require_converged(const FitResult& fit) {
  if (!fit.converged)
    throw FitError("refusing to build a contrast from an unconverged fit" +
                   (fit.message.empty() ? std::string() : ": " + fit.message));
}

}  // namespace

ContrastResult final_visit_contrast(const FitResult& fit, double horizon) {
  require_converged(fit);
  switch (fit.model) {
    case ModelKind::Mmrm: {
      int last = -1;
      for (std::size_t i = 0; i < fit.names.size(); ++i)
        if (fit.names[i].starts_with("trt:visit_")) last = static_cast<int>(i);
      if (last < 0) throw FitError("MMRM fit has no treatment-by-visit terms");
      return wald(Estimand::FinalVisit, fit.coefficients(last), std::sqrt(fit.covariance(last, last)));
    }
    case ModelKind::Clda1: {
      const int i = fit.index_of("time:trt");
      return wald(Estimand::FinalVisit, horizon * fit.coefficients(i),
                  horizon * std::sqrt(fit.covariance(i, i)));
    }
    case ModelKind::Clda2: {
      const int i2 = fit.index_of("time:trt");
      const int i4 = fit.index_of("time2:trt");
      const double c2 = horizon;
      const double c4 = horizon * horizon;
      const double var = c2 * c2 * fit.covariance(i2, i2) + 2.0 * c2 * c4 * fit.covariance(i2, i4) +
                         c4 * c4 * fit.covariance(i4, i4);
      return wald(Estimand::FinalVisit, c2 * fit.coefficients(i2) + c4 * fit.coefficients(i4),
                  std::sqrt(std::max(var, 0.0)));
    }
    case ModelKind::Cox:
      break;
  }
  throw FitError("final-visit contrast is undefined for a Cox fit");
}

ContrastResult area_between_curves(const FitResult& fit, double t0, double tT) {
  if (fit.model != ModelKind::Clda2) throw FitError("area between curves needs a degree-2 cLDA fit");
  require_converged(fit);
  const int i2 = fit.index_of("time:trt");
  const int i4 = fit.index_of("time2:trt");
  if (fit.covariance.rows() <= std::max(i2, i4)) throw FitError("fit has no covariance block");
  const double c2 = 0.5 * (tT * tT - t0 * t0);
  const double c4 = (tT * tT * tT - t0 * t0 * t0) / 3.0;
  const double est = c2 * fit.coefficients(i2) + c4 * fit.coefficients(i4);
  const double var = c2 * c2 * fit.covariance(i2, i2) + 2.0 * c2 * c4 * fit.covariance(i2, i4) +
                     c4 * c4 * fit.covariance(i4, i4);
  return wald(Estimand::AreaBetweenCurves, est, std::sqrt(std::max(var, 0.0)));
}

ContrastResult hazard_contrast(const FitResult& fit) {
  if (fit.model != ModelKind::Cox) throw FitError("hazard contrast needs a Cox fit");
  require_converged(fit);
  const int i = fit.index_of("treatment");
  return wald(Estimand::LogHazardRatio, fit.coefficients(i), std::sqrt(fit.covariance(i, i)));
}

ContrastResult primary_contrast(const FitResult& fit, double horizon) {
  switch (fit.model) {
    case ModelKind::Mmrm:
    case ModelKind::Clda1:
      return final_visit_contrast(fit, horizon);
    case ModelKind::Clda2:
      return area_between_curves(fit, 0.0, horizon);
    case ModelKind::Cox:
      break;
  }
  return hazard_contrast(fit);
}

ContrastResult mehrotra_combine(const ContrastResult& completer, double dropout_fraction,
                                int n_treated) {
  if (!(dropout_fraction >= 0.0 && dropout_fraction < 1.0))
    throw FitError("dropout fraction must lie in [0, 1)");
  if (n_treated < 1) throw FitError("no treated subjects");
  const double keep = 1.0 - dropout_fraction;
  const double var = keep * keep * completer.se * completer.se +
                     completer.estimate * completer.estimate * dropout_fraction * keep / n_treated;
  return wald(completer.estimand, keep * completer.estimate, std::sqrt(var));
}

MehrotraResult mehrotra_adjust(const LongitudinalDataset& data, ModelKind base,
                               const OptimizerOptions& options, MmrmCovariance covariance) {
  if (base == ModelKind::Cox) throw FitError("Mehrotra adjustment needs a longitudinal base model");
  constexpr double tol = 1e-9;
  std::set<int> treated;
  std::set<int> completers;
  for (const LongitudinalRow& r : data.rows) {
    if (r.arm != Arm::Treatment) continue;
    treated.insert(r.subject);
    if (std::abs(r.time - data.horizon) < tol && std::isfinite(r.pacc)) completers.insert(r.subject);
  }
  if (treated.empty()) throw FitError("no treated subjects");
  if (completers.empty()) throw FitError("no treated completers");

  LongitudinalDataset subset;
  subset.visit_grid = data.visit_grid;
  subset.horizon = data.horizon;
  for (const LongitudinalRow& r : data.rows)
    if (r.arm == Arm::Placebo || completers.contains(r.subject)) subset.rows.push_back(r);

  MehrotraResult out;
  out.n_treated = static_cast<int>(treated.size());
  out.dropout_fraction =
      static_cast<double>(treated.size() - completers.size()) / static_cast<double>(treated.size());
  out.fit = base == ModelKind::Mmrm ? fit_mmrm(subset, options, covariance)
                                    : fit_clda(subset, base == ModelKind::Clda1 ? 1 : 2, options);
  out.completer_contrast = primary_contrast(out.fit, data.horizon);
  out.contrast = mehrotra_combine(out.completer_contrast, out.dropout_fraction, out.n_treated);
  return out;
}

}  // namespace padsim
