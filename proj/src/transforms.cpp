#include "padsim/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "padsim/error.hpp"
#include "padsim/stats.hpp"

namespace padsim::transforms {

namespace {

struct Knot {
  double value;
  double quantile;  // mid-rank, ascending raw order
};

std::vector<Knot> midrank_knots(const ReferenceDistribution& ref) {
  std::vector<Knot> knots;
  double below = 0.0;
  std::size_t i = 0;
  while (i < ref.count()) {
    const double v = ref.sorted_values[i];
    double tied = 0.0;
    while (i < ref.count() && ref.sorted_values[i] == v) tied += ref.weights[i++];
    knots.push_back({v, below + 0.5 * tied});
    below += tied;
  }
  return knots;
}

// Mid-rank quantile of `value` in ascending raw order.
double ascending_midrank(double value, const ReferenceDistribution& ref) {
  double below = 0.0;
  double tied = 0.0;
  for (std::size_t i = 0; i < ref.count(); ++i) {
    const double v = ref.sorted_values[i];
    if (v < value) {
      below += ref.weights[i];
    } else if (v == value) {
      tied += ref.weights[i];
    } else {
      break;
    }
  }
  return below + 0.5 * tied;
}

}  // namespace

ReferenceDistribution ReferenceDistribution::from_sample(Outcome outcome, std::vector<double> values,
                                                         std::vector<double> weights,
                                                         bool integer_valued,
                                                         bool higher_is_impaired) {
  if (values.empty()) throw ConfigError("reference distribution is empty");
  if (weights.empty()) weights.assign(values.size(), 1.0);
  if (weights.size() != values.size())
    throw ConfigError("reference weights and values differ in length");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  ReferenceDistribution ref;
  ref.outcome = outcome;
  ref.integer_valued = integer_valued;
  ref.higher_is_impaired = higher_is_impaired;
  double total = 0.0;
  for (std::size_t i : order) {
    if (!(weights[i] > 0.0)) throw ConfigError("reference weights must be positive");
    total += weights[i];
  }
  for (std::size_t i : order) {
    ref.sorted_values.push_back(values[i]);
    ref.weights.push_back(weights[i] / total);
  }
  return ref;
}

void ReferenceDistribution::validate() const {
  const std::string name(outcome_name(outcome));
  if (sorted_values.empty()) throw ConfigError("reference distribution for " + name + " is empty");
  if (weights.size() != sorted_values.size())
    throw ConfigError("reference for " + name + ": weights and values differ in length");
  if (!std::is_sorted(sorted_values.begin(), sorted_values.end()))
    throw ConfigError("reference for " + name + " is not sorted");
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw ConfigError("reference for " + name + " has a nonpositive weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ConfigError("reference weights for " + name + " do not sum to one");
}

double weighted_ecdf_z(double value, const ReferenceDistribution& ref) {
  if (ref.count() == 0) throw ConfigError("reference distribution is empty");
  const double eps = 0.5 / static_cast<double>(ref.count());
  double q = ascending_midrank(value, ref);
  if (!ref.higher_is_impaired) q = 1.0 - q;
  q = std::clamp(q, eps, 1.0 - eps);
  return stats::normal_quantile(q);
}

double z_to_raw(double z, const ReferenceDistribution& ref) {
  if (ref.count() == 0) throw ConfigError("reference distribution is empty");
  const double q = stats::normal_cdf(ref.higher_is_impaired ? z : -z);
  const std::vector<Knot> knots = midrank_knots(ref);
  double raw;
  if (q <= knots.front().quantile) {
    raw = knots.front().value;
  } else if (q >= knots.back().quantile) {
    raw = knots.back().value;
  } else {
    auto hi = std::upper_bound(knots.begin(), knots.end(), q,
                               [](double x, const Knot& k) { return x < k.quantile; });
    auto lo = hi - 1;
    const double f = (q - lo->quantile) / (hi->quantile - lo->quantile);
    raw = lo->value + f * (hi->value - lo->value);
  }
  if (!ref.integer_valued) return raw;
  // Snap to the nearest attainable value; ties go to the lower one.
  const Knot* best = &knots.front();
  for (const Knot& k : knots)
    if (std::abs(k.value - raw) < std::abs(best->value - raw)) best = &k;
  return best->value;
}

void BaselineStats::validate() const {
  for (const ComponentStats& c : components) {
    if (!(c.sd > 0.0) || !std::isfinite(c.sd)) throw ConfigError("PACC component SD must be positive");
    if (c.orientation != 1 && c.orientation != -1)
      throw ConfigError("PACC component orientation must be +1 or -1");
    if (!std::isfinite(c.mean)) throw ConfigError("PACC component mean must be finite");
  }
}

BaselineStats BaselineStats::estimate(const Eigen::MatrixXd& baseline, const BaselineStats& shape) {
  if (baseline.cols() != kPaccComponents)
    throw DataError("baseline matrix must have one column per PACC component");
  BaselineStats out = shape;
  for (int c = 0; c < kPaccComponents; ++c) {
    std::vector<double> col;
    col.reserve(static_cast<std::size_t>(baseline.rows()));
    for (Eigen::Index i = 0; i < baseline.rows(); ++i) {
      double x = baseline(i, c);
      if (std::isnan(x)) continue;
      if (shape.components[c].log_scale) x = std::log(x);
      col.push_back(x);
    }
    if (col.size() < 2) throw DataError("fewer than two baseline values for a PACC component");
    out.components[c].mean = stats::mean(col);
    out.components[c].sd = stats::stddev(col);
  }
  out.validate();
  return out;
}

BaselineStats BaselineStats::z_scale() {
  BaselineStats s;
  for (ComponentStats& c : s.components) c = {0.0, 1.0, -1, false};
  return s;
}

BaselineStats BaselineStats::raw_scale() {
  BaselineStats s;
  // ADAS delayed recall counts errors; Trails B is completion time.
  s.components[index(Outcome::AdasDwr)] = {0.0, 1.0, -1, false};
  s.components[index(Outcome::LogMem)] = {0.0, 1.0, +1, false};
  s.components[index(Outcome::TrailsB)] = {0.0, 1.0, -1, true};
  s.components[index(Outcome::Mmse)] = {0.0, 1.0, +1, false};
  return s;
}

std::optional<double> compute_pacc(const std::array<double, kPaccComponents>& scores,
                                   const BaselineStats& stats) {
  double sum = 0.0;
  int available = 0;
  for (int c = 0; c < kPaccComponents; ++c) {
    double x = scores[c];
    if (std::isnan(x)) continue;
    const ComponentStats& s = stats.components[c];
    if (s.log_scale) x = std::log(x);
    sum += s.orientation * (x - s.mean) / s.sd;
    ++available;
  }
  if (available == 0) return std::nullopt;
  return sum / available;
}

}  // namespace padsim::transforms
