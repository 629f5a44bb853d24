#pragma once

#include <array>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "padsim/types.hpp"

namespace padsim::transforms {

// Weighted empirical distribution of one outcome's raw scores.
struct ReferenceDistribution {
  Outcome outcome = Outcome::AdasDwr;
  std::vector<double> sorted_values;  // nondecreasing
  std::vector<double> weights;        // positive, sum to one
  bool integer_valued = false;
  // Raw direction that means "more impaired". Z-scores are always oriented
  // impairment-positive.
  bool higher_is_impaired = true;

  // Sorts the sample and normalizes weights (equal weights when empty).
  static ReferenceDistribution from_sample(Outcome outcome, std::vector<double> values,
                                           std::vector<double> weights = {},
                                           bool integer_valued = false,
                                           bool higher_is_impaired = true);

  // Throws ConfigError on an empty, unsorted, or badly weighted reference.
  void validate() const;
  std::size_t count() const { return sorted_values.size(); }
};

// Phi^-1 of the weighted mid-rank quantile of `value`: cumulative weight of
// strictly smaller reference values plus half the weight tied at `value`.
// The quantile is clamped to [1/(2n), 1 - 1/(2n)].
double weighted_ecdf_z(double value, const ReferenceDistribution& ref);

// Inverse of weighted_ecdf_z. Interpolates linearly between the mid-rank
// knots of distinct reference values and clamps outside them; integer-valued
// outcomes snap to the nearest attainable reference value.
double z_to_raw(double z, const ReferenceDistribution& ref);

// PACC components, in composite order.
enum class PaccComponent : int { AdasDwr = 0, LogMem, TrailsB, Mmse };
inline constexpr int kPaccComponents = 4;
inline constexpr std::array<Outcome, kPaccComponents> kPaccOutcomes = {
    Outcome::AdasDwr, Outcome::LogMem, Outcome::TrailsB, Outcome::Mmse};

struct ComponentStats {
  double mean = 0.0;
  double sd = 1.0;
  // +1 when larger inputs mean better cognition, -1 when they mean worse.
  int orientation = -1;
  // Standardize log(x) instead of x (Trails B on the raw scale).
  bool log_scale = false;
};

struct BaselineStats {
  std::array<ComponentStats, kPaccComponents> components{};

  void validate() const;

  // Baseline-sample mean and SD per column of `baseline` (n x 4, NaN =
  // missing). Orientation and log flags are taken from `shape`.
  static BaselineStats estimate(const Eigen::MatrixXd& baseline, const BaselineStats& shape);
  // Shape for impairment-positive Z inputs: orientation -1, no logs.
  static BaselineStats z_scale();
  // Shape for raw ADNI-style scores.
  static BaselineStats raw_scale();
};

// Average of the available oriented, standardized components; nullopt when
// all four are missing (NaN).
std::optional<double> compute_pacc(const std::array<double, kPaccComponents>& scores,
                                   const BaselineStats& stats);

}  // namespace padsim::transforms
