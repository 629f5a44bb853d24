#pragma once

#include <span>
#include <vector>

namespace padsim::stats {

double normal_cdf(double x);
double normal_quantile(double p);

// Two-sided p-value of a standard-normal Wald statistic, 2 (1 - Phi(|z|)).
double two_sided_p(double z);

// Sample quantile with linear interpolation between order statistics
// (Hyndman-Fan type 7, the R default). For {10, 20, 30}: Q1 = 15, Q3 = 25.
double quantile(std::vector<double> values, double prob);
double median(std::vector<double> values);

struct Quartiles {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
};
Quartiles quartiles(std::vector<double> values);

double mean(std::span<const double> values);
// Sample standard deviation (n - 1 denominator).
double stddev(std::span<const double> values);

}  // namespace padsim::stats
