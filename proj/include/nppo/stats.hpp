#pragma once

#include <optional>
#include <span>
#include <vector>

namespace nppo::stats {

double mean(std::span<const double> x);
// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> x);

// Empty when either input is constant up to rounding (spread <= 1e-12 |mean|).
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);
// Pearson correlation of average ranks.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);
std::vector<double> ranks(std::span<const double> x);

struct TTestResult {
  double mean_diff = 0.0;
  double t = 0.0;
  double dof = 0.0;
  double p_one_sided = 1.0;  // H1: mean(a - b) > 0
  double p_two_sided = 1.0;
};
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

double normal_cdf(double x);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};
// One-sample Kolmogorov-Smirnov test against N(0, 1), asymptotic p-value with
// the Stephens small-sample correction.
KsResult ks_test_standard_normal(std::span<const double> sample);
// Survival function of the Kolmogorov distribution, Q(lambda).
double kolmogorov_q(double lambda);

}  // namespace nppo::stats
