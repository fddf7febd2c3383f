#pragma once

#include <vector>

namespace atlab {

// Standard normal quantile (Acklam's rational approximation, refined with one
// Halley step; absolute error well below 1e-12 on (0,1)).
double normal_quantile(double p);

double normal_cdf(double x);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

// One-sided Clopper-Pearson lower confidence bound for a binomial proportion
// at confidence 1 - alpha; 0 when successes == 0.
double clopper_pearson_lower(int successes, int trials, double alpha);

// Median absolute deviation anomaly indices with the 1.4826 consistency
// constant. Degenerate dispersion (MAD == 0) yields all-zero indices.
struct MadResult {
  std::vector<double> indices;
  double median = 0.0;
  double mad = 0.0;
  bool degenerate = false;
};
MadResult mad_indices(const std::vector<double>& values);

double median_of(std::vector<double> values);

}  // namespace atlab
