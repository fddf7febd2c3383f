#include "atlab/stats.hpp"

#include <algorithm>
#include <cmath>

#include "atlab/errors.hpp"

namespace atlab {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / 1.4142135623730950488); }

double normal_quantile(double p) {
  if (p <= 0.0 || p >= 1.0) throw ContractViolation("normal_quantile: p must lie in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,  -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01, -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1.0 - plow;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= phigh) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // one Halley refinement against the cdf
  double e = normal_cdf(x) - p;
  double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

namespace {

// Continued fraction for the incomplete beta (Lentz).
double betacf(double a, double b, double x) {
  const int max_iter = 300;
  const double eps = 3e-14, fpmin = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::fabs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_beta = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  double front = std::exp(ln_beta + a * std::log(x) + b * std::log(1.0 - x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - std::exp(ln_beta + b * std::log(1.0 - x) + a * std::log(x)) * betacf(b, a, 1.0 - x) / b;
}

double clopper_pearson_lower(int successes, int trials, double alpha) {
  if (trials <= 0 || successes < 0 || successes > trials)
    throw ContractViolation("clopper_pearson_lower: invalid counts");
  if (successes == 0) return 0.0;
  // lower bound solves I_p(k, n-k+1) = alpha; bisect the beta cdf
  const double a = static_cast<double>(successes);
  const double b = static_cast<double>(trials - successes + 1);
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (incomplete_beta(a, b, mid) < alpha)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double median_of(std::vector<double> values) {
  if (values.empty()) throw ContractViolation("median_of: empty sample");
  std::sort(values.begin(), values.end());
  size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

MadResult mad_indices(const std::vector<double>& values) {
  if (values.size() < 3) throw ContractViolation("mad_indices: needs at least 3 values");
  MadResult r;
  r.median = median_of(values);
  std::vector<double> dev(values.size());
  for (size_t i = 0; i < values.size(); ++i) dev[i] = std::fabs(values[i] - r.median);
  r.mad = median_of(dev);
  r.indices.assign(values.size(), 0.0);
  if (r.mad == 0.0) {
    r.degenerate = true;
    return r;
  }
  const double scale = 1.4826 * r.mad;
  for (size_t i = 0; i < values.size(); ++i) r.indices[i] = dev[i] / scale;
  return r;
}

}  // namespace atlab
