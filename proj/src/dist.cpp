#include "eqtrend/dist.hpp"

#include "eqtrend/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace eqtrend {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double folded_normal_cdf(double x, double mu, double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("folded normal: sigma must be positive");
  if (x < 0.0) throw ValidationError("folded normal: x must be non-negative");
  return std::max(0.0, normal_cdf((x - mu) / sigma) - normal_cdf((-x - mu) / sigma));
}

double folded_normal_quantile(double mu, double sigma, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("folded normal: alpha must lie in (0, 1)");
  if (!(sigma > 0.0)) throw ValidationError("folded normal: sigma must be positive");
  double lo = 0.0;
  double hi = std::abs(mu) + sigma;
  while (folded_normal_cdf(hi, mu, sigma) < alpha) hi *= 2.0;
  const double tol = 1e-10 * std::min(1.0, sigma);
  for (int it = 0; it < 400 && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (folded_normal_cdf(mid, mu, sigma) >= alpha)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

double folded_test_power(double beta1, double se, double delta, double alpha) {
  if (!(se > 0.0)) throw ValidationError("power: standard error must be positive");
  const double f = folded_normal_quantile(delta, se, alpha);
  return std::max(0.0, normal_cdf((f - beta1) / se) - normal_cdf((-f - beta1) / se));
}

}  // namespace eqtrend
