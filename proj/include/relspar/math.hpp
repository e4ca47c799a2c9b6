#pragma once

#include <cmath>

namespace relspar {

// Numerically stable logistic helpers.  All policy probabilities go through
// these so that extreme linear predictors never overflow, and log-probabilities
// never pass through a rounded-to-zero probability.

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double expit(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

// log expit(x), exact even for very negative x (where expit underflows).
inline double log_expit(double x) { return -softplus(-x); }

// Standard normal CDF and its inverse.  The inverse uses Acklam's rational
// approximation refined by one Halley step, giving ~1e-15 absolute accuracy.
double norm_cdf(double x);
double norm_quantile(double p);

}  // namespace relspar
