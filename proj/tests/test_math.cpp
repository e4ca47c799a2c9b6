#include <cmath>
#include <initializer_list>
#include <limits>

#include "doctest.h"
#include "relspar/math.hpp"

using namespace relspar;

TEST_CASE("expit basic values and symmetry") {
  CHECK(expit(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(expit(1e9) == doctest::Approx(1.0));
  CHECK(expit(-1e9) == doctest::Approx(0.0));
  // Strict bounds hold until expit saturates to 1.0 near x = 37 (half an ULP).
  for (double x : {-30.0, -3.0, -0.7, 0.0, 0.2, 5.0, 30.0}) {
    CHECK(expit(x) + expit(-x) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(expit(x) > 0.0);
    CHECK(expit(x) < 1.0);
  }
  CHECK(expit(40.0) == 1.0);  // saturation is exact, not merely close
}

TEST_CASE("expit is monotone") {
  double prev = -1.0;
  for (double x = -800.0; x <= 800.0; x += 7.3) {
    double p = expit(x);
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("log_expit stays exact where expit underflows") {
  // expit(-800) rounds to zero, but log expit(-800) = -800 - log1p(e^-800).
  CHECK(expit(-800.0) == 0.0);
  CHECK(log_expit(-800.0) == doctest::Approx(-800.0).epsilon(1e-15));
  CHECK(log_expit(0.0) == doctest::Approx(std::log(0.5)).epsilon(1e-15));
  CHECK(log_expit(800.0) == doctest::Approx(0.0));
  for (double x : {-40.0, -2.0, 0.0, 1.3, 25.0}) {
    CHECK(log_expit(x) == doctest::Approx(std::log(expit(x))).epsilon(1e-12));
  }
}

TEST_CASE("softplus identity softplus(x) - softplus(-x) = x") {
  for (double x : {-100.0, -1.0, 0.0, 0.5, 3.0, 200.0}) {
    CHECK(softplus(x) - softplus(-x) == doctest::Approx(x).epsilon(1e-13));
  }
}

TEST_CASE("norm_cdf known values") {
  CHECK(norm_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(norm_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
  CHECK(norm_cdf(-1.0) == doctest::Approx(0.15865525393145707).epsilon(1e-12));
  CHECK(norm_cdf(3.0) == doctest::Approx(0.9986501019683699).epsilon(1e-12));
  CHECK(norm_cdf(-8.0) == doctest::Approx(6.22096057427178e-16).epsilon(1e-6));
}

TEST_CASE("norm_quantile known values") {
  CHECK(norm_quantile(0.5) == doctest::Approx(0.0));
  CHECK(norm_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(norm_quantile(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-12));
  CHECK(norm_quantile(0.95) == doctest::Approx(1.6448536269514722).epsilon(1e-12));
}

TEST_CASE("norm_quantile / norm_cdf round trip") {
  for (double p = 1e-10; p < 1.0; p = p < 0.5 ? p * 3.7 : 1.0 - (1.0 - p) / 3.7) {
    const double x = norm_quantile(p);
    CHECK(norm_cdf(x) == doctest::Approx(p).epsilon(1e-10));
  }
  for (double x : {-6.0, -2.2, -0.1, 0.0, 1.5, 4.4}) {
    CHECK(norm_quantile(norm_cdf(x)) == doctest::Approx(x).epsilon(1e-9));
  }
  // Far in the upper tail the round trip is limited by how finely doubles
  // resolve p near 1 (error ~ ulp(1) / pdf(x)), not by the quantile code.
  CHECK(norm_quantile(norm_cdf(7.0)) == doctest::Approx(7.0).epsilon(1e-5));
}

TEST_CASE("norm_quantile rejects out-of-range probabilities") {
  CHECK_THROWS(norm_quantile(0.0));
  CHECK_THROWS(norm_quantile(1.0));
  CHECK_THROWS(norm_quantile(-0.2));
  CHECK_THROWS(norm_quantile(std::numeric_limits<double>::quiet_NaN()));
}
