#include "prefrank/normal.hpp"

#include <cmath>

namespace prefrank::normal {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
// 0.5 * log(2 pi)
constexpr double kHalfLog2Pi = 0.91893853320467274178;
// Below this, erfc(-z / sqrt 2) is within a few decades of underflow.
constexpr double kAsymptoticBelow = -37.0;

// log Phi(z) for z << 0 from the Mills-ratio series
// Phi(z) = phi(z) / (-z) * (1 - 1/z^2 + 3/z^4 - 15/z^6 + ...).
double log_cdf_asymptotic(double z) {
  const double inv_z2 = 1.0 / (z * z);
  double term = 1.0;
  double series = 1.0;
  for (int k = 1; k <= 8; ++k) {
    term *= -(2.0 * k - 1.0) * inv_z2;
    series += term;
  }
  return log_pdf(z) - std::log(-z) + std::log(series);
}

}  // namespace

double pdf(double z) { return std::exp(log_pdf(z)); }

double log_pdf(double z) { return -0.5 * z * z - kHalfLog2Pi; }

double cdf(double z) {
  // Both branches evaluate erfc on a non-negative argument, so
  // cdf(z) + cdf(-z) == 1 up to one rounding.
  if (z >= 0.0) return 1.0 - 0.5 * std::erfc(z * kInvSqrt2);
  return 0.5 * std::erfc(-z * kInvSqrt2);
}

double log_cdf(double z) {
  if (z > 5.0) return std::log1p(-0.5 * std::erfc(z * kInvSqrt2));
  if (z >= -5.0) return std::log(cdf(z));
  if (z >= kAsymptoticBelow) return std::log(0.5 * std::erfc(-z * kInvSqrt2));
  return log_cdf_asymptotic(z);
}

double inverse_mills(double z) { return std::exp(log_pdf(z) - log_cdf(z)); }

}  // namespace prefrank::normal
