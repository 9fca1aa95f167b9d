#pragma once

// Standard normal distribution helpers with tails that stay finite far past
// the point where Phi(z) underflows.

namespace prefrank::normal {

double pdf(double z);
double log_pdf(double z);
double cdf(double z);

// log Phi(z). Uses erfc for z < -5 and an asymptotic series once erfc
// underflows, so the result is finite for every finite z.
double log_cdf(double z);

// phi(z) / Phi(z), the derivative of log Phi(z).
double inverse_mills(double z);

}  // namespace prefrank::normal
