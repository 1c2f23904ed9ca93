#pragma once

namespace ccopf {

/// Standard normal CDF, evaluated through erfc so the upper tail keeps full relative accuracy.
double normal_cdf(double x);

/// Standard normal density.
double normal_pdf(double x);

/// Inverse of the standard normal CDF for p in (0, 1).
double normal_quantile(double p);

}  // namespace ccopf
