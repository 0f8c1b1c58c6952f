#pragma once

namespace riskrank {

/// Standard normal lower-tail probability.
double normal_cdf(double x);
/// Standard normal upper-tail probability, accurate far into the right tail.
double normal_sf(double x);
/// Inverse of normal_cdf (Wichura's AS 241 rational approximation, about
/// 1e-16 relative accuracy). p must lie in (0, 1); 0 and 1 map to -inf/+inf.
double inverse_normal_cdf(double p);

}  // namespace riskrank
