#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

namespace ccopf {

/// Concave piecewise-linear under-estimator of the standard normal CDF on
/// [0, inf). Segment s < S-1 is the chord over [t_s, t_{s+1}]; the last
/// segment is the horizontal tail at Phi(t_{S-1}).
struct PwlCdf {
  double delta = 0.0;
  std::vector<double> breakpoints;  // t_0 = 0 < ... < t_{S-1}
  std::vector<double> slopes;       // a_1 .. a_S, strictly decreasing, a_S = 0
  std::vector<double> intercepts;   // b_1 .. b_S

  std::size_t segments() const { return slopes.size(); }
  /// min_s (a_s x + b_s); x must be non-negative.
  double operator()(double x) const;
};

/// Greedy forward sweep: each chord is extended as far as the gap to Phi
/// stays within delta. Requires 0 < delta < 0.5.
PwlCdf build_pwl(double delta);

double eval_pwl(const PwlCdf& pwl, double x);

/// Largest value of Phi(x) - chord(x) on [t0, t1] for the chord through
/// (t0, Phi(t0)) and (t1, Phi(t1)).
double chord_gap(double t0, double t1);

nlohmann::json pwl_to_json(const PwlCdf& pwl);
PwlCdf pwl_from_json(const nlohmann::json& j);

}  // namespace ccopf
