#include "ccopf/pwl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/tools/minima.hpp>

#include "ccopf/errors.hpp"
#include "ccopf/normal.hpp"

namespace ccopf {

namespace {

// Beyond this point Phi is 1 in double precision.
constexpr double kSearchLimit = 40.0;

}  // namespace

double chord_gap(double t0, double t1) {
  const double p0 = normal_cdf(t0);
  const double slope = (normal_cdf(t1) - p0) / (t1 - t0);
  // Phi - chord is unimodal on [t0, t1] because Phi is concave there.
  auto neg_gap = [&](double x) { return -(normal_cdf(x) - (p0 + slope * (x - t0))); };
  auto [x, v] = boost::math::tools::brent_find_minima(neg_gap, t0, t1, std::numeric_limits<double>::digits / 2);
  (void)x;
  return std::max(0.0, -v);
}

PwlCdf build_pwl(double delta) {
  if (!(delta > 0.0 && delta < 0.5)) throw ValidationError("pwl tolerance must lie in (0, 0.5)");
  PwlCdf pwl;
  pwl.delta = delta;
  pwl.breakpoints.push_back(0.0);
  while (1.0 - normal_cdf(pwl.breakpoints.back()) > delta) {
    const double start = pwl.breakpoints.back();
    double lo = start;
    double hi = kSearchLimit;
    if (chord_gap(start, hi) <= delta) {
      lo = hi;
    } else {
      for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (chord_gap(start, mid) <= delta) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
    }
    if (!(lo > start)) throw std::logic_error("pwl breakpoint search stalled");
    pwl.breakpoints.push_back(lo);
  }
  for (std::size_t s = 1; s < pwl.breakpoints.size(); ++s) {
    const double t0 = pwl.breakpoints[s - 1];
    const double t1 = pwl.breakpoints[s];
    const double a = (normal_cdf(t1) - normal_cdf(t0)) / (t1 - t0);
    pwl.slopes.push_back(a);
    pwl.intercepts.push_back(normal_cdf(t1) - a * t1);
  }
  pwl.slopes.push_back(0.0);
  pwl.intercepts.push_back(normal_cdf(pwl.breakpoints.back()));
  return pwl;
}

double PwlCdf::operator()(double x) const {
  double v = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < slopes.size(); ++s) v = std::min(v, slopes[s] * x + intercepts[s]);
  return v;
}

double eval_pwl(const PwlCdf& pwl, double x) {
  if (x < 0.0) throw std::domain_error("eval_pwl: argument must be non-negative");
  return pwl(x);
}

nlohmann::json pwl_to_json(const PwlCdf& pwl) {
  return {{"delta", pwl.delta}, {"t", pwl.breakpoints}, {"a", pwl.slopes}, {"b", pwl.intercepts}};
}

PwlCdf pwl_from_json(const nlohmann::json& j) {
  try {
    PwlCdf pwl;
    pwl.delta = j.at("delta").get<double>();
    pwl.breakpoints = j.at("t").get<std::vector<double>>();
    pwl.slopes = j.at("a").get<std::vector<double>>();
    pwl.intercepts = j.at("b").get<std::vector<double>>();
    if (pwl.slopes.size() != pwl.intercepts.size() || pwl.slopes.size() != pwl.breakpoints.size()) {
      throw ParseError("pwl: t, a and b must have matching lengths");
    }
    return pwl;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("pwl: ") + e.what());
  }
}

}  // namespace ccopf
