#include "ccopf/reformulate.hpp"

#include <algorithm>
#include <cmath>

#include "ccopf/errors.hpp"
#include "ccopf/normal.hpp"

namespace ccopf {

std::string to_string(Approach a) { return a == Approach::classical ? "classical" : "constraint-informed"; }

std::string to_string(Distribution d) { return d == Distribution::gaussian ? "gaussian" : "gmm"; }

Approach approach_from_string(const std::string& s) {
  if (s == "classical") return Approach::classical;
  if (s == "constraint-informed" || s == "constraint_informed" || s == "ci") return Approach::constraint_informed;
  throw ValidationError("unknown approach '" + s + "'");
}

Distribution distribution_from_string(const std::string& s) {
  if (s == "gaussian") return Distribution::gaussian;
  if (s == "gmm") return Distribution::gmm;
  throw ValidationError("unknown distribution '" + s + "'");
}

void MethodSpec::validate() const {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw ValidationError("epsilon must lie in (0, 0.5)");
  if (K < 1) throw ValidationError("K must be at least 1");
  if (distribution == Distribution::gaussian && K != 1) throw ValidationError("the gaussian method needs K = 1");
  if (distribution == Distribution::gmm && pwl.segments() < 2) {
    throw ValidationError("the mixture method needs a piecewise-linear CDF");
  }
}

FittedInputs classical_inputs(const GridCase& grid, const PtdfMatrix& ptdf, const GmmModel& xi_model) {
  const auto wind = grid.wind_bus_indices();
  const bool full_width = xi_model.dim == static_cast<int>(grid.num_buses());
  if (!full_width && xi_model.dim != static_cast<int>(wind.size())) {
    throw ValidationError("classical model dimension matches neither the wind buses nor all buses");
  }
  FittedInputs in;
  in.xi_model = xi_model;
  in.omega_model = transform_classical(xi_model);
  for (std::size_t l = 0; l < grid.num_lines(); ++l) {
    Eigen::VectorXd w;
    if (full_width) {
      w = ptdf.wind_row(l);
    } else {
      w.resize(static_cast<Eigen::Index>(wind.size()));
      for (std::size_t i = 0; i < wind.size(); ++i) w[static_cast<Eigen::Index>(i)] = ptdf.H(l, wind[i]);
    }
    in.eta_models.push_back(transform_classical(xi_model, w));
  }
  return in;
}

namespace {

// Variables and the affine maps shared by every formulation.
struct Context {
  const GridCase& grid;
  const PtdfMatrix& ptdf;
  VariableLayout layout;
  Eigen::VectorXd flow_offset;  // H (wind - load), the part of f0 not driven by pbar
};

Context make_context(const GridCase& grid, const PtdfMatrix& ptdf, int K, bool aux) {
  Context c{grid, ptdf, {}, {}};
  c.layout.G = static_cast<int>(grid.num_generators());
  c.layout.L = static_cast<int>(grid.num_lines());
  c.layout.K = K;
  c.layout.has_aux = aux;
  c.flow_offset = ptdf.H * (grid.wind_vector() - grid.load_vector());
  return c;
}

// f0_l as an affine function of pbar.
Affine nominal_flow(const Context& c, int l) {
  Affine a{{}, c.flow_offset[l]};
  for (int g = 0; g < c.layout.G; ++g) a.terms.push_back({c.layout.pbar(g), c.ptdf.gen_rows(l, g)});
  return a;
}

// gamma_l(alpha) * x + y, affine in alpha.
Affine line_combination(const Context& c, int l, double x, double y) {
  Affine a{{}, y};
  for (int g = 0; g < c.layout.G; ++g) a.terms.push_back({c.layout.alpha(g), -c.ptdf.gen_rows(l, g) * x});
  return a;
}

Affine scaled(Affine a, double s) {
  for (auto& t : a.terms) t.coeff *= s;
  a.constant *= s;
  return a;
}

Affine sum(Affine a, const Affine& b) {
  a.terms.insert(a.terms.end(), b.terms.begin(), b.terms.end());
  a.constant += b.constant;
  return a;
}

Affine plus_term(Affine a, int var, double coeff) {
  a.terms.push_back({var, coeff});
  return a;
}

std::string gen_tag(const Context& c, int g) { return std::to_string(c.grid.generators()[g].id); }
std::string line_tag(const Context& c, int l) { return std::to_string(c.grid.lines()[l].id); }

void add_variables(ProgramBuilder& b, const Context& c) {
  const auto& L = c.layout;
  for (int g = 0; g < L.G; ++g) b.add_variable("pbar[" + gen_tag(c, g) + "]");
  for (int g = 0; g < L.G; ++g) b.add_variable("alpha[" + gen_tag(c, g) + "]");
  for (int l = 0; l < L.L; ++l) b.add_variable("delta[" + line_tag(c, l) + "]");
  if (!L.has_aux) return;
  const char* names[] = {"M1", "M2"};
  for (const char* n : names) {
    for (int g = 0; g < L.G; ++g) {
      for (int k = 0; k < L.K; ++k) b.add_variable(std::string(n) + "[" + gen_tag(c, g) + "," + std::to_string(k) + "]");
    }
  }
  const char* line_names[] = {"M3", "M4"};
  for (const char* n : line_names) {
    for (int l = 0; l < L.L; ++l) {
      for (int k = 0; k < L.K; ++k) {
        b.add_variable(std::string(n) + "[" + line_tag(c, l) + "," + std::to_string(k) + "]");
      }
    }
  }
}

// Balance, sign restrictions and the objective.
void add_common(ProgramBuilder& b, const Context& c, const GmmModel& omega) {
  const auto& L = c.layout;
  Affine alpha_sum{{}, -1.0};
  Affine balance{{}, -(c.grid.total_load() - c.grid.total_wind())};
  for (int g = 0; g < L.G; ++g) {
    alpha_sum.terms.push_back({L.alpha(g), 1.0});
    balance.terms.push_back({L.pbar(g), 1.0});
  }
  b.add_equality(alpha_sum, "alpha_sum");
  b.add_equality(balance, "power_balance");
  for (int g = 0; g < L.G; ++g) {
    b.add_greater_equal({{{L.pbar(g), 1.0}}, 0.0}, "pbar_nonneg[" + gen_tag(c, g) + "]");
    b.add_greater_equal({{{L.alpha(g), 1.0}}, 0.0}, "alpha_nonneg[" + gen_tag(c, g) + "]");
  }
  for (int l = 0; l < L.L; ++l) b.add_greater_equal({{{L.delta(l), 1.0}}, 0.0}, "delta_nonneg[" + line_tag(c, l) + "]");
  const auto [mean, var] = gmm_moments(omega);
  build_objective(b, L, c.grid, mean, var);
}

// Symmetric square root of a PSD 2x2 matrix: C = R'R.
Eigen::Matrix2d psd_sqrt(const Eigen::MatrixXd& C) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(0.5 * (C + C.transpose()));
  if (es.info() != Eigen::Success) throw NumericalError("eigen decomposition of a line covariance failed");
  const Eigen::Vector2d ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// delta_l >= || R (gamma_l(alpha), 1) ||.
void add_line_cone(ProgramBuilder& b, const Context& c, int l, const Eigen::MatrixXd& base) {
  const Eigen::Matrix2d R = psd_sqrt(base);
  std::vector<Affine> entries{{{{c.layout.delta(l), 1.0}}, 0.0}};
  for (int i = 0; i < 2; ++i) entries.push_back(line_combination(c, l, R(i, 0), R(i, 1)));
  b.add_second_order(std::move(entries), "line_cone[" + line_tag(c, l) + "]");
}

const Eigen::MatrixXd& shared_base(const GmmModel& m, const std::string& what) {
  if (m.dim != 2) throw ValidationError(what + ": line model must be two-dimensional");
  if (!m.has_shared_base()) throw ValidationError(what + ": line model needs a shared covariance base");
  return m.base;
}

void check_inputs(const Context& c, const FittedInputs& in, const MethodSpec& spec) {
  spec.validate();
  check_model(in.omega_model);
  if (in.omega_model.dim != 1) throw ValidationError("Omega model must be one-dimensional");
  if (static_cast<int>(in.eta_models.size()) != c.layout.L) {
    throw ValidationError("missing line model: expected one per line");
  }
  for (const auto& m : in.eta_models) {
    check_model(m);
    shared_base(m, "line " + std::to_string(&m - in.eta_models.data()));
    if (m.components() != c.layout.K) throw ValidationError("line model component count differs from K");
  }
  if (in.omega_model.components() != c.layout.K) throw ValidationError("Omega model component count differs from K");
}

BuiltModel build_pwl_form(const GridCase& grid, const PtdfMatrix& ptdf, const FittedInputs& in,
                          const MethodSpec& spec) {
  const int K = in.omega_model.components();
  Context c = make_context(grid, ptdf, K, true);
  check_inputs(c, in, spec);
  const auto& L = c.layout;
  const auto& pwl = spec.pwl;
  const int S = static_cast<int>(pwl.segments());
  const double level = 1.0 - spec.epsilon;

  ProgramBuilder b;
  add_variables(b, c);
  add_common(b, c, in.omega_model);
  int cuts = 0;

  const auto& om = in.omega_model;
  for (int g = 0; g < L.G; ++g) {
    const auto& gen = grid.generators()[g];
    const std::string tag = gen_tag(c, g);
    Affine hi{{{L.alpha(g), -level}}, 0.0};
    Affine lo{{{L.alpha(g), -level}}, 0.0};
    for (int k = 0; k < K; ++k) {
      const double m = om.means(k, 0);
      const double sd = std::sqrt(om.covariances[k](0, 0));
      const std::string kt = tag + "," + std::to_string(k);
      // Distance to the limit in the mean: pmax - pbar + m alpha >= 0 and pbar - m alpha - pmin >= 0.
      const Affine up{{{L.pbar(g), -1.0}, {L.alpha(g), m}}, gen.p_max};
      const Affine down{{{L.pbar(g), 1.0}, {L.alpha(g), -m}}, -gen.p_min};
      b.add_greater_equal(up, "gen_mean_max[" + kt + "]");
      b.add_greater_equal(down, "gen_mean_min[" + kt + "]");
      for (int s = 0; s < S; ++s) {
        const double as = pwl.slopes[s];
        const double bs = pwl.intercepts[s];
        if (sd > 0.0) {
          b.add_greater_equal(plus_term(plus_term(scaled(up, as / sd), L.alpha(g), bs), L.m1(g, k), -1.0),
                              "gen_cut_max[" + kt + "," + std::to_string(s) + "]");
          b.add_greater_equal(plus_term(plus_term(scaled(down, as / sd), L.alpha(g), bs), L.m2(g, k), -1.0),
                              "gen_cut_min[" + kt + "," + std::to_string(s) + "]");
        } else {
          // A point mass on the feasible side of the limit holds with probability one.
          b.add_greater_equal({{{L.alpha(g), 1.0}, {L.m1(g, k), -1.0}}, 0.0},
                              "gen_cut_max[" + kt + "," + std::to_string(s) + "]");
          b.add_greater_equal({{{L.alpha(g), 1.0}, {L.m2(g, k), -1.0}}, 0.0},
                              "gen_cut_min[" + kt + "," + std::to_string(s) + "]");
        }
        cuts += 2;
      }
      b.add_greater_equal({{{L.alpha(g), 1.0}, {L.m1(g, k), -1.0}}, 0.0}, "M1_cap[" + kt + "]");
      b.add_greater_equal({{{L.alpha(g), 1.0}, {L.m2(g, k), -1.0}}, 0.0}, "M2_cap[" + kt + "]");
      hi.terms.push_back({L.m1(g, k), om.weights[k]});
      lo.terms.push_back({L.m2(g, k), om.weights[k]});
    }
    b.add_greater_equal(hi, "gen_chance_max[" + tag + "]");
    b.add_greater_equal(lo, "gen_chance_min[" + tag + "]");
  }

  for (int l = 0; l < L.L; ++l) {
    const auto& line = grid.lines()[l];
    const auto& em = in.eta_models[l];
    const std::string tag = line_tag(c, l);
    const Affine f0 = nominal_flow(c, l);
    Affine hi{{{L.delta(l), -level}}, 0.0};
    Affine lo{{{L.delta(l), -level}}, 0.0};
    for (int k = 0; k < K; ++k) {
      const double tau = std::sqrt(em.scales[k]);
      const Affine mean_shift = line_combination(c, l, em.means(k, 0), em.means(k, 1));
      const std::string kt = tag + "," + std::to_string(k);
      // fmax - f0 - (gamma, 1)'nu_k >= 0 and fmax + f0 + (gamma, 1)'nu_k >= 0.
      const Affine up = sum(scaled(sum(f0, mean_shift), -1.0), {{}, line.f_max});
      const Affine down = sum(sum(f0, mean_shift), {{}, line.f_max});
      b.add_greater_equal(up, "line_mean_max[" + kt + "]");
      b.add_greater_equal(down, "line_mean_min[" + kt + "]");
      for (int s = 0; s < S; ++s) {
        const double as = pwl.slopes[s];
        const double bs = pwl.intercepts[s];
        if (tau > 0.0) {
          b.add_greater_equal(plus_term(plus_term(scaled(up, as / tau), L.delta(l), bs), L.m3(l, k), -1.0),
                              "line_cut_max[" + kt + "," + std::to_string(s) + "]");
          b.add_greater_equal(plus_term(plus_term(scaled(down, as / tau), L.delta(l), bs), L.m4(l, k), -1.0),
                              "line_cut_min[" + kt + "," + std::to_string(s) + "]");
        } else {
          b.add_greater_equal({{{L.delta(l), 1.0}, {L.m3(l, k), -1.0}}, 0.0},
                              "line_cut_max[" + kt + "," + std::to_string(s) + "]");
          b.add_greater_equal({{{L.delta(l), 1.0}, {L.m4(l, k), -1.0}}, 0.0},
                              "line_cut_min[" + kt + "," + std::to_string(s) + "]");
        }
        cuts += 2;
      }
      b.add_greater_equal({{{L.delta(l), 1.0}, {L.m3(l, k), -1.0}}, 0.0}, "M3_cap[" + kt + "]");
      b.add_greater_equal({{{L.delta(l), 1.0}, {L.m4(l, k), -1.0}}, 0.0}, "M4_cap[" + kt + "]");
      hi.terms.push_back({L.m3(l, k), em.weights[k]});
      lo.terms.push_back({L.m4(l, k), em.weights[k]});
    }
    b.add_greater_equal(hi, "line_chance_max[" + tag + "]");
    b.add_greater_equal(lo, "line_chance_min[" + tag + "]");
    add_line_cone(b, c, l, em.base);
  }
  return {b.build(), L, cuts};
}

}  // namespace

void build_objective(ProgramBuilder& builder, const VariableLayout& layout, const GridCase& grid, double mean,
                     double variance) {
  // c2 (pbar - alpha E)^2 + c2 alpha^2 V + c1 (pbar - alpha E), as 1/2 x'Px + q'x.
  for (int g = 0; g < layout.G; ++g) {
    const auto& gen = grid.generators()[g];
    const int p = layout.pbar(g);
    const int a = layout.alpha(g);
    if (gen.c2 != 0.0) {
      builder.add_quadratic(p, p, 2.0 * gen.c2);
      if (mean != 0.0) builder.add_quadratic(p, a, -2.0 * gen.c2 * mean);
      if (mean * mean + variance != 0.0) builder.add_quadratic(a, a, 2.0 * gen.c2 * (mean * mean + variance));
    }
    if (gen.c1 != 0.0) {
      builder.add_linear(p, gen.c1);
      if (mean != 0.0) builder.add_linear(a, -gen.c1 * mean);
    }
  }
}

double expected_cost(const GridCase& grid, const Eigen::VectorXd& pbar, const Eigen::VectorXd& alpha, double mean,
                     double variance) {
  double total = 0.0;
  for (std::size_t g = 0; g < grid.num_generators(); ++g) {
    const auto& gen = grid.generators()[g];
    const double centred = pbar[g] - alpha[g] * mean;
    total += gen.c2 * centred * centred + gen.c2 * alpha[g] * alpha[g] * variance + gen.c1 * centred;
  }
  return total;
}

MeanConditionReport check_mean_conditions(const GridCase& grid, const PtdfMatrix& ptdf, const FittedInputs& inputs) {
  auto run = [&](const FittedInputs& in) {
    MeanConditionReport r;
    const auto& om = in.omega_model;
    const int K = om.components();
    double cap_sum = 0.0;
    for (std::size_t g = 0; g < grid.num_generators(); ++g) {
      const auto& gen = grid.generators()[g];
      const double width = gen.p_max - gen.p_min;
      // pmin + alpha max(m_k, 0) <= pbar <= pmax + alpha min(m_k, 0)
      double hi = 0.0;
      double lo = 0.0;
      for (int k = 0; k < K; ++k) {
        const double m = om.means(k, 0);
        hi = std::max(hi, m);
        lo = std::min(lo, m);
        if (std::abs(m) > width) r.generator_pairs.emplace_back(static_cast<int>(g), k);
      }
      const double cap = hi - lo > 0.0 ? std::min(1.0, width / (hi - lo)) : 1.0;
      r.alpha_cap.push_back(cap);
      cap_sum += cap;
    }
    const Eigen::VectorXd offset = ptdf.H * (grid.wind_vector() - grid.load_vector());
    for (std::size_t l = 0; l < grid.num_lines(); ++l) {
      const auto& em = in.eta_models.at(l);
      double f_lo = offset[l];
      double f_hi = offset[l];
      for (std::size_t g = 0; g < grid.num_generators(); ++g) {
        const double h = ptdf.gen_rows(l, g);
        const auto& gen = grid.generators()[g];
        f_lo += std::min(h * gen.p_min, h * gen.p_max);
        f_hi += std::max(h * gen.p_min, h * gen.p_max);
      }
      const double f_max = grid.lines()[l].f_max;
      for (int k = 0; k < em.components(); ++k) {
        // gamma_l(alpha) nu_k0 over the simplex ranges between the extreme -h_g nu_k0.
        double s_lo = std::numeric_limits<double>::infinity();
        double s_hi = -std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < grid.num_generators(); ++g) {
          const double v = -ptdf.gen_rows(l, g) * em.means(k, 0);
          s_lo = std::min(s_lo, v);
          s_hi = std::max(s_hi, v);
        }
        const double lo_total = f_lo + s_lo + em.means(k, 1);
        const double hi_total = f_hi + s_hi + em.means(k, 1);
        if (lo_total > f_max || hi_total < -f_max) r.line_pairs.emplace_back(static_cast<int>(l), k);
      }
    }
    r.infeasible_a_priori = cap_sum < 1.0 - 1e-12 || !r.line_pairs.empty();
    return r;
  };

  MeanConditionReport report = run(inputs);
  if (!report.clean()) {
    FittedInputs centred = inputs;
    centred.omega_model.means.setZero();
    for (auto& m : centred.eta_models) m.means.setZero();
    report.zero_mean_clears = run(centred).clean();
  }
  return report;
}

BuiltModel build_ci_model(const GridCase& grid, const PtdfMatrix& ptdf, const FittedInputs& inputs,
                          const MethodSpec& spec) {
  return build_pwl_form(grid, ptdf, inputs, spec);
}

BuiltModel build_gaussian_model(const GridCase& grid, const PtdfMatrix& ptdf, const FittedInputs& in,
                                const MethodSpec& spec) {
  Context c = make_context(grid, ptdf, 1, false);
  MethodSpec gspec = spec;
  gspec.distribution = Distribution::gaussian;
  gspec.K = 1;
  check_inputs(c, in, gspec);
  const auto& L = c.layout;
  const double z = normal_quantile(1.0 - spec.epsilon);

  ProgramBuilder b;
  add_variables(b, c);
  add_common(b, c, in.omega_model);

  const double m = in.omega_model.means(0, 0);
  const double sd = std::sqrt(in.omega_model.covariances[0](0, 0));
  for (int g = 0; g < L.G; ++g) {
    const auto& gen = grid.generators()[g];
    const std::string tag = gen_tag(c, g);
    // pbar - alpha (m - z sd) <= pmax,  pbar - alpha (m + z sd) >= pmin
    b.add_greater_equal({{{L.pbar(g), -1.0}, {L.alpha(g), m - z * sd}}, gen.p_max}, "gen_chance_max[" + tag + "]");
    b.add_greater_equal({{{L.pbar(g), 1.0}, {L.alpha(g), -(m + z * sd)}}, -gen.p_min}, "gen_chance_min[" + tag + "]");
  }
  for (int l = 0; l < L.L; ++l) {
    const auto& line = grid.lines()[l];
    const auto& em = in.eta_models[l];
    const std::string tag = line_tag(c, l);
    const double tau = std::sqrt(em.scales[0]);
    const Affine mean_flow = sum(nominal_flow(c, l), line_combination(c, l, em.means(0, 0), em.means(0, 1)));
    b.add_greater_equal(plus_term(sum(scaled(mean_flow, -1.0), {{}, line.f_max}), L.delta(l), -z * tau),
                        "line_chance_max[" + tag + "]");
    b.add_greater_equal(plus_term(sum(mean_flow, {{}, line.f_max}), L.delta(l), -z * tau),
                        "line_chance_min[" + tag + "]");
    add_line_cone(b, c, l, em.base);
  }
  return {b.build(), L, 0};
}

BuiltModel build_classical_model(const GridCase& grid, const PtdfMatrix& ptdf, const GmmModel& xi_model,
                                 const MethodSpec& spec) {
  check_model(xi_model);
  GmmModel model = xi_model;
  if (model.components() > 1 && !model.has_shared_base() && !detect_tied_scaled(model)) {
    throw ValidationError("classical mixture with free per-component covariances gives a nonconvex model");
  }
  if (model.components() == 1 && !model.has_shared_base()) {
    model.base = model.covariances[0];
    model.scales = Eigen::VectorXd::Ones(1);
  }
  const FittedInputs in = classical_inputs(grid, ptdf, model);
  if (spec.distribution == Distribution::gaussian) return build_gaussian_model(grid, ptdf, in, spec);
  return build_pwl_form(grid, ptdf, in, spec);
}

BuiltModel build_model(const GridCase& grid, const PtdfMatrix& ptdf, const FittedInputs& inputs,
                       const MethodSpec& spec) {
  if (spec.distribution == Distribution::gaussian) return build_gaussian_model(grid, ptdf, inputs, spec);
  if (spec.approach == Approach::classical && inputs.xi_model) {
    return build_classical_model(grid, ptdf, *inputs.xi_model, spec);
  }
  return build_ci_model(grid, ptdf, inputs, spec);
}

}  // namespace ccopf
