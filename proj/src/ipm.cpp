// Homogeneous self-dual interior-point method for
//   min 1/2 x'Px + q'x  s.t.  Ax + s = b,  s in K
// with K a product of zero, non-negative and second-order cones. Search
// directions use Nesterov-Todd scaling and a Mehrotra predictor-corrector;
// each step factors the quasi-definite KKT matrix with a sparse LDL'.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <limits>

#include <Eigen/SparseCholesky>

#include "ccopf/errors.hpp"
#include "ccopf/solver.hpp"

namespace ccopf {

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal:
      return "optimal";
    case SolveStatus::infeasible:
      return "infeasible";
    case SolveStatus::numerical_failure:
      return "numerical-failure";
  }
  return "numerical-failure";
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

struct Cone {
  ConeType type;
  Eigen::Index offset;
  Eigen::Index dim;
};

double inf_norm(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// Nesterov-Todd scaling for one cone: W z = W^{-1} s = lambda.
struct ConeScaling {
  Vec w;              // non-negative: diagonal of W
  Eigen::MatrixXd W;  // second-order: dense symmetric W
  Eigen::MatrixXd Winv;
  Vec lambda;
};

class Problem {
 public:
  Problem(const ConicProgram& prog) : P(prog.P), q(prog.q), A(prog.A), b(prog.b) {
    Eigen::Index off = 0;
    for (const auto& c : prog.cones) {
      cones.push_back({c.type, off, c.dim});
      off += c.dim;
    }
    if (off != A.rows()) throw ValidationError("cone dimensions do not match constraint rows");
    n = A.cols();
    m = A.rows();
    D = Vec::Ones(n);
    E = Vec::Ones(m);
    for (const auto& c : cones) {
      if (c.type == ConeType::nonnegative) degree += static_cast<double>(c.dim);
      if (c.type == ConeType::second_order) degree += 1.0;
    }
  }

  // Ruiz equilibration of [P A'; A 0], keeping each second-order cone's rows
  // on a common scale, followed by a cost scaling.
  void equilibrate() {
    for (int iter = 0; iter < 15; ++iter) {
      Vec col = Vec::Zero(n);
      Vec row = Vec::Zero(m);
      for (int k = 0; k < P.outerSize(); ++k) {
        for (SpMat::InnerIterator it(P, k); it; ++it) col[it.col()] = std::max(col[it.col()], std::abs(it.value()));
      }
      for (int k = 0; k < A.outerSize(); ++k) {
        for (SpMat::InnerIterator it(A, k); it; ++it) {
          col[it.col()] = std::max(col[it.col()], std::abs(it.value()));
          row[it.row()] = std::max(row[it.row()], std::abs(it.value()));
        }
      }
      for (const auto& c : cones) {
        if (c.type == ConeType::second_order) row.segment(c.offset, c.dim).setConstant(row.segment(c.offset, c.dim).maxCoeff());
      }
      auto factor = [](double v) { return v > 0.0 ? std::clamp(1.0 / std::sqrt(v), 1e-4, 1e4) : 1.0; };
      // The accumulated scaling stays within [1e-4, 1e4] as well.
      Vec d = (D.cwiseProduct(col.unaryExpr(factor))).cwiseMax(1e-4).cwiseMin(1e4).cwiseQuotient(D);
      Vec e = (E.cwiseProduct(row.unaryExpr(factor))).cwiseMax(1e-4).cwiseMin(1e4).cwiseQuotient(E);
      P = d.asDiagonal() * P * d.asDiagonal();
      A = e.asDiagonal() * A * d.asDiagonal();
      D = D.cwiseProduct(d);
      E = E.cwiseProduct(e);
    }
    q = D.cwiseProduct(q);
    b = E.cwiseProduct(b);
    Vec col = Vec::Zero(n);
    for (int k = 0; k < P.outerSize(); ++k) {
      for (SpMat::InnerIterator it(P, k); it; ++it) col[it.col()] = std::max(col[it.col()], std::abs(it.value()));
    }
    const double scale = std::max(col.mean(), inf_norm(q));
    cost = scale > 0.0 ? std::clamp(1.0 / scale, 1e-4, 1e4) : 1.0;
    P *= cost;
    q *= cost;
  }

  SpMat P;
  Vec q;
  SpMat A;
  Vec b;
  std::vector<Cone> cones;
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  double degree = 0.0;
  Vec D;
  Vec E;
  double cost = 1.0;
};

// ---- cone algebra ------------------------------------------------------

double soc_residual(const Vec& u, Eigen::Index off, Eigen::Index dim) {
  return u[off] - u.segment(off + 1, dim - 1).norm();
}

// Smallest "eigenvalue" of u over all non-zero cones.
double min_cone_margin(const std::vector<Cone>& cones, const Vec& u) {
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& c : cones) {
    if (c.type == ConeType::nonnegative) margin = std::min(margin, u.segment(c.offset, c.dim).minCoeff());
    if (c.type == ConeType::second_order) margin = std::min(margin, soc_residual(u, c.offset, c.dim));
  }
  return margin;
}

void add_identity(const std::vector<Cone>& cones, Vec& u, double a) {
  for (const auto& c : cones) {
    if (c.type == ConeType::nonnegative) u.segment(c.offset, c.dim).array() += a;
    if (c.type == ConeType::second_order) u[c.offset] += a;
  }
}

void shift_to_interior(const std::vector<Cone>& cones, Vec& u) {
  const double margin = min_cone_margin(cones, u);
  if (!std::isfinite(margin)) return;
  if (margin < 1e-8 * std::max(1.0, inf_norm(u)) + 1.0) add_identity(cones, u, 1.0 - margin);
}

// Largest step a in (0, inf] keeping u + a d inside the cone.
double max_step(const std::vector<Cone>& cones, const Vec& u, const Vec& d) {
  double step = std::numeric_limits<double>::infinity();
  for (const auto& c : cones) {
    if (c.type == ConeType::nonnegative) {
      for (Eigen::Index i = c.offset; i < c.offset + c.dim; ++i) {
        if (d[i] < 0.0) step = std::min(step, -u[i] / d[i]);
      }
    } else if (c.type == ConeType::second_order) {
      const auto u1 = u.segment(c.offset + 1, c.dim - 1);
      const auto d1 = d.segment(c.offset + 1, c.dim - 1);
      const double u0 = u[c.offset];
      const double d0 = d[c.offset];
      const double qa = d0 * d0 - d1.squaredNorm();
      const double qb = 2.0 * (u0 * d0 - u1.dot(d1));
      const double qc = std::max(0.0, u0 * u0 - u1.squaredNorm());
      double root = std::numeric_limits<double>::infinity();
      const double scale = std::max({std::abs(qa), std::abs(qb), qc, 1e-300});
      if (std::abs(qa) <= 1e-14 * scale) {
        if (qb < 0.0) root = -qc / qb;
      } else {
        const double disc = qb * qb - 4.0 * qa * qc;
        if (disc >= 0.0) {
          const double sq = std::sqrt(disc);
          const double qq = -0.5 * (qb + (qb >= 0.0 ? sq : -sq));
          for (double r : {qq / qa, qq != 0.0 ? qc / qq : std::numeric_limits<double>::infinity()}) {
            if (r > 0.0) root = std::min(root, r);
          }
        }
      }
      if (d0 < 0.0) root = std::min(root, -u0 / d0);
      step = std::min(step, root);
    }
  }
  return step;
}

// Jordan product u o v on a cone segment, written into out.
void jordan_product(const Cone& c, const Vec& u, const Vec& v, Vec& out) {
  if (c.type == ConeType::nonnegative) {
    out.segment(c.offset, c.dim) = u.segment(c.offset, c.dim).cwiseProduct(v.segment(c.offset, c.dim));
  } else if (c.type == ConeType::second_order) {
    const double u0 = u[c.offset];
    const double v0 = v[c.offset];
    const auto u1 = u.segment(c.offset + 1, c.dim - 1);
    const auto v1 = v.segment(c.offset + 1, c.dim - 1);
    out[c.offset] = u.segment(c.offset, c.dim).dot(v.segment(c.offset, c.dim));
    out.segment(c.offset + 1, c.dim - 1) = u0 * v1 + v0 * u1;
  } else {
    out.segment(c.offset, c.dim).setZero();
  }
}

// Solves lambda o x = v for x on a cone segment.
void jordan_divide(const Cone& c, const Vec& lambda, const Vec& v, Vec& out) {
  if (c.type == ConeType::nonnegative) {
    out.segment(c.offset, c.dim) = v.segment(c.offset, c.dim).cwiseQuotient(lambda.segment(c.offset, c.dim));
  } else if (c.type == ConeType::second_order) {
    const double l0 = lambda[c.offset];
    const auto l1 = lambda.segment(c.offset + 1, c.dim - 1);
    const double v0 = v[c.offset];
    const auto v1 = v.segment(c.offset + 1, c.dim - 1);
    const double det = l0 * l0 - l1.squaredNorm();
    const double x0 = (l0 * v0 - l1.dot(v1)) / det;
    out[c.offset] = x0;
    out.segment(c.offset + 1, c.dim - 1) = (v1 - x0 * l1) / l0;
  } else {
    out.segment(c.offset, c.dim).setZero();
  }
}

ConeScaling nt_scaling(const Cone& c, const Vec& s, const Vec& z) {
  ConeScaling sc;
  if (c.type == ConeType::nonnegative) {
    const auto ss = s.segment(c.offset, c.dim).array();
    const auto zz = z.segment(c.offset, c.dim).array();
    sc.w = (ss / zz).sqrt().matrix();
    sc.lambda = (ss * zz).sqrt().matrix();
  } else if (c.type == ConeType::second_order) {
    const auto d = c.dim;
    Vec sv = s.segment(c.offset, d);
    Vec zv = z.segment(c.offset, d);
    const double js = std::max(sv[0] * sv[0] - sv.tail(d - 1).squaredNorm(), 1e-300);
    const double jz = std::max(zv[0] * zv[0] - zv.tail(d - 1).squaredNorm(), 1e-300);
    Vec sb = sv / std::sqrt(js);
    Vec zb = zv / std::sqrt(jz);
    const double gamma = std::sqrt(0.5 * (1.0 + sb.dot(zb)));
    Vec wb(d);
    wb[0] = (sb[0] + zb[0]) / (2.0 * gamma);
    wb.tail(d - 1) = (sb.tail(d - 1) - zb.tail(d - 1)) / (2.0 * gamma);
    const double eta = std::pow(js / jz, 0.25);
    Eigen::MatrixXd Wb(d, d);
    Wb(0, 0) = wb[0];
    Wb.block(0, 1, 1, d - 1) = wb.tail(d - 1).transpose();
    Wb.block(1, 0, d - 1, 1) = wb.tail(d - 1);
    Wb.block(1, 1, d - 1, d - 1) = Eigen::MatrixXd::Identity(d - 1, d - 1) +
                                   wb.tail(d - 1) * wb.tail(d - 1).transpose() / (1.0 + wb[0]);
    // The inverse of the hyperbolic reflection is J Wb J.
    Eigen::MatrixXd Wbinv = Wb;
    Wbinv.block(0, 1, 1, d - 1) *= -1.0;
    Wbinv.block(1, 0, d - 1, 1) *= -1.0;
    sc.W = eta * Wb;
    sc.Winv = Wbinv / eta;
    sc.lambda = sc.W * zv;
  }
  return sc;
}

// ---- KKT system ----------------------------------------------------------

class Kkt {
 public:
  Kkt(const Problem& pb, double reg) : pb_(pb), reg_(reg) {
    const auto n = pb.n;
    const auto N = pb.n + pb.m;
    // Index positions of every stored entry once, so later updates only
    // rewrite the values array.
    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < pb.P.outerSize(); ++k) {
      for (SpMat::InnerIterator it(pb.P, k); it; ++it) {
        if (it.row() <= it.col()) trip.emplace_back(it.row(), it.col(), 0.0);
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) trip.emplace_back(i, i, 0.0);
    for (int k = 0; k < pb.A.outerSize(); ++k) {
      for (SpMat::InnerIterator it(pb.A, k); it; ++it) trip.emplace_back(it.col(), n + it.row(), 0.0);
    }
    for (const auto& c : pb.cones) {
      if (c.type == ConeType::second_order) {
        for (Eigen::Index i = 0; i < c.dim; ++i) {
          for (Eigen::Index j = i; j < c.dim; ++j) trip.emplace_back(n + c.offset + i, n + c.offset + j, 0.0);
        }
      } else {
        for (Eigen::Index i = 0; i < c.dim; ++i) trip.emplace_back(n + c.offset + i, n + c.offset + i, 0.0);
      }
    }
    K_.resize(N, N);
    K_.setFromTriplets(trip.begin(), trip.end());
    K_.makeCompressed();
    ldlt_.analyzePattern(K_);
  }

  // Writes P + reg I, A' and -(W'W) - reg I into the stored pattern.
  bool factor(const std::vector<ConeScaling>& scaling) {
    const auto n = pb_.n;
    for (int k = 0; k < K_.outerSize(); ++k) {
      for (SpMat::InnerIterator it(K_, k); it; ++it) it.valueRef() = 0.0;
    }
    for (int k = 0; k < pb_.P.outerSize(); ++k) {
      for (SpMat::InnerIterator it(pb_.P, k); it; ++it) {
        if (it.row() <= it.col()) K_.coeffRef(it.row(), it.col()) += it.value();
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) K_.coeffRef(i, i) += reg_;
    for (int k = 0; k < pb_.A.outerSize(); ++k) {
      for (SpMat::InnerIterator it(pb_.A, k); it; ++it) K_.coeffRef(it.col(), n + it.row()) = it.value();
    }
    for (std::size_t ci = 0; ci < pb_.cones.size(); ++ci) {
      const auto& c = pb_.cones[ci];
      const auto base = n + c.offset;
      if (c.type == ConeType::zero) {
        for (Eigen::Index i = 0; i < c.dim; ++i) K_.coeffRef(base + i, base + i) = -reg_;
      } else if (c.type == ConeType::nonnegative) {
        for (Eigen::Index i = 0; i < c.dim; ++i) {
          K_.coeffRef(base + i, base + i) = -scaling[ci].w[i] * scaling[ci].w[i] - reg_;
        }
      } else {
        Eigen::MatrixXd W2 = scaling[ci].W * scaling[ci].W;
        for (Eigen::Index i = 0; i < c.dim; ++i) {
          for (Eigen::Index j = i; j < c.dim; ++j) K_.coeffRef(base + i, base + j) = -W2(i, j) - (i == j ? reg_ : 0.0);
        }
      }
    }
    scaling_ = &scaling;
    ldlt_.factorize(K_);
    return ldlt_.info() == Eigen::Success;
  }

  // Solves the unregularized system with iterative refinement.
  Vec solve(const Vec& rhs, int refinement) const {
    Vec x = ldlt_.solve(rhs);
    for (int k = 0; k < refinement; ++k) {
      Vec r = rhs - apply(x);
      if (inf_norm(r) <= 1e-14 * std::max(1.0, inf_norm(rhs))) break;
      x += ldlt_.solve(r);
    }
    return x;
  }

 private:
  Vec apply(const Vec& v) const {
    const auto n = pb_.n;
    const auto m = pb_.m;
    Vec out(n + m);
    const auto vx = v.head(n);
    const auto vz = v.tail(m);
    out.head(n) = pb_.P * vx + pb_.A.transpose() * vz;
    Vec lower = pb_.A * vx;
    for (std::size_t ci = 0; ci < pb_.cones.size(); ++ci) {
      const auto& c = pb_.cones[ci];
      if (c.type == ConeType::nonnegative) {
        const auto& w = (*scaling_)[ci].w;
        lower.segment(c.offset, c.dim).array() -= w.array().square() * vz.segment(c.offset, c.dim).array();
      } else if (c.type == ConeType::second_order) {
        const auto& W = (*scaling_)[ci].W;
        lower.segment(c.offset, c.dim) -= W * (W * vz.segment(c.offset, c.dim));
      }
    }
    out.tail(m) = lower;
    return out;
  }

  const Problem& pb_;
  double reg_;
  SpMat K_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Upper, Eigen::AMDOrdering<int>> ldlt_;
  const std::vector<ConeScaling>* scaling_ = nullptr;
};

// ---- the method ---------------------------------------------------------

struct Iterate {
  Vec x, z, s;
  double tau = 1.0;
  double kappa = 1.0;
};

struct Direction {
  Vec dx, dz, ds;
  double dtau = 0.0;
  double dkappa = 0.0;
};

class HsdeSolver final : public ConicSolver {
 public:
  std::string name() const override { return "ipm"; }

  SolverResult solve(const ConicProgram& program, const SolverSettings& settings) const override {
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

    Problem pb(program);
    if (settings.equilibrate) pb.equilibrate();
    const auto n = pb.n;
    const auto m = pb.m;

    Kkt kkt(pb, settings.static_regularization);
    std::vector<ConeScaling> scaling(pb.cones.size());

    // Initial point from the least-squares style system with W = I.
    for (std::size_t ci = 0; ci < pb.cones.size(); ++ci) {
      const auto& c = pb.cones[ci];
      if (c.type == ConeType::nonnegative) scaling[ci].w = Vec::Ones(c.dim);
      if (c.type == ConeType::second_order) {
        scaling[ci].W = Eigen::MatrixXd::Identity(c.dim, c.dim);
        scaling[ci].Winv = scaling[ci].W;
      }
    }
    SolverResult result;
    if (!kkt.factor(scaling)) {
      result.message = "initial KKT factorization failed";
      return result;
    }
    Iterate it;
    {
      Vec rhs(n + m);
      rhs.head(n) = -pb.q;
      rhs.tail(m) = pb.b;
      Vec sol = kkt.solve(rhs, settings.refinement_steps);
      it.x = sol.head(n);
      it.z = sol.tail(m);
      it.s = -it.z;
      for (const auto& c : pb.cones) {
        if (c.type == ConeType::zero) it.s.segment(c.offset, c.dim).setZero();
      }
      shift_to_interior(pb.cones, it.s);
      shift_to_interior(pb.cones, it.z);
    }

    auto cone_dot = [&](const Vec& a, const Vec& bb) {
      double v = 0.0;
      for (const auto& c : pb.cones) {
        if (c.type != ConeType::zero) v += a.segment(c.offset, c.dim).dot(bb.segment(c.offset, c.dim));
      }
      return v;
    };

    double last_step = 1.0;
    int small_steps = 0;
    for (int iter = 0;; ++iter) {
      result.iterations = iter;
      const Vec Px = pb.P * it.x;
      const double xPx = it.x.dot(Px);
      const Vec rx = Px + pb.A.transpose() * it.z + pb.q * it.tau;
      const Vec rz = pb.A * it.x + it.s - pb.b * it.tau;
      const double rtau = pb.q.dot(it.x) + pb.b.dot(it.z) + it.kappa + xPx / it.tau;
      const double mu = (cone_dot(it.s, it.z) + it.tau * it.kappa) / (pb.degree + 1.0);

      // Convergence tests on the de-homogenized point.
      const Vec xs = it.x / it.tau;
      const Vec zs = it.z / it.tau;
      const Vec ss = it.s / it.tau;
      const double pres = inf_norm(rz) / it.tau;
      const double dres = inf_norm(rx) / it.tau;
      const double pres_scale = std::max(1.0, inf_norm(pb.b) + inf_norm(xs) + inf_norm(ss));
      const double dres_scale = std::max(1.0, inf_norm(pb.q) + inf_norm(xs) + inf_norm(zs));
      const double quad = 0.5 * xPx / (it.tau * it.tau);
      const double pobj = quad + pb.q.dot(xs);
      const double dobj = -quad - pb.b.dot(zs);
      const double gap = std::abs(pobj - dobj);
      const double gap_scale = std::max(1.0, std::min(std::abs(pobj), std::abs(dobj)));
      result.primal_residual = pres / pres_scale;
      result.dual_residual = dres / dres_scale;
      result.gap = gap;

      auto converged = [&](double tol_feas, double tol_abs, double tol_rel) {
        return pres <= tol_feas * pres_scale && dres <= tol_feas * dres_scale &&
               (gap <= tol_abs || gap <= tol_rel * gap_scale);
      };
      const double btz = pb.b.dot(it.z);
      const double qtx = pb.q.dot(it.x);
      auto primal_infeasible = [&](double tol) {
        return btz < 0.0 && inf_norm(pb.A.transpose() * it.z) <= tol * -btz;
      };
      auto dual_infeasible = [&](double tol) {
        return qtx < 0.0 && inf_norm(Px) <= tol * -qtx && inf_norm(pb.A * it.x + it.s) <= tol * -qtx;
      };

      if (settings.verbose) {
        std::cerr << "ipm " << iter << " pobj " << pobj << " dobj " << dobj << " pres " << pres / pres_scale
                  << " dres " << dres / dres_scale << " gap " << gap << " tau " << it.tau << " kappa "
                  << it.kappa << " mu " << mu << " step " << last_step << '\n';
      }

      if (!std::isfinite(mu) || !std::isfinite(pres) || !std::isfinite(dres)) {
        result.status = SolveStatus::numerical_failure;
        result.message = "non-finite iterate";
        break;
      }
      if (converged(settings.tol_feasibility, settings.tol_gap_abs, settings.tol_gap_rel)) {
        result.status = SolveStatus::optimal;
        result.message = "solved";
        break;
      }
      if (primal_infeasible(settings.tol_infeasibility)) {
        result.status = SolveStatus::infeasible;
        result.message = "primal infeasible";
        break;
      }
      if (dual_infeasible(settings.tol_infeasibility)) {
        result.status = SolveStatus::numerical_failure;
        result.message = "dual infeasible (unbounded objective)";
        break;
      }
      const bool out_of_budget = iter >= settings.max_iterations || elapsed() > settings.time_limit;
      if (out_of_budget || small_steps >= 5) {
        if (converged(settings.tol_reduced, settings.tol_reduced, settings.tol_reduced)) {
          result.status = SolveStatus::optimal;
          result.reduced_accuracy = true;
          result.message = "solved to reduced accuracy";
        } else if (primal_infeasible(settings.tol_reduced)) {
          result.status = SolveStatus::infeasible;
          result.reduced_accuracy = true;
          result.message = "primal infeasible (reduced accuracy)";
        } else {
          result.status = SolveStatus::numerical_failure;
          result.message = out_of_budget ? "iteration or time limit reached" : "step length collapsed";
        }
        break;
      }

      for (std::size_t ci = 0; ci < pb.cones.size(); ++ci) scaling[ci] = nt_scaling(pb.cones[ci], it.s, it.z);
      if (!kkt.factor(scaling)) {
        result.status = SolveStatus::numerical_failure;
        result.message = "KKT factorization failed";
        break;
      }
      Vec lambda = Vec::Zero(m);
      for (std::size_t ci = 0; ci < pb.cones.size(); ++ci) {
        const auto& c = pb.cones[ci];
        if (c.type != ConeType::zero) lambda.segment(c.offset, c.dim) = scaling[ci].lambda;
      }

      // Constant second system K [x2; z2] = [-q; b].
      Vec rhs2(n + m);
      rhs2.head(n) = -pb.q;
      rhs2.tail(m) = pb.b;
      const Vec sol2 = kkt.solve(rhs2, settings.refinement_steps);
      const Vec x2 = sol2.head(n);
      const Vec z2 = sol2.tail(m);
      const Vec xi = pb.q + 2.0 * Px / it.tau;
      const double denom = xi.dot(x2) + pb.b.dot(z2) - xPx / (it.tau * it.tau) - it.kappa / it.tau;

      auto apply_W = [&](const Vec& v, bool inverse) {
        Vec out = Vec::Zero(m);
        for (std::size_t ci = 0; ci < pb.cones.size(); ++ci) {
          const auto& c = pb.cones[ci];
          if (c.type == ConeType::nonnegative) {
            out.segment(c.offset, c.dim) = inverse ? Vec(v.segment(c.offset, c.dim).cwiseQuotient(scaling[ci].w))
                                                   : Vec(v.segment(c.offset, c.dim).cwiseProduct(scaling[ci].w));
          } else if (c.type == ConeType::second_order) {
            out.segment(c.offset, c.dim) = (inverse ? scaling[ci].Winv : scaling[ci].W) * v.segment(c.offset, c.dim);
          }
        }
        return out;
      };

      auto direction = [&](double eta, const Vec& ds, double dkappa) {
        Vec ldiv = Vec::Zero(m);
        for (const auto& c : pb.cones) jordan_divide(c, lambda, ds, ldiv);
        const Vec w_ldiv = apply_W(ldiv, false);
        Vec rhs(n + m);
        rhs.head(n) = -eta * rx;
        rhs.tail(m) = -eta * rz + w_ldiv;
        const Vec sol = kkt.solve(rhs, settings.refinement_steps);
        Direction d;
        const Vec x1 = sol.head(n);
        const Vec z1 = sol.tail(m);
        d.dtau = (-eta * rtau + dkappa / it.tau - xi.dot(x1) - pb.b.dot(z1)) / denom;
        d.dx = x1 + d.dtau * x2;
        d.dz = z1 + d.dtau * z2;
        d.ds = -w_ldiv - apply_W(apply_W(d.dz, false), false);
        for (const auto& c : pb.cones) {
          if (c.type == ConeType::zero) d.ds.segment(c.offset, c.dim).setZero();
        }
        d.dkappa = (-dkappa - it.kappa * d.dtau) / it.tau;
        return d;
      };

      auto step_to_boundary = [&](const Direction& d) {
        double a = std::min(max_step(pb.cones, it.s, d.ds), max_step(pb.cones, it.z, d.dz));
        if (d.dtau < 0.0) a = std::min(a, -it.tau / d.dtau);
        if (d.dkappa < 0.0) a = std::min(a, -it.kappa / d.dkappa);
        return a;
      };

      // Predictor.
      Vec lam_sq = Vec::Zero(m);
      for (const auto& c : pb.cones) jordan_product(c, lambda, lambda, lam_sq);
      const Direction aff = direction(1.0, lam_sq, it.tau * it.kappa);
      const double alpha_aff = std::min(1.0, step_to_boundary(aff));
      const double sigma = std::pow(1.0 - alpha_aff, 3);

      // Corrector with the second-order term.
      const Vec ws = apply_W(aff.ds, true);
      const Vec wz = apply_W(aff.dz, false);
      Vec cross = Vec::Zero(m);
      for (const auto& c : pb.cones) jordan_product(c, ws, wz, cross);
      Vec ds = lam_sq + cross;
      add_identity(pb.cones, ds, -sigma * mu);
      const double dkappa = it.tau * it.kappa + aff.dtau * aff.dkappa - sigma * mu;
      const Direction dir = direction(1.0 - sigma, ds, dkappa);
      const double alpha = std::min(1.0, 0.99 * step_to_boundary(dir));
      last_step = alpha;
      small_steps = alpha < 1e-8 ? small_steps + 1 : 0;

      it.x += alpha * dir.dx;
      it.z += alpha * dir.dz;
      it.s += alpha * dir.ds;
      it.tau += alpha * dir.dtau;
      it.kappa += alpha * dir.dkappa;
    }

    // Undo the scaling. Infeasibility certificates are returned unnormalized.
    const double t = result.status == SolveStatus::infeasible ? 1.0 : it.tau;
    result.x = pb.D.cwiseProduct(it.x) / t;
    result.s = it.s.cwiseQuotient(pb.E) / t;
    result.z = pb.E.cwiseProduct(it.z) / (pb.cost * t);
    result.objective = result.status == SolveStatus::optimal ? program.objective(result.x)
                                                              : std::numeric_limits<double>::quiet_NaN();
    result.solve_time = elapsed();
    return result;
  }
};

}  // namespace

std::vector<std::string> available_solvers() { return {"ipm"}; }

std::unique_ptr<ConicSolver> make_solver(const std::string& name) {
  if (name == "ipm" || name == "hsde") return std::make_unique<HsdeSolver>();
  throw ValidationError("unknown solver backend '" + name + "'");
}

std::string default_solver_name() {
  const char* env = std::getenv("CCOPF_SOLVER");
  return env && *env ? std::string(env) : std::string("ipm");
}

}  // namespace ccopf
