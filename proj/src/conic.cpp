#include "ccopf/conic.hpp"

#include <algorithm>
#include <cmath>

#include "ccopf/errors.hpp"

namespace ccopf {

int ConicProgram::rows_of(ConeType t) const {
  int n = 0;
  for (const auto& c : cones) {
    if (c.type == t) n += c.dim;
  }
  return n;
}

int ConicProgram::count_of(ConeType t) const {
  return static_cast<int>(std::count_if(cones.begin(), cones.end(), [t](const ConeBlock& c) { return c.type == t; }));
}

double ConicProgram::objective(const Eigen::VectorXd& x) const {
  return 0.5 * x.dot(P * x) + q.dot(x) + constant;
}

int ProgramBuilder::add_variable(std::string name) {
  names_.push_back(std::move(name));
  return static_cast<int>(names_.size()) - 1;
}

void ProgramBuilder::add_equality(Affine expr, std::string label) { eq_.push_back({std::move(expr), std::move(label)}); }

void ProgramBuilder::add_less_equal(Affine expr, std::string label) {
  for (auto& t : expr.terms) t.coeff = -t.coeff;
  expr.constant = -expr.constant;
  nonneg_.push_back({std::move(expr), std::move(label)});
}

void ProgramBuilder::add_greater_equal(Affine expr, std::string label) {
  nonneg_.push_back({std::move(expr), std::move(label)});
}

void ProgramBuilder::add_second_order(std::vector<Affine> entries, std::string label) {
  if (entries.size() < 2) throw ValidationError("second-order cone needs at least two entries");
  std::vector<Row> block;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    block.push_back({std::move(entries[i]), label + "[" + std::to_string(i) + "]"});
  }
  soc_.push_back(std::move(block));
}

void ProgramBuilder::add_quadratic(int i, int j, double coeff) {
  p_.emplace_back(i, j, coeff);
  if (i != j) p_.emplace_back(j, i, coeff);
}

void ProgramBuilder::add_linear(int i, double coeff) { q_.emplace_back(i, coeff); }

ConicProgram ProgramBuilder::build() const {
  ConicProgram prog;
  const int n = num_variables();
  prog.variable_names = names_;
  prog.P.resize(n, n);
  prog.P.setFromTriplets(p_.begin(), p_.end());
  prog.q = Eigen::VectorXd::Zero(n);
  for (auto [i, c] : q_) prog.q[i] += c;
  prog.constant = constant_;

  std::vector<const Row*> rows;
  for (const auto& r : eq_) rows.push_back(&r);
  for (const auto& r : nonneg_) rows.push_back(&r);
  for (const auto& blk : soc_) {
    for (const auto& r : blk) rows.push_back(&r);
  }
  if (!eq_.empty()) prog.cones.push_back({ConeType::zero, static_cast<int>(eq_.size())});
  if (!nonneg_.empty()) prog.cones.push_back({ConeType::nonnegative, static_cast<int>(nonneg_.size())});
  for (const auto& blk : soc_) prog.cones.push_back({ConeType::second_order, static_cast<int>(blk.size())});

  std::vector<Eigen::Triplet<double>> trip;
  prog.b.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    // s = a'x + c  <=>  (-a)'x + s = c
    for (const auto& t : rows[i]->expr.terms) {
      if (t.var < 0 || t.var >= n) throw ValidationError("constraint references unknown variable");
      if (t.coeff != 0.0) trip.emplace_back(static_cast<int>(i), t.var, -t.coeff);
    }
    prog.b[static_cast<Eigen::Index>(i)] = rows[i]->expr.constant;
    prog.row_labels.push_back(rows[i]->label);
  }
  prog.A.resize(static_cast<Eigen::Index>(rows.size()), n);
  prog.A.setFromTriplets(trip.begin(), trip.end());
  prog.A.makeCompressed();
  prog.P.makeCompressed();
  return prog;
}

FeasibilityCheck check_feasibility(const ConicProgram& program, const Eigen::VectorXd& x) {
  FeasibilityCheck out;
  const Eigen::VectorXd slack = program.b - program.A * x;
  Eigen::VectorXd row_scale = Eigen::VectorXd::Ones(program.num_rows());
  const Eigen::SparseMatrix<double, Eigen::RowMajor> rowmajor = program.A;
  for (Eigen::Index i = 0; i < rowmajor.rows(); ++i) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rowmajor, i); it; ++it) {
      row_scale[i] = std::max(row_scale[i], std::abs(it.value()));
    }
  }
  Eigen::Index r = 0;
  for (const auto& cone : program.cones) {
    switch (cone.type) {
      case ConeType::zero:
        for (int k = 0; k < cone.dim; ++k, ++r) {
          out.max_equality_violation = std::max(out.max_equality_violation, std::abs(slack[r]) / row_scale[r]);
        }
        break;
      case ConeType::nonnegative:
        for (int k = 0; k < cone.dim; ++k, ++r) {
          out.max_cone_violation = std::max(out.max_cone_violation, std::max(0.0, -slack[r]) / row_scale[r]);
        }
        break;
      case ConeType::second_order: {
        const double scale = row_scale.segment(r, cone.dim).maxCoeff();
        const double gap = slack.segment(r + 1, cone.dim - 1).norm() - slack[r];
        out.max_cone_violation = std::max(out.max_cone_violation, std::max(0.0, gap) / scale);
        r += cone.dim;
        break;
      }
    }
  }
  return out;
}

namespace {

std::string cone_name(ConeType t) {
  switch (t) {
    case ConeType::zero:
      return "zero";
    case ConeType::nonnegative:
      return "nonnegative";
    case ConeType::second_order:
      return "second_order";
  }
  return "zero";
}

ConeType cone_from_name(const std::string& s) {
  if (s == "zero") return ConeType::zero;
  if (s == "nonnegative") return ConeType::nonnegative;
  if (s == "second_order") return ConeType::second_order;
  throw ParseError("unknown cone type '" + s + "'");
}

}  // namespace

nlohmann::json program_to_json(const ConicProgram& program) {
  nlohmann::json j;
  j["format"] = "ccopf-conic-v1";
  j["variables"] = program.variable_names;
  auto pj = nlohmann::json::array();
  for (int k = 0; k < program.P.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(program.P, k); it; ++it) {
      if (it.row() <= it.col()) pj.push_back({it.row(), it.col(), it.value()});
    }
  }
  j["objective"] = {{"P_upper", pj},
                    {"q", std::vector<double>(program.q.data(), program.q.data() + program.q.size())},
                    {"constant", program.constant}};
  const Eigen::SparseMatrix<double, Eigen::RowMajor> rowmajor = program.A;
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < rowmajor.rows(); ++i) {
    auto coeffs = nlohmann::json::array();
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rowmajor, i); it; ++it) {
      coeffs.push_back({it.col(), it.value()});
    }
    rows.push_back({{"label", program.row_labels.at(i)}, {"a", coeffs}, {"b", program.b[i]}});
  }
  j["rows"] = rows;
  auto cones = nlohmann::json::array();
  for (const auto& c : program.cones) cones.push_back({{"type", cone_name(c.type)}, {"dim", c.dim}});
  j["cones"] = cones;
  return j;
}

ConicProgram program_from_json(const nlohmann::json& j) {
  try {
    ConicProgram prog;
    prog.variable_names = j.at("variables").get<std::vector<std::string>>();
    const auto n = static_cast<Eigen::Index>(prog.variable_names.size());
    std::vector<Eigen::Triplet<double>> pt;
    for (const auto& e : j.at("objective").at("P_upper")) {
      const int r = e.at(0).get<int>();
      const int c = e.at(1).get<int>();
      const double v = e.at(2).get<double>();
      pt.emplace_back(r, c, v);
      if (r != c) pt.emplace_back(c, r, v);
    }
    prog.P.resize(n, n);
    prog.P.setFromTriplets(pt.begin(), pt.end());
    auto q = j.at("objective").at("q").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(q.size()) != n) throw ParseError("program: q has wrong length");
    prog.q = Eigen::Map<Eigen::VectorXd>(q.data(), n);
    prog.constant = j.at("objective").value("constant", 0.0);
    const auto& rows = j.at("rows");
    std::vector<Eigen::Triplet<double>> at;
    prog.b.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (const auto& e : rows[i].at("a")) at.emplace_back(static_cast<int>(i), e.at(0).get<int>(), e.at(1).get<double>());
      prog.b[static_cast<Eigen::Index>(i)] = rows[i].at("b").get<double>();
      prog.row_labels.push_back(rows[i].value("label", std::string()));
    }
    prog.A.resize(static_cast<Eigen::Index>(rows.size()), n);
    prog.A.setFromTriplets(at.begin(), at.end());
    int total = 0;
    for (const auto& c : j.at("cones")) {
      prog.cones.push_back({cone_from_name(c.at("type").get<std::string>()), c.at("dim").get<int>()});
      total += prog.cones.back().dim;
    }
    if (total != prog.num_rows()) throw ParseError("program: cone dimensions do not cover the rows");
    prog.A.makeCompressed();
    prog.P.makeCompressed();
    return prog;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("program: ") + e.what());
  }
}

}  // namespace ccopf
