#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <json.hpp>

namespace ccopf {

enum class ConeType { zero, nonnegative, second_order };

struct ConeBlock {
  ConeType type = ConeType::nonnegative;
  int dim = 0;
};

/// min 1/2 x'Px + q'x + constant  s.t.  Ax + s = b,  s in K.
///
/// Rows of A are ordered cone by cone: all equality rows, then all
/// non-negative rows, then each second-order cone (first entry is the "t"
/// of t >= ||u||).
struct ConicProgram {
  std::vector<std::string> variable_names;
  Eigen::SparseMatrix<double> P;  // symmetric, both triangles stored
  Eigen::VectorXd q;
  double constant = 0.0;
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd b;
  std::vector<ConeBlock> cones;
  std::vector<std::string> row_labels;

  int num_variables() const { return static_cast<int>(variable_names.size()); }
  int num_rows() const { return static_cast<int>(b.size()); }
  int rows_of(ConeType t) const;
  int count_of(ConeType t) const;
  double objective(const Eigen::VectorXd& x) const;
};

/// One term a_j x_j of an affine expression.
struct Term {
  int var;
  double coeff;
};

/// Affine expression sum(terms) + constant.
struct Affine {
  std::vector<Term> terms;
  double constant = 0.0;
};

/// Incremental construction of a ConicProgram. Constraints can be added in any
/// order; build() sorts them into cone order.
class ProgramBuilder {
 public:
  int add_variable(std::string name);
  int num_variables() const { return static_cast<int>(names_.size()); }

  /// expr == 0
  void add_equality(Affine expr, std::string label);
  /// expr <= 0
  void add_less_equal(Affine expr, std::string label);
  /// expr >= 0
  void add_greater_equal(Affine expr, std::string label);
  /// entries[0] >= || entries[1..] ||
  void add_second_order(std::vector<Affine> entries, std::string label);

  /// Adds 1/2 * coeff * x_i x_j to the objective (both orders when i != j).
  void add_quadratic(int i, int j, double coeff);
  void add_linear(int i, double coeff);
  void add_constant(double c) { constant_ += c; }

  ConicProgram build() const;

 private:
  struct Row {
    Affine expr;  // s = expr, s in cone
    std::string label;
  };
  std::vector<std::string> names_;
  std::vector<Row> eq_;
  std::vector<Row> nonneg_;
  std::vector<std::vector<Row>> soc_;
  std::vector<Eigen::Triplet<double>> p_;
  std::vector<std::pair<int, double>> q_;
  double constant_ = 0.0;
};

/// Row-wise residual check of a candidate point on the original data.
/// Each row is divided by max(1, largest |coefficient| in the row).
struct FeasibilityCheck {
  double max_equality_violation = 0.0;
  double max_cone_violation = 0.0;
  bool feasible(double tol) const { return max_equality_violation <= tol && max_cone_violation <= tol; }
};

FeasibilityCheck check_feasibility(const ConicProgram& program, const Eigen::VectorXd& x);

nlohmann::json program_to_json(const ConicProgram& program);
ConicProgram program_from_json(const nlohmann::json& j);

}  // namespace ccopf
