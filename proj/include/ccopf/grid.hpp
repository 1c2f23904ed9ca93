#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace ccopf {

struct Bus {
  int id = 0;
  double load = 0.0;           // MW
  double wind_forecast = 0.0;  // MW, 0 when the bus hosts no wind unit
};

struct Generator {
  int id = 0;
  int bus = 0;
  double p_min = 0.0;  // MW
  double p_max = 0.0;  // MW
  double c1 = 0.0;     // $/MWh
  double c2 = 0.0;     // $/MW^2h
};

struct Line {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double reactance = 0.0;  // per unit
  double f_max = 0.0;      // MW
};

/// A validated DC network. Buses keep the order of the input file; every
/// vector indexed "per bus" in this library uses that order.
class GridCase {
 public:
  GridCase() = default;
  GridCase(std::vector<Bus> buses, std::vector<Line> lines, std::vector<Generator> generators,
           int slack_bus, double base_mva);

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Line>& lines() const { return lines_; }
  const std::vector<Generator>& generators() const { return generators_; }
  int slack_bus() const { return slack_bus_; }
  double base_mva() const { return base_mva_; }

  std::size_t num_buses() const { return buses_.size(); }
  std::size_t num_lines() const { return lines_.size(); }
  std::size_t num_generators() const { return generators_.size(); }

  /// Position of a bus id in buses(); throws ValidationError if unknown.
  std::size_t bus_index(int bus_id) const;
  std::size_t slack_index() const { return bus_index(slack_bus_); }
  /// Position of a line id in lines(); throws ValidationError if unknown.
  std::size_t line_index(int line_id) const;

  /// Positions of buses with a positive wind forecast, ascending.
  std::vector<std::size_t> wind_bus_indices() const;

  Eigen::VectorXd load_vector() const;
  Eigen::VectorXd wind_vector() const;
  double total_load() const;
  double total_wind() const;

 private:
  void validate() const;

  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  std::vector<Generator> generators_;
  int slack_bus_ = 0;
  double base_mva_ = 100.0;
  std::unordered_map<int, std::size_t> bus_pos_;
  std::unordered_map<int, std::size_t> line_pos_;
};

GridCase case_from_json(const nlohmann::json& j);
nlohmann::json case_to_json(const GridCase& grid);

/// Reads and validates a case file. Throws ParseError or ValidationError.
GridCase load_case(const std::filesystem::path& path);

/// Dense |L| x |B| power transfer distribution factors with derived views.
struct PtdfMatrix {
  Eigen::MatrixXd H;          // flows per unit of injection at each bus
  Eigen::MatrixXd gen_rows;   // |L| x |G|, column g is H(:, bus of g)
  Eigen::MatrixXd wind_rows;  // |L| x |B|, H masked to wind buses

  Eigen::VectorXd gen_row(std::size_t line) const { return gen_rows.row(line).transpose(); }
  Eigen::VectorXd wind_row(std::size_t line) const { return wind_rows.row(line).transpose(); }
};

/// Deletes the slack row and column of the susceptance matrix and inverts the
/// rest; the slack column of H is zero.
PtdfMatrix compute_ptdf(const GridCase& grid);

/// gamma_l(alpha) = -(h_gen_l)' alpha for every line.
Eigen::VectorXd flow_response(const PtdfMatrix& ptdf, const Eigen::VectorXd& alpha);

struct NominalState {
  Eigen::VectorXd injections;  // p0 per bus, MW
  Eigen::VectorXd flows;       // f0 per line, MW
};

/// Per-bus sum of generator dispatch.
Eigen::VectorXd generation_by_bus(const GridCase& grid, const Eigen::VectorXd& per_generator);

NominalState nominal_state(const GridCase& grid, const PtdfMatrix& ptdf, const Eigen::VectorXd& pbar);

struct RealizedState {
  Eigen::VectorXd generation;  // p_g(xi)
  Eigen::VectorXd flows;       // f_l(xi)
};

/// Dispatch and flows after the affine recourse absorbs the realization xi.
RealizedState realized_state(const GridCase& grid, const PtdfMatrix& ptdf, const Eigen::VectorXd& pbar,
                             const Eigen::VectorXd& alpha, const Eigen::VectorXd& xi);

/// Voltage angles (radians, slack = 0) for a balanced MW injection vector.
Eigen::VectorXd recover_angles(const GridCase& grid, const Eigen::VectorXd& injections);

/// Line flows in MW implied by a vector of voltage angles.
Eigen::VectorXd flows_from_angles(const GridCase& grid, const Eigen::VectorXd& angles);

}  // namespace ccopf
