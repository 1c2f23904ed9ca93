#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ccopf/grid.hpp"

namespace ccopf {

/// N x |B| matrix of forecast-error realizations in MW. Columns of buses
/// without wind are identically zero.
struct ScenarioSet {
  Eigen::MatrixXd samples;
  std::string label;
  std::uint64_t seed = 0;

  Eigen::Index size() const { return samples.rows(); }
  Eigen::Index num_buses() const { return samples.cols(); }
};

struct OmegaSamples {
  Eigen::VectorXd values;
};

/// Rows are (Omega, Lambda_l) for one line.
struct EtaSamples {
  std::size_t line = 0;
  Eigen::MatrixXd values;
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

/// Where synthetic errors land and how they are scaled to MW. With per-unit
/// scaling each draw is multiplied by the bus's wind forecast.
struct WindLayout {
  std::size_t num_buses = 0;
  std::vector<std::size_t> buses;
  std::vector<double> scale;
};

WindLayout wind_layout(const GridCase& grid, bool per_unit = true);

ScenarioSet generate_gaussian(Eigen::Index n_samples, const WindLayout& layout, double mu, double sigma,
                              std::uint64_t seed);

/// Inverse-CDF Cauchy draws x0 + gamma * tan(pi (u - 1/2)).
ScenarioSet generate_cauchy(Eigen::Index n_samples, const WindLayout& layout, double x0, double gamma,
                            std::uint64_t seed);

/// Per-unit error table read from CSV, before it is mapped onto buses.
struct IngestResult {
  std::vector<std::string> units;
  Eigen::MatrixXd errors;  // rows x units
  std::size_t rows_read = 0;
  std::size_t rows_dropped = 0;
};

/// Reads one column per unit. With `normalize`, columns come in pairs
/// `<unit>_actual`, `<unit>_forecast` and the error is (actual - forecast) / actual;
/// rows where any actual is zero are dropped.
IngestResult ingest_csv(const std::filesystem::path& path, bool normalize);

/// Maps the i-th unit onto the i-th wind bus of `layout` (ascending bus order).
ScenarioSet scenarios_from_units(const IngestResult& units, const WindLayout& layout, std::string label);

OmegaSamples to_omega(const ScenarioSet& set);
EtaSamples to_eta(const ScenarioSet& set, const PtdfMatrix& ptdf, std::size_t line);

/// Seeded shuffle into floor(f N) training rows and the rest as holdout.
std::pair<ScenarioSet, ScenarioSet> split(const ScenarioSet& set, const SplitSpec& spec);

/// Header row of bus ids, one row per sample.
void write_scenarios_csv(const ScenarioSet& set, const GridCase& grid, const std::filesystem::path& path);
ScenarioSet read_scenarios_csv(const std::filesystem::path& path, const GridCase& grid);

}  // namespace ccopf
