#include "ccopf/scenarios.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "ccopf/errors.hpp"

namespace ccopf {

WindLayout wind_layout(const GridCase& grid, bool per_unit) {
  WindLayout layout;
  layout.num_buses = grid.num_buses();
  layout.buses = grid.wind_bus_indices();
  for (auto i : layout.buses) layout.scale.push_back(per_unit ? grid.buses()[i].wind_forecast : 1.0);
  return layout;
}

namespace {

// Uniform on the open interval (0, 1) from 53 random bits.
double open_uniform(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

template <class Draw>
ScenarioSet generate(Eigen::Index n, const WindLayout& layout, std::uint64_t seed, Draw draw) {
  ScenarioSet set;
  set.seed = seed;
  set.samples = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(layout.num_buses));
  std::mt19937_64 rng(seed);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < layout.buses.size(); ++k) {
      set.samples(r, static_cast<Eigen::Index>(layout.buses[k])) = layout.scale[k] * draw(rng);
    }
  }
  return set;
}

}  // namespace

ScenarioSet generate_gaussian(Eigen::Index n_samples, const WindLayout& layout, double mu, double sigma,
                              std::uint64_t seed) {
  if (sigma < 0.0) throw ValidationError("gaussian sigma must be non-negative");
  std::normal_distribution<double> z(0.0, 1.0);
  auto set = generate(n_samples, layout, seed, [&](std::mt19937_64& rng) { return mu + sigma * z(rng); });
  set.label = "synthetic-g";
  return set;
}

ScenarioSet generate_cauchy(Eigen::Index n_samples, const WindLayout& layout, double x0, double gamma,
                            std::uint64_t seed) {
  if (!(gamma > 0.0)) throw ValidationError("cauchy gamma must be positive");
  auto set = generate(n_samples, layout, seed, [&](std::mt19937_64& rng) {
    return x0 + gamma * std::tan(std::numbers::pi * (open_uniform(rng) - 0.5));
  });
  set.label = "synthetic-c";
  return set;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    auto b = cell.find_first_not_of(" \t\r");
    auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& cell, std::size_t row, std::size_t col) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
    throw ParseError("csv row " + std::to_string(row) + " column " + std::to_string(col) + ": '" + cell +
                     "' is not a number");
  }
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open csv file " + path.string());
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = split_csv_line(line);
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw ParseError("csv row " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                       " fields, header has " + std::to_string(table.header.size()));
    }
    std::vector<double> values;
    values.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) values.push_back(parse_number(cells[c], lineno, c + 1));
    table.rows.push_back(std::move(values));
  }
  if (table.header.empty()) throw ParseError("csv file " + path.string() + " is empty");
  return table;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

IngestResult ingest_csv(const std::filesystem::path& path, bool normalize) {
  auto table = read_table(path);
  IngestResult out;
  out.rows_read = table.rows.size();

  if (!normalize) {
    out.units = table.header;
    out.errors.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(table.header.size()));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      for (std::size_t c = 0; c < table.header.size(); ++c) out.errors(r, c) = table.rows[r][c];
    }
    if (out.errors.rows() == 0) throw ValidationError("csv file " + path.string() + " has no data rows");
    return out;
  }

  // Pair up <unit>_actual with <unit>_forecast, in order of the actual columns.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& name = table.header[c];
    if (!ends_with(name, "_actual")) continue;
    const auto unit = name.substr(0, name.size() - 7);
    auto it = std::find(table.header.begin(), table.header.end(), unit + "_forecast");
    if (it == table.header.end()) throw ParseError("csv: no forecast column for unit '" + unit + "'");
    pairs.emplace_back(c, static_cast<std::size_t>(it - table.header.begin()));
    out.units.push_back(unit);
  }
  if (pairs.empty()) throw ParseError("csv: no <unit>_actual columns found");

  std::vector<std::vector<double>> kept;
  for (const auto& row : table.rows) {
    bool zero = false;
    std::vector<double> err;
    for (auto [a, f] : pairs) {
      if (row[a] == 0.0) {
        zero = true;
        break;
      }
      err.push_back((row[a] - row[f]) / row[a]);
    }
    if (zero) {
      ++out.rows_dropped;
      continue;
    }
    kept.push_back(std::move(err));
  }
  if (kept.empty()) throw ValidationError("csv: every row was dropped (zero actual production)");
  out.errors.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t r = 0; r < kept.size(); ++r) {
    for (std::size_t c = 0; c < pairs.size(); ++c) out.errors(r, c) = kept[r][c];
  }
  return out;
}

ScenarioSet scenarios_from_units(const IngestResult& units, const WindLayout& layout, std::string label) {
  if (units.units.size() != layout.buses.size()) {
    throw ValidationError("csv has " + std::to_string(units.units.size()) + " units but the case has " +
                          std::to_string(layout.buses.size()) + " wind buses");
  }
  ScenarioSet set;
  set.label = std::move(label);
  set.samples = Eigen::MatrixXd::Zero(units.errors.rows(), static_cast<Eigen::Index>(layout.num_buses));
  for (std::size_t k = 0; k < layout.buses.size(); ++k) {
    set.samples.col(static_cast<Eigen::Index>(layout.buses[k])) = layout.scale[k] * units.errors.col(k);
  }
  return set;
}

OmegaSamples to_omega(const ScenarioSet& set) { return {set.samples.rowwise().sum()}; }

EtaSamples to_eta(const ScenarioSet& set, const PtdfMatrix& ptdf, std::size_t line) {
  if (line >= static_cast<std::size_t>(ptdf.H.rows())) throw ValidationError("to_eta: line out of range");
  if (set.num_buses() != ptdf.H.cols()) throw ValidationError("to_eta: scenario width differs from bus count");
  EtaSamples eta;
  eta.line = line;
  eta.values.resize(set.size(), 2);
  eta.values.col(0) = to_omega(set).values;
  eta.values.col(1) = set.samples * ptdf.wind_rows.row(static_cast<Eigen::Index>(line)).transpose();
  return eta;
}

std::pair<ScenarioSet, ScenarioSet> split(const ScenarioSet& set, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw ValidationError("train fraction must lie in (0, 1)");
  }
  const auto n = set.size();
  if (n < 2) throw ValidationError("split needs at least two samples");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<Eigen::Index>(std::floor(spec.train_fraction * static_cast<double>(n)));

  auto take = [&](Eigen::Index begin, Eigen::Index end) {
    ScenarioSet out;
    out.label = set.label;
    out.seed = spec.seed;
    out.samples.resize(end - begin, set.num_buses());
    for (Eigen::Index r = begin; r < end; ++r) out.samples.row(r - begin) = set.samples.row(order[r]);
    return out;
  };
  return {take(0, n_train), take(n_train, n)};
}

void write_scenarios_csv(const ScenarioSet& set, const GridCase& grid, const std::filesystem::path& path) {
  if (set.num_buses() != static_cast<Eigen::Index>(grid.num_buses())) {
    throw ValidationError("scenario width differs from bus count");
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  for (std::size_t i = 0; i < grid.num_buses(); ++i) out << (i ? "," : "") << grid.buses()[i].id;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index r = 0; r < set.size(); ++r) {
    for (Eigen::Index c = 0; c < set.num_buses(); ++c) out << (c ? "," : "") << set.samples(r, c);
    out << '\n';
  }
}

ScenarioSet read_scenarios_csv(const std::filesystem::path& path, const GridCase& grid) {
  auto table = read_table(path);
  ScenarioSet set;
  set.label = path.stem().string();
  set.samples = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(table.rows.size()),
                                      static_cast<Eigen::Index>(grid.num_buses()));
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    int id = 0;
    const auto& h = table.header[c];
    auto [ptr, ec] = std::from_chars(h.data(), h.data() + h.size(), id);
    if (ec != std::errc() || ptr != h.data() + h.size()) throw ParseError("scenario header '" + h + "' is not a bus id");
    const auto col = static_cast<Eigen::Index>(grid.bus_index(id));
    for (std::size_t r = 0; r < table.rows.size(); ++r) set.samples(r, col) = table.rows[r][c];
  }
  return set;
}

}  // namespace ccopf
