#include "ccopf/grid.hpp"

#include <fstream>
#include <queue>
#include <sstream>
#include <unordered_set>

#include "ccopf/errors.hpp"

namespace ccopf {

GridCase::GridCase(std::vector<Bus> buses, std::vector<Line> lines, std::vector<Generator> generators,
                   int slack_bus, double base_mva)
    : buses_(std::move(buses)),
      lines_(std::move(lines)),
      generators_(std::move(generators)),
      slack_bus_(slack_bus),
      base_mva_(base_mva) {
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (!bus_pos_.emplace(buses_[i].id, i).second) {
      throw ValidationError("duplicate bus id " + std::to_string(buses_[i].id));
    }
  }
  for (std::size_t l = 0; l < lines_.size(); ++l) {
    if (!line_pos_.emplace(lines_[l].id, l).second) {
      throw ValidationError("duplicate line id " + std::to_string(lines_[l].id));
    }
  }
  validate();
}

std::size_t GridCase::bus_index(int bus_id) const {
  auto it = bus_pos_.find(bus_id);
  if (it == bus_pos_.end()) throw ValidationError("unknown bus id " + std::to_string(bus_id));
  return it->second;
}

std::size_t GridCase::line_index(int line_id) const {
  auto it = line_pos_.find(line_id);
  if (it == line_pos_.end()) throw ValidationError("unknown line id " + std::to_string(line_id));
  return it->second;
}

std::vector<std::size_t> GridCase::wind_bus_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (buses_[i].wind_forecast > 0.0) out.push_back(i);
  }
  return out;
}

Eigen::VectorXd GridCase::load_vector() const {
  Eigen::VectorXd d(buses_.size());
  for (std::size_t i = 0; i < buses_.size(); ++i) d[i] = buses_[i].load;
  return d;
}

Eigen::VectorXd GridCase::wind_vector() const {
  Eigen::VectorXd w(buses_.size());
  for (std::size_t i = 0; i < buses_.size(); ++i) w[i] = buses_[i].wind_forecast;
  return w;
}

double GridCase::total_load() const { return load_vector().sum(); }
double GridCase::total_wind() const { return wind_vector().sum(); }

void GridCase::validate() const {
  if (buses_.empty()) throw ValidationError("case has no buses");
  if (!(base_mva_ > 0.0)) throw ValidationError("base_mva must be positive");
  if (!bus_pos_.contains(slack_bus_)) {
    throw ValidationError("slack bus " + std::to_string(slack_bus_) + " is not a bus");
  }
  for (const auto& b : buses_) {
    if (b.load < 0.0) throw ValidationError("bus " + std::to_string(b.id) + " has negative load");
    if (b.wind_forecast < 0.0) {
      throw ValidationError("bus " + std::to_string(b.id) + " has negative wind forecast");
    }
  }
  std::unordered_set<int> gen_ids;
  for (const auto& g : generators_) {
    const auto tag = "generator " + std::to_string(g.id);
    if (!gen_ids.insert(g.id).second) throw ValidationError("duplicate " + tag);
    if (!bus_pos_.contains(g.bus)) {
      throw ValidationError(tag + " references unknown bus " + std::to_string(g.bus));
    }
    if (g.p_min < 0.0 || g.p_min > g.p_max) throw ValidationError(tag + " needs 0 <= p_min <= p_max");
    if (g.c2 < 0.0) throw ValidationError(tag + " has negative quadratic cost");
  }
  for (const auto& l : lines_) {
    const auto tag = "line " + std::to_string(l.id);
    if (!bus_pos_.contains(l.from_bus) || !bus_pos_.contains(l.to_bus)) {
      throw ValidationError(tag + " references an unknown bus");
    }
    if (l.from_bus == l.to_bus) throw ValidationError(tag + " is a self loop");
    if (!(l.reactance > 0.0)) throw ValidationError(tag + " needs positive reactance");
    if (!(l.f_max > 0.0)) throw ValidationError(tag + " needs positive f_max");
  }

  // Breadth-first search from the slack bus.
  std::vector<std::vector<std::size_t>> adj(buses_.size());
  for (const auto& l : lines_) {
    auto a = bus_pos_.at(l.from_bus);
    auto b = bus_pos_.at(l.to_bus);
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<bool> seen(buses_.size(), false);
  std::queue<std::size_t> q;
  q.push(bus_pos_.at(slack_bus_));
  seen[q.front()] = true;
  std::size_t reached = 1;
  while (!q.empty()) {
    auto u = q.front();
    q.pop();
    for (auto v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        ++reached;
        q.push(v);
      }
    }
  }
  if (reached != buses_.size()) throw ValidationError("network is not connected");
}

namespace {

template <class T>
T field(const nlohmann::json& obj, const char* key, const char* where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ParseError(std::string(where) + ": missing key '" + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string(where) + ": bad value for '" + key + "': " + e.what());
  }
}

const nlohmann::json& array_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    throw ParseError(std::string("case: '") + key + "' must be an array");
  }
  return j.at(key);
}

}  // namespace

GridCase case_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("case: top level must be an object");
  std::vector<Bus> buses;
  for (const auto& b : array_field(j, "buses")) {
    buses.push_back({field<int>(b, "id", "bus"), field<double>(b, "load", "bus"),
                     b.value("wind_forecast", 0.0)});
  }
  std::vector<Line> lines;
  for (const auto& l : array_field(j, "lines")) {
    lines.push_back({field<int>(l, "id", "line"), field<int>(l, "from", "line"), field<int>(l, "to", "line"),
                     field<double>(l, "reactance", "line"), field<double>(l, "f_max", "line")});
  }
  std::vector<Generator> gens;
  for (const auto& g : array_field(j, "generators")) {
    gens.push_back({field<int>(g, "id", "generator"), field<int>(g, "bus", "generator"),
                    field<double>(g, "p_min", "generator"), field<double>(g, "p_max", "generator"),
                    field<double>(g, "c1", "generator"), field<double>(g, "c2", "generator")});
  }
  return GridCase(std::move(buses), std::move(lines), std::move(gens), field<int>(j, "slack_bus", "case"),
                  j.value("base_mva", 100.0));
}

nlohmann::json case_to_json(const GridCase& grid) {
  nlohmann::json j;
  j["base_mva"] = grid.base_mva();
  j["slack_bus"] = grid.slack_bus();
  j["buses"] = nlohmann::json::array();
  for (const auto& b : grid.buses()) {
    j["buses"].push_back({{"id", b.id}, {"load", b.load}, {"wind_forecast", b.wind_forecast}});
  }
  j["lines"] = nlohmann::json::array();
  for (const auto& l : grid.lines()) {
    j["lines"].push_back(
        {{"id", l.id}, {"from", l.from_bus}, {"to", l.to_bus}, {"reactance", l.reactance}, {"f_max", l.f_max}});
  }
  j["generators"] = nlohmann::json::array();
  for (const auto& g : grid.generators()) {
    j["generators"].push_back({{"id", g.id},
                               {"bus", g.bus},
                               {"p_min", g.p_min},
                               {"p_max", g.p_max},
                               {"c1", g.c1},
                               {"c2", g.c2}});
  }
  return j;
}

GridCase load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open case file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("case file " + path.string() + ": " + e.what());
  }
  return case_from_json(j);
}

namespace {

// Reduced susceptance matrix (slack removed) in per unit, plus the map from
// bus position to reduced position (-1 for the slack).
struct ReducedB {
  Eigen::MatrixXd matrix;
  std::vector<Eigen::Index> reduced;
};

ReducedB reduced_susceptance(const GridCase& grid) {
  const auto n = static_cast<Eigen::Index>(grid.num_buses());
  const auto slack = static_cast<Eigen::Index>(grid.slack_index());
  ReducedB out;
  out.reduced.assign(n, -1);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i != slack) out.reduced[i] = k++;
  }
  out.matrix = Eigen::MatrixXd::Zero(n - 1, n - 1);
  for (const auto& l : grid.lines()) {
    const double b = 1.0 / l.reactance;
    const auto f = out.reduced[grid.bus_index(l.from_bus)];
    const auto t = out.reduced[grid.bus_index(l.to_bus)];
    if (f >= 0) out.matrix(f, f) += b;
    if (t >= 0) out.matrix(t, t) += b;
    if (f >= 0 && t >= 0) {
      out.matrix(f, t) -= b;
      out.matrix(t, f) -= b;
    }
  }
  return out;
}

}  // namespace

PtdfMatrix compute_ptdf(const GridCase& grid) {
  const auto n = static_cast<Eigen::Index>(grid.num_buses());
  const auto L = static_cast<Eigen::Index>(grid.num_lines());
  PtdfMatrix out;
  out.H = Eigen::MatrixXd::Zero(L, n);
  if (n > 1) {
    auto red = reduced_susceptance(grid);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(red.matrix);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-12 * ldlt.vectorD().maxCoeff()) {
      throw NumericalError("reduced susceptance matrix is singular; network disconnected?");
    }
    Eigen::MatrixXd X = ldlt.solve(Eigen::MatrixXd::Identity(n - 1, n - 1));
    for (Eigen::Index l = 0; l < L; ++l) {
      const auto& line = grid.lines()[l];
      const auto f = red.reduced[grid.bus_index(line.from_bus)];
      const auto t = red.reduced[grid.bus_index(line.to_bus)];
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto r = red.reduced[i];
        if (r < 0) continue;
        const double tf = f >= 0 ? X(f, r) : 0.0;
        const double tt = t >= 0 ? X(t, r) : 0.0;
        out.H(l, i) = (tf - tt) / line.reactance;
      }
    }
  }
  const auto G = static_cast<Eigen::Index>(grid.num_generators());
  out.gen_rows.resize(L, G);
  for (Eigen::Index g = 0; g < G; ++g) {
    out.gen_rows.col(g) = out.H.col(grid.bus_index(grid.generators()[g].bus));
  }
  out.wind_rows = Eigen::MatrixXd::Zero(L, n);
  for (auto i : grid.wind_bus_indices()) out.wind_rows.col(i) = out.H.col(i);
  return out;
}

Eigen::VectorXd flow_response(const PtdfMatrix& ptdf, const Eigen::VectorXd& alpha) {
  return -(ptdf.gen_rows * alpha);
}

Eigen::VectorXd generation_by_bus(const GridCase& grid, const Eigen::VectorXd& per_generator) {
  if (per_generator.size() != static_cast<Eigen::Index>(grid.num_generators())) {
    throw ValidationError("generator vector has wrong length");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(grid.num_buses());
  for (std::size_t g = 0; g < grid.num_generators(); ++g) {
    out[grid.bus_index(grid.generators()[g].bus)] += per_generator[g];
  }
  return out;
}

NominalState nominal_state(const GridCase& grid, const PtdfMatrix& ptdf, const Eigen::VectorXd& pbar) {
  NominalState s;
  s.injections = generation_by_bus(grid, pbar) + grid.wind_vector() - grid.load_vector();
  s.flows = ptdf.H * s.injections;
  return s;
}

RealizedState realized_state(const GridCase& grid, const PtdfMatrix& ptdf, const Eigen::VectorXd& pbar,
                             const Eigen::VectorXd& alpha, const Eigen::VectorXd& xi) {
  const auto G = static_cast<Eigen::Index>(grid.num_generators());
  if (pbar.size() != G || alpha.size() != G || xi.size() != static_cast<Eigen::Index>(grid.num_buses())) {
    throw ValidationError("realized_state: dimension mismatch");
  }
  const double omega = xi.sum();
  RealizedState r;
  r.generation = pbar - alpha * omega;
  r.flows = nominal_state(grid, ptdf, pbar).flows + flow_response(ptdf, alpha) * omega + ptdf.wind_rows * xi;
  return r;
}

Eigen::VectorXd recover_angles(const GridCase& grid, const Eigen::VectorXd& injections) {
  const auto n = static_cast<Eigen::Index>(grid.num_buses());
  if (injections.size() != n) throw ValidationError("recover_angles: dimension mismatch");
  const double scale = std::max(1.0, injections.cwiseAbs().maxCoeff());
  if (std::abs(injections.sum()) > 1e-9 * scale * static_cast<double>(n)) {
    throw ValidationError("recover_angles: injections are not balanced");
  }
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n);
  if (n == 1) return theta;
  auto red = reduced_susceptance(grid);
  Eigen::VectorXd rhs(n - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (red.reduced[i] >= 0) rhs[red.reduced[i]] = injections[i] / grid.base_mva();
  }
  Eigen::VectorXd sol = red.matrix.ldlt().solve(rhs);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (red.reduced[i] >= 0) theta[i] = sol[red.reduced[i]];
  }
  return theta;
}

Eigen::VectorXd flows_from_angles(const GridCase& grid, const Eigen::VectorXd& angles) {
  Eigen::VectorXd f(grid.num_lines());
  for (std::size_t l = 0; l < grid.num_lines(); ++l) {
    const auto& line = grid.lines()[l];
    f[l] = grid.base_mva() * (angles[grid.bus_index(line.from_bus)] - angles[grid.bus_index(line.to_bus)]) /
           line.reactance;
  }
  return f;
}

}  // namespace ccopf
