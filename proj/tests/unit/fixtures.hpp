#pragma once

#include <filesystem>
#include <string>

#include "ccopf/grid.hpp"

namespace fixtures {

inline std::filesystem::path data_dir() { return CCOPF_DATA_DIR; }
inline std::filesystem::path case_path(const std::string& name) { return data_dir() / "cases" / (name + ".json"); }

// Slack bus 1 with one generator; bus 2 carries the load and a wind unit.
inline ccopf::GridCase two_bus(double load = 100.0, double wind = 20.0) {
  using namespace ccopf;
  return GridCase({{1, 0.0, 0.0}, {2, load, wind}}, {{1, 1, 2, 0.1, 150.0}}, {{1, 1, 0.0, 200.0, 10.0, 0.01}}, 1,
                  100.0);
}

// Triangle with equal reactances, generators at buses 1 and 2.
inline ccopf::GridCase three_bus() { return ccopf::load_case(case_path("case3")); }

}  // namespace fixtures
