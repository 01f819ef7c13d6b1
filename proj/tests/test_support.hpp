#pragma once

#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

namespace teamtime::testing {

inline nlohmann::json load_fixture(const std::string& name) {
  std::ifstream in(std::string(TEAMTIME_FIXTURES) + "/" + name);
  return nlohmann::json::parse(in);
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

}  // namespace teamtime::testing
