#pragma once

#include <cstdint>
#include <string>

#include "tnd/graph.hpp"

namespace tnd {

struct CityGenParams {
  std::string kind = "grid";  // "grid" or "geometric"
  // grid
  int rows = 4;
  int cols = 4;
  double spacing = 800.0;  // meters
  // random geometric
  int nodes = 30;
  double radius = 1500.0;
  double extent = 5000.0;

  double free_speed = 16.67;  // m/s
  int demand_pairs = 40;
  double rate_min = 5.0;   // trips/hour
  double rate_max = 100.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Deterministic synthetic city in the standard network schema.
Network generate_city(const CityGenParams& params);

}  // namespace tnd
