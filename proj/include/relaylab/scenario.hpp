#ifndef RELAYLAB_SCENARIO_HPP
#define RELAYLAB_SCENARIO_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include "relaylab/geometry.hpp"
#include "relaylab/rng.hpp"
#include "relaylab/terrain.hpp"

namespace relaylab {

constexpr double kUserHeight = 1.5;  // m above ground
constexpr double kBsHeight = 10.0;   // m above ground

struct Scenario {
  TerrainGrid terrain;
  Position3D bs;
  std::vector<Position3D> users;
  Position3D uav_init;
  Box bounds;
  double max_user_spread = 10000.0;

  void validate() const {
    terrain.validate();
    if (!bounds.valid()) throw std::invalid_argument("scenario: invalid bounds");
    if (!bounds.contains(uav_init))
      throw std::invalid_argument("scenario: uav_init outside bounds");
    if (users.empty()) throw std::invalid_argument("scenario: no users");
    for (std::size_t i = 0; i < users.size(); ++i)
      for (std::size_t j = i + 1; j < users.size(); ++j)
        if (horizontal_distance(users[i], users[j]) > max_user_spread)
          throw std::invalid_argument("scenario: user spread exceeded");
  }
};

// Uniformly random user/BS placement inside `bounds`, pairwise user spread
// enforced by rejection sampling over whole layouts.
inline Scenario place_scenario(std::uint64_t seed, const TerrainGrid& terrain,
                               int n_users, const Box& bounds,
                               double max_user_spread = 10000.0) {
  if (n_users < 1) throw std::invalid_argument("place_scenario: n_users >= 1");
  if (!bounds.valid()) throw std::invalid_argument("place_scenario: bad bounds");
  if (!terrain.inside(bounds.x_min, bounds.y_min) ||
      !terrain.inside(bounds.x_max, bounds.y_max))
    throw std::invalid_argument("place_scenario: bounds outside terrain");

  Rng rng(seed);
  Scenario s;
  s.terrain = terrain;
  s.bounds = bounds;
  s.max_user_spread = max_user_spread;

  const int budget = 10000;
  int attempt = 0;
  for (; attempt < budget; ++attempt) {
    std::vector<Position3D> users;
    users.reserve(n_users);
    for (int i = 0; i < n_users; ++i) {
      const double x = rng.uniform(bounds.x_min, bounds.x_max);
      const double y = rng.uniform(bounds.y_min, bounds.y_max);
      users.push_back({x, y, elevation_at(terrain, x, y) + kUserHeight});
    }
    bool ok = true;
    for (std::size_t i = 0; i < users.size() && ok; ++i)
      for (std::size_t j = i + 1; j < users.size() && ok; ++j)
        if (horizontal_distance(users[i], users[j]) > max_user_spread)
          ok = false;
    if (ok) {
      s.users = std::move(users);
      break;
    }
  }
  if (attempt == budget)
    throw std::runtime_error(
        "place_scenario: user placement failed after 10000 tries "
        "(max_user_spread too tight for bounds)");

  {
    const double x = rng.uniform(bounds.x_min, bounds.x_max);
    const double y = rng.uniform(bounds.y_min, bounds.y_max);
    s.bs = {x, y, elevation_at(terrain, x, y) + kBsHeight};
  }
  s.uav_init = {rng.uniform(bounds.x_min, bounds.x_max),
                rng.uniform(bounds.y_min, bounds.y_max),
                rng.uniform(bounds.z_min, bounds.z_max)};
  s.validate();
  return s;
}

}  // namespace relaylab

#endif  // RELAYLAB_SCENARIO_HPP
