#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "relaylab/coverage.hpp"
#include "relaylab/rng.hpp"

using namespace relaylab;

namespace {

Scenario flat_scenario(int w, int h, double cell) {
  Scenario s;
  s.terrain.width_cells = w;
  s.terrain.height_cells = h;
  s.terrain.cell_size = cell;
  s.terrain.elevations.assign(static_cast<std::size_t>(w) * h, 0.0);
  s.terrain.forest_mask.assign(s.terrain.elevations.size(), 0);
  s.bounds = {0, (w - 1) * cell, 0, (h - 1) * cell, 0, 400};
  s.users = {{cell, cell, 1.5}};
  s.bs = {0, 0, 10};
  s.uav_init = {cell, cell, 100};
  return s;
}

CoverageMap random_map(Rng& rng, int w, int h) {
  CoverageMap m;
  m.width_cells = w;
  m.height_cells = h;
  m.cell_size = 10.0;
  m.values.resize(static_cast<std::size_t>(w) * h);
  for (double& v : m.values) v = rng.uniform(-120.0, -40.0);
  return m;
}

}  // namespace

TEST_CASE("compute_coverage_map: cell beneath the UAV matches the single link") {
  const Scenario s = flat_scenario(17, 17, 100.0);
  ChannelParams params;
  const Position3D uav{800, 800, 101.5};  // 100 m above the receiver height
  const CoverageMap m = compute_coverage_map(s, uav, params);
  CHECK(std::abs(m.at(8, 8) - (36.98 + fspl_uav(100.0, params.fc))) < 1e-3);
}

TEST_CASE("compute_coverage_map: maximum at the cell nearest the ground projection") {
  const Scenario s = flat_scenario(17, 17, 100.0);
  const CoverageMap m = compute_coverage_map(s, {430, 1080, 90}, ChannelParams{});
  const auto it = std::max_element(m.values.begin(), m.values.end());
  const int idx = static_cast<int>(it - m.values.begin());
  CHECK(idx % 17 == 4);   // column nearest x=430
  CHECK(idx / 17 == 11);  // row nearest y=1080
}

TEST_CASE("compute_coverage_map: mirror symmetry about the x axis") {
  // terrain and forest mirrored about the middle row, UAV on the axis
  Scenario s = flat_scenario(17, 17, 100.0);
  Rng rng(5);
  for (int r = 0; r <= 8; ++r)
    for (int c = 0; c < 17; ++c) {
      const double e = rng.uniform(0.0, 40.0);
      const bool f = rng.bernoulli(0.3);
      s.terrain.elevations[static_cast<std::size_t>(r) * 17 + c] = e;
      s.terrain.elevations[static_cast<std::size_t>(16 - r) * 17 + c] = e;
      s.terrain.forest_mask[static_cast<std::size_t>(r) * 17 + c] = f;
      s.terrain.forest_mask[static_cast<std::size_t>(16 - r) * 17 + c] = f;
    }
  const CoverageMap m = compute_coverage_map(s, {430, 800, 150}, ChannelParams{});
  for (int r = 0; r < 17; ++r)
    for (int c = 0; c < 17; ++c)
      CHECK(m.at(c, r) == doctest::Approx(m.at(c, 16 - r)).epsilon(1e-12));
}

TEST_CASE("compute_coverage_map: deterministic and affine in tx power") {
  const Scenario s = flat_scenario(9, 9, 100.0);
  ChannelParams params;
  const Position3D uav{400, 400, 150};
  const CoverageMap a = compute_coverage_map(s, uav, params);
  const CoverageMap b = compute_coverage_map(s, uav, params);
  CHECK(a.values == b.values);
  params.tx_power_uav_dbm += 7.0;
  const CoverageMap c = compute_coverage_map(s, uav, params);
  for (std::size_t i = 0; i < a.values.size(); ++i)
    CHECK(c.values[i] == doctest::Approx(a.values[i] + 7.0).epsilon(1e-12));
}

TEST_CASE("compute_coverage_map: rejects out-of-bounds pose") {
  const Scenario s = flat_scenario(9, 9, 100.0);
  CHECK_THROWS_AS(compute_coverage_map(s, {-10, 0, 100}, ChannelParams{}),
                  std::invalid_argument);
}

TEST_CASE("map_mae: values") {
  CoverageMap a, b;
  a.width_cells = b.width_cells = 2;
  a.height_cells = b.height_cells = 1;
  a.values = {0.0, 2.0};
  b.values = {1.0, 5.0};
  CHECK(map_mae(a, a) == 0.0);
  CHECK(map_mae(a, b) == doctest::Approx(2.0));
  CoverageMap c = a;
  for (double& v : c.values) v += 3.0;
  CHECK(map_mae(a, c) == doctest::Approx(3.0));
  CoverageMap wrong;
  wrong.width_cells = 3;
  wrong.height_cells = 1;
  wrong.values = {0, 0, 0};
  CHECK_THROWS_AS(map_mae(a, wrong), std::invalid_argument);
}

TEST_CASE("map_mae: metric properties on random maps") {
  Rng rng(23);
  for (int trial = 0; trial < 25; ++trial) {
    const CoverageMap a = random_map(rng, 6, 5);
    const CoverageMap b = random_map(rng, 6, 5);
    const CoverageMap c = random_map(rng, 6, 5);
    CHECK(map_mae(a, b) >= 0.0);
    CHECK(map_mae(a, b) == map_mae(b, a));
    CHECK(map_mae(a, c) <= map_mae(a, b) + map_mae(b, c) + 1e-12);
  }
  const CoverageMap a = random_map(rng, 6, 5);
  CHECK(map_mae(a, a) == 0.0);
}

TEST_CASE("write_coverage_csv: header echoes pose and dims") {
  const Scenario s = flat_scenario(3, 2, 50.0);
  const CoverageMap m = compute_coverage_map(s, {50, 25, 100}, ChannelParams{});
  std::ostringstream out;
  write_coverage_csv(m, out);
  const std::string text = out.str();
  CHECK(text.rfind("# coverage 3 2 50 50 25 100\n", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);  // header + 2 rows
}
