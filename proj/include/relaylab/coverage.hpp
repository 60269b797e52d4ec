#ifndef RELAYLAB_COVERAGE_HPP
#define RELAYLAB_COVERAGE_HPP

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "relaylab/channel.hpp"
#include "relaylab/scenario.hpp"

namespace relaylab {

// Ground-level received power (dBm) per terrain cell for one UAV pose.
struct CoverageMap {
  int width_cells = 0;
  int height_cells = 0;
  double cell_size = 0.0;
  std::vector<double> values;  // row-major, dBm
  Position3D uav_pose;

  double at(int col, int row) const {
    return values[static_cast<std::size_t>(row) * width_cells + col];
  }
  double& at(int col, int row) {
    return values[static_cast<std::size_t>(row) * width_cells + col];
  }
};

// Received power at every cell center (receiver at ground + user height)
// for the uav_to_user link.
inline CoverageMap compute_coverage_map(const Scenario& scenario,
                                        const Position3D& uav,
                                        const ChannelParams& params) {
  if (!scenario.bounds.contains(uav))
    throw std::invalid_argument("compute_coverage_map: uav outside bounds");
  const TerrainGrid& t = scenario.terrain;
  CoverageMap m;
  m.width_cells = t.width_cells;
  m.height_cells = t.height_cells;
  m.cell_size = t.cell_size;
  m.uav_pose = uav;
  m.values.resize(static_cast<std::size_t>(t.width_cells) * t.height_cells);
  for (int r = 0; r < t.height_cells; ++r) {
    for (int c = 0; c < t.width_cells; ++c) {
      const double x = c * t.cell_size;
      const double y = r * t.cell_size;
      Position3D rx{x, y, elevation_at(t, x, y) + kUserHeight};
      if (rx.x == uav.x && rx.y == uav.y && rx.z == uav.z)
        rx.z = std::nextafter(rx.z, -1e30);  // degenerate co-located cell
      const LinkBudget lb =
          link_budget(LinkKind::uav_to_user, t, uav, rx, params);
      m.at(c, r) = lb.rx_power_dbm;
    }
  }
  return m;
}

// Aggregate linear-domain received power over all cells, in dBm.
// Diagnostic companion to the per-cell map.
inline double coverage_total_dbm(const CoverageMap& m) {
  double sum_mw = 0.0;
  for (double v : m.values) sum_mw += std::pow(10.0, v / 10.0);
  return 10.0 * std::log10(sum_mw);
}

// Mean absolute difference between two equal-shaped maps, in dB.
inline double map_mae(const CoverageMap& a, const CoverageMap& b) {
  if (a.width_cells != b.width_cells || a.height_cells != b.height_cells)
    throw std::invalid_argument("map_mae: dimension mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i)
    sum += std::abs(a.values[i] - b.values[i]);
  return sum / static_cast<double>(a.values.size());
}

// CSV export: comment header, then one row per grid row.
inline void write_coverage_csv(const CoverageMap& m, std::ostream& out) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "# coverage %d %d %.17g", m.width_cells,
                m.height_cells, m.cell_size);
  out << buf;
  std::snprintf(buf, sizeof buf, " %.17g %.17g %.17g\n", m.uav_pose.x,
                m.uav_pose.y, m.uav_pose.z);
  out << buf;
  for (int r = 0; r < m.height_cells; ++r) {
    for (int c = 0; c < m.width_cells; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m.at(c, r));
      out << buf << (c + 1 < m.width_cells ? "," : "\n");
    }
  }
}

}  // namespace relaylab

#endif  // RELAYLAB_COVERAGE_HPP
