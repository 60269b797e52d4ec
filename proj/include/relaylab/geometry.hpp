#ifndef RELAYLAB_GEOMETRY_HPP
#define RELAYLAB_GEOMETRY_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace relaylab {

struct Position3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }
};

inline double distance(const Position3D& a, const Position3D& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline double horizontal_distance(const Position3D& a, const Position3D& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

// Axis-aligned operating region (the feasibility box of the relay).
struct Box {
  double x_min = 0.0, x_max = 0.0;
  double y_min = 0.0, y_max = 0.0;
  double z_min = 0.0, z_max = 0.0;

  bool valid() const {
    return x_min <= x_max && y_min <= y_max && z_min <= z_max;
  }

  bool contains(const Position3D& p) const {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max &&
           p.z >= z_min && p.z <= z_max;
  }

  Position3D clamp(const Position3D& p) const {
    return {std::clamp(p.x, x_min, x_max), std::clamp(p.y, y_min, y_max),
            std::clamp(p.z, z_min, z_max)};
  }
};

}  // namespace relaylab

#endif  // RELAYLAB_GEOMETRY_HPP
