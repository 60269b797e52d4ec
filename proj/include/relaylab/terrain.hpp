#ifndef RELAYLAB_TERRAIN_HPP
#define RELAYLAB_TERRAIN_HPP

#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "relaylab/geometry.hpp"
#include "relaylab/rng.hpp"

namespace relaylab {

// Elevation grid plus a per-cell forest flag. Row-major, row = y, col = x.
struct TerrainGrid {
  int width_cells = 0;
  int height_cells = 0;
  double cell_size = 0.0;  // meters per cell
  std::vector<double> elevations;
  std::vector<std::uint8_t> forest_mask;

  double elevation(int col, int row) const {
    return elevations[static_cast<std::size_t>(row) * width_cells + col];
  }
  bool forest(int col, int row) const {
    return forest_mask[static_cast<std::size_t>(row) * width_cells + col] != 0;
  }

  // World extent covered by the grid nodes.
  double extent_x() const { return (width_cells - 1) * cell_size; }
  double extent_y() const { return (height_cells - 1) * cell_size; }

  bool inside(double x, double y) const {
    return x >= 0.0 && x <= extent_x() && y >= 0.0 && y <= extent_y();
  }

  void validate() const {
    if (width_cells < 2 || height_cells < 2)
      throw std::invalid_argument("terrain: grid must be at least 2x2");
    if (!(cell_size > 0.0))
      throw std::invalid_argument("terrain: cell_size must be positive");
    const std::size_t n =
        static_cast<std::size_t>(width_cells) * height_cells;
    if (elevations.size() != n || forest_mask.size() != n)
      throw std::invalid_argument("terrain: grid dimension mismatch");
    for (double e : elevations)
      if (!std::isfinite(e))
        throw std::invalid_argument("terrain: non-finite elevation");
  }
};

// Bilinear interpolation over the elevation grid.
inline double elevation_at(const TerrainGrid& t, double x, double y) {
  if (!t.inside(x, y))
    throw std::out_of_range("elevation_at: query outside terrain extent");
  const double gx = x / t.cell_size;
  const double gy = y / t.cell_size;
  int c0 = static_cast<int>(gx);
  int r0 = static_cast<int>(gy);
  if (c0 >= t.width_cells - 1) c0 = t.width_cells - 2;
  if (r0 >= t.height_cells - 1) r0 = t.height_cells - 2;
  const double fx = gx - c0;
  const double fy = gy - r0;
  const double e00 = t.elevation(c0, r0);
  const double e10 = t.elevation(c0 + 1, r0);
  const double e01 = t.elevation(c0, r0 + 1);
  const double e11 = t.elevation(c0 + 1, r0 + 1);
  return e00 * (1 - fx) * (1 - fy) + e10 * fx * (1 - fy) +
         e01 * (1 - fx) * fy + e11 * fx * fy;
}

// Forest flag of the cell containing (x, y).
inline bool forest_at(const TerrainGrid& t, double x, double y) {
  if (!t.inside(x, y))
    throw std::out_of_range("forest_at: query outside terrain extent");
  int c = static_cast<int>(x / t.cell_size);
  int r = static_cast<int>(y / t.cell_size);
  if (c >= t.width_cells) c = t.width_cells - 1;
  if (r >= t.height_cells) r = t.height_cells - 1;
  return t.forest(c, r);
}

namespace detail {

// Diamond-square on a (2^n + 1) square lattice.
inline std::vector<double> diamond_square(Rng& rng, int size, double roughness) {
  std::vector<double> g(static_cast<std::size_t>(size) * size, 0.0);
  auto at = [&](int c, int r) -> double& {
    return g[static_cast<std::size_t>(r) * size + c];
  };
  double amp = roughness;
  at(0, 0) = rng.uniform(-amp, amp);
  at(size - 1, 0) = rng.uniform(-amp, amp);
  at(0, size - 1) = rng.uniform(-amp, amp);
  at(size - 1, size - 1) = rng.uniform(-amp, amp);
  for (int step = size - 1; step > 1; step /= 2) {
    const int half = step / 2;
    // diamond
    for (int r = half; r < size; r += step)
      for (int c = half; c < size; c += step) {
        const double avg = (at(c - half, r - half) + at(c + half, r - half) +
                            at(c - half, r + half) + at(c + half, r + half)) /
                           4.0;
        at(c, r) = avg + rng.uniform(-amp, amp);
      }
    // square
    for (int r = 0; r < size; r += half)
      for (int c = (r / half) % 2 == 0 ? half : 0; c < size; c += step) {
        double sum = 0.0;
        int cnt = 0;
        if (c - half >= 0) { sum += at(c - half, r); ++cnt; }
        if (c + half < size) { sum += at(c + half, r); ++cnt; }
        if (r - half >= 0) { sum += at(c, r - half); ++cnt; }
        if (r + half < size) { sum += at(c, r + half); ++cnt; }
        at(c, r) = sum / cnt + rng.uniform(-amp, amp);
      }
    amp *= 0.5;
  }
  return g;
}

}  // namespace detail

// Midpoint-displacement terrain plus an i.i.d. Bernoulli forest mask.
// Deterministic for fixed arguments.
inline TerrainGrid generate_terrain(std::uint64_t seed, int width_cells,
                                    int height_cells, double cell_size,
                                    double roughness, double forest_fraction) {
  if (width_cells < 2 || height_cells < 2)
    throw std::invalid_argument("generate_terrain: dims must be >= 2x2");
  if (!(cell_size > 0.0))
    throw std::invalid_argument("generate_terrain: cell_size must be > 0");
  if (!(roughness >= 0.0))
    throw std::invalid_argument("generate_terrain: roughness must be >= 0");
  if (!(forest_fraction >= 0.0 && forest_fraction <= 1.0))
    throw std::invalid_argument("generate_terrain: forest_fraction in [0,1]");

  Rng rng(seed);
  int lattice = 2;
  while (lattice + 1 < std::max(width_cells, height_cells)) lattice *= 2;
  const int size = lattice + 1;
  std::vector<double> full;
  if (roughness > 0.0) {
    full = detail::diamond_square(rng, size, roughness);
  } else {
    full.assign(static_cast<std::size_t>(size) * size, 0.0);
  }

  TerrainGrid t;
  t.width_cells = width_cells;
  t.height_cells = height_cells;
  t.cell_size = cell_size;
  t.elevations.resize(static_cast<std::size_t>(width_cells) * height_cells);
  for (int r = 0; r < height_cells; ++r)
    for (int c = 0; c < width_cells; ++c)
      t.elevations[static_cast<std::size_t>(r) * width_cells + c] =
          full[static_cast<std::size_t>(r) * size + c];

  t.forest_mask.resize(t.elevations.size());
  for (auto& m : t.forest_mask)
    m = rng.bernoulli(forest_fraction) ? 1 : 0;
  t.validate();
  return t;
}

// Text grid format:
//   grid <width> <height> <cell_size>
//   <height> rows of <width> elevations
//   optional: forest
//   <height> rows of <width> 0/1 flags
inline TerrainGrid load_heightmap(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_heightmap: cannot open " + path);
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line))
    throw std::runtime_error("load_heightmap: empty file");
  ++lineno;
  std::istringstream header(line);
  std::string tag;
  TerrainGrid t;
  if (!(header >> tag >> t.width_cells >> t.height_cells >> t.cell_size) ||
      tag != "grid")
    throw std::runtime_error("load_heightmap: malformed header at line 1");
  if (t.width_cells < 1 || t.height_cells < 1 || !(t.cell_size > 0.0))
    throw std::runtime_error("load_heightmap: invalid dimensions at line 1");

  auto read_rows = [&](auto push) {
    for (int r = 0; r < t.height_cells; ++r) {
      if (!std::getline(in, line))
        throw std::runtime_error("load_heightmap: missing row at line " +
                                 std::to_string(lineno + 1));
      ++lineno;
      std::istringstream row(line);
      int count = 0;
      std::string cell;
      while (row >> cell) {
        ++count;
        if (count > t.width_cells)
          throw std::runtime_error("load_heightmap: ragged row at line " +
                                   std::to_string(lineno));
        push(cell, lineno);
      }
      if (count != t.width_cells)
        throw std::runtime_error("load_heightmap: ragged row at line " +
                                 std::to_string(lineno));
    }
  };

  read_rows([&](const std::string& cell, int ln) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != cell.size() || !std::isfinite(v))
      throw std::runtime_error("load_heightmap: non-numeric cell at line " +
                               std::to_string(ln));
    t.elevations.push_back(v);
  });

  t.forest_mask.assign(t.elevations.size(), 0);
  if (std::getline(in, line)) {
    ++lineno;
    std::istringstream marker(line);
    std::string word;
    if (marker >> word) {
      if (word != "forest")
        throw std::runtime_error("load_heightmap: unexpected content at line " +
                                 std::to_string(lineno));
      t.forest_mask.clear();
      read_rows([&](const std::string& cell, int ln) {
        if (cell != "0" && cell != "1")
          throw std::runtime_error("load_heightmap: forest flag not 0/1 at line " +
                                   std::to_string(ln));
        t.forest_mask.push_back(cell == "1" ? 1 : 0);
      });
    }
  }
  t.validate();
  return t;
}

}  // namespace relaylab

#endif  // RELAYLAB_TERRAIN_HPP
