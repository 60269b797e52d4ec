#ifndef RELAYLAB_CHANNEL_HPP
#define RELAYLAB_CHANNEL_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "relaylab/geometry.hpp"
#include "relaylab/terrain.hpp"

namespace relaylab {

constexpr double kSpeedOfLight = 299792458.0;  // m/s

enum class LinkKind { bs_to_uav, uav_to_user };

struct ChannelParams {
  double fc = 2.4e9;                 // Hz
  double tx_power_uav_dbm = 36.98;
  double tx_power_bs_dbm = 36.98;
  double veg_loss_db = 5.0;
  double fresnel_clearance = 0.6;    // fraction of first Fresnel radius

  void validate() const {
    if (!(fc > 0.0)) throw std::invalid_argument("channel: fc must be > 0");
    if (!(fresnel_clearance > 0.0 && fresnel_clearance <= 1.0))
      throw std::invalid_argument("channel: fresnel_clearance in (0,1]");
  }
};

// All terms are signed gains in dB so the total gain is a pure sum.
struct LinkBudget {
  double pl_db = 0.0;
  double ked_db = 0.0;
  double veg_db = 0.0;
  double gain_db = 0.0;
  double rx_power_dbm = 0.0;
};

// Free-space gain on the BS-UAV link.
inline double fspl_bs(double d, double fc) {
  if (!(d > 0.0)) throw std::invalid_argument("fspl_bs: d must be > 0");
  if (!(fc > 0.0)) throw std::invalid_argument("fspl_bs: fc must be > 0");
  return -(20.0 * std::log10(d) + 20.0 * std::log10(fc) - 147.55);
}

// Free-space gain on the UAV-user link.
inline double fspl_uav(double d, double fc) {
  if (!(d > 0.0)) throw std::invalid_argument("fspl_uav: d must be > 0");
  if (!(fc > 0.0)) throw std::invalid_argument("fspl_uav: fc must be > 0");
  return -(21.3 * std::log10(d) + 21.3 * std::log10(fc) - 157.2);
}

namespace detail {

// Single-edge approximation of knife-edge diffraction loss (positive dB),
// valid for v > -0.78, zero below.
inline double knife_edge_j(double v) {
  if (v <= -0.78) return 0.0;
  const double t = v - 0.1;
  return 6.9 + 20.0 * std::log10(std::sqrt(t * t + 1.0) + t);
}

}  // namespace detail

// Terrain diffraction gain (<= 0 dB). The tx-rx ground track is sampled one
// point per crossed cell; a sample obstructs when the terrain penetrates the
// line-of-sight ray minus clearance * first-Fresnel radius. Losses of all
// obstructing samples are summed.
inline double ked_loss(const TerrainGrid& terrain, const Position3D& tx,
                       const Position3D& rx, double fc,
                       double clearance = 0.6) {
  if (!(fc > 0.0)) throw std::invalid_argument("ked_loss: fc must be > 0");
  const double total = distance(tx, rx);
  if (!(total > 0.0))
    throw std::invalid_argument("ked_loss: zero-length link");
  if (!terrain.inside(tx.x, tx.y) || !terrain.inside(rx.x, rx.y))
    throw std::out_of_range("ked_loss: endpoint outside terrain extent");

  const double ground = horizontal_distance(tx, rx);
  const int samples = static_cast<int>(ground / terrain.cell_size);
  if (samples < 1) return 0.0;

  const double lambda = kSpeedOfLight / fc;
  double loss = 0.0;
  for (int i = 1; i <= samples; ++i) {
    const double t = static_cast<double>(i) / (samples + 1);
    const double px = tx.x + (rx.x - tx.x) * t;
    const double py = tx.y + (rx.y - tx.y) * t;
    const double los_z = tx.z + (rx.z - tx.z) * t;
    const double terrain_z = elevation_at(terrain, px, py);

    const double d1 = t * total;
    const double d2 = total - d1;
    const double fresnel_r = std::sqrt(lambda * d1 * d2 / total);
    const double penetration = terrain_z - los_z;
    if (penetration <= -clearance * fresnel_r) continue;

    const double v = penetration * std::sqrt(2.0 / lambda * (1.0 / d1 + 1.0 / d2));
    loss += detail::knife_edge_j(v);
  }
  return -loss;
}

// Vegetation absorption gain at the user's cell (0 or -veg_loss_db).
inline double vegetation_loss(const TerrainGrid& terrain, const Position3D& user,
                              const ChannelParams& params) {
  return forest_at(terrain, user.x, user.y) ? -params.veg_loss_db : 0.0;
}

// Full link budget; vegetation applies only on links terminating at a
// ground user.
inline LinkBudget link_budget(LinkKind kind, const TerrainGrid& terrain,
                              const Position3D& tx, const Position3D& rx,
                              const ChannelParams& params) {
  params.validate();
  const double d = distance(tx, rx);
  LinkBudget lb;
  lb.pl_db = kind == LinkKind::bs_to_uav ? fspl_bs(d, params.fc)
                                         : fspl_uav(d, params.fc);
  lb.ked_db = ked_loss(terrain, tx, rx, params.fc, params.fresnel_clearance);
  lb.veg_db = kind == LinkKind::uav_to_user
                  ? vegetation_loss(terrain, rx, params)
                  : 0.0;
  lb.gain_db = lb.pl_db + lb.ked_db + lb.veg_db;
  const double tx_power = kind == LinkKind::bs_to_uav
                              ? params.tx_power_bs_dbm
                              : params.tx_power_uav_dbm;
  lb.rx_power_dbm = tx_power + lb.gain_db;
  return lb;
}

}  // namespace relaylab

#endif  // RELAYLAB_CHANNEL_HPP
