#ifndef RELAYLAB_ENV_HPP
#define RELAYLAB_ENV_HPP

#include <array>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <vector>

#include "relaylab/coverage.hpp"
#include "relaylab/pca.hpp"
#include "relaylab/scenario.hpp"

namespace relaylab {

struct RewardWeights {
  double c1 = 1.0 / 3.0;
  double c2 = 1.0 / 3.0;
  double c3 = 1.0 / 3.0;

  void validate() const {
    if (!(c1 >= 0 && c2 >= 0 && c3 >= 0 && c1 + c2 + c3 > 0))
      throw std::invalid_argument("reward weights: nonneg with positive sum");
  }
};

struct EnvConfig {
  Box bounds;
  double max_step = 50.0;          // per-axis action limit, meters
  int episode_len = 100;
  double min_user_power_dbm = -90.0;
  RewardWeights weights;
  ChannelParams channel;

  void validate() const {
    if (!(max_step > 0)) throw std::invalid_argument("env: max_step > 0");
    if (episode_len < 1) throw std::invalid_argument("env: episode_len >= 1");
    weights.validate();
  }
};

// Observable state: the PCA score history plus normalized entity positions.
struct EnvState {
  std::array<std::vector<double>, 4> frame_stack;  // oldest first
  std::vector<double> positions_aux;               // 3 * (2 + J), in [0,1]-ish
  int step_index = 0;
};

struct StepInfo {
  double r1 = 0.0, r2 = 0.0, r3 = 0.0;
  std::vector<double> user_powers_dbm;
};

// Ratio of the sensitivity-floor magnitude to the mean received-power
// magnitude; grows as users are served closer to (or above) the floor.
inline double compute_r3(const std::vector<double>& user_powers_dbm,
                         double min_user_power_dbm) {
  if (user_powers_dbm.empty())
    throw std::invalid_argument("compute_r3: empty power list");
  double mean_abs = 0.0;
  for (double p : user_powers_dbm) mean_abs += std::abs(p);
  mean_abs /= static_cast<double>(user_powers_dbm.size());
  return std::abs(min_user_power_dbm) / mean_abs;
}

// Single-UAV relay MDP over a fixed scenario. Holds the latest coverage map
// (for raw-state agents) and the 4-deep PCA score stack.
class Environment {
 public:
  Environment(const Scenario& scenario, const PcaModel* pca,
              const EnvConfig& config)
      : scenario_(scenario), pca_(pca), config_(config) {
    config_.validate();
    if (pca_ && pca_->k == 0)
      throw std::logic_error("Environment: PCA model not fitted");
  }

  const EnvConfig& config() const { return config_; }
  const Scenario& scenario() const { return scenario_; }
  const Position3D& uav_pose() const { return pose_; }
  const CoverageMap& coverage() const { return map_; }
  const EnvState& state() const { return state_; }
  int score_dim() const { return pca_ ? pca_->k : 0; }

  EnvState reset() {
    pose_ = scenario_.uav_init;
    map_ = compute_coverage_map(scenario_, pose_, config_.channel);
    const std::vector<double> scores = project_scores();
    for (auto& f : state_.frame_stack) f = scores;
    state_.step_index = 0;
    fill_aux();
    return state_;
  }

  // Applies a clamped delta action. r1 is judged on the pre-clamp candidate
  // pose; the pose itself is clamped into bounds afterwards.
  std::pair<double, bool> step(const std::array<double, 3>& action,
                               StepInfo* info = nullptr) {
    for (double a : action)
      if (!std::isfinite(a)) throw std::invalid_argument("step: non-finite action");
    const Position3D old_pose = pose_;
    const double lim = config_.max_step;
    const Position3D candidate{
        pose_.x + std::clamp(action[0], -lim, lim),
        pose_.y + std::clamp(action[1], -lim, lim),
        pose_.z + std::clamp(action[2], -lim, lim)};

    const double r1 = config_.bounds.contains(candidate) ? 1.0 : 0.0;
    pose_ = config_.bounds.clamp(candidate);

    map_ = compute_coverage_map(scenario_, pose_, config_.channel);
    const std::vector<double> scores = project_scores();
    for (int i = 0; i < 3; ++i) state_.frame_stack[i] = state_.frame_stack[i + 1];
    state_.frame_stack[3] = scores;

    // r2: step displacement over mean user distance, signed by whether the
    // mean user distance shrank.
    const double moved = distance(pose_, old_pose);
    double mean_new = 0.0, mean_old = 0.0;
    for (const auto& u : scenario_.users) {
      mean_new += distance(u, pose_);
      mean_old += distance(u, old_pose);
    }
    mean_new /= static_cast<double>(scenario_.users.size());
    mean_old /= static_cast<double>(scenario_.users.size());
    double r2 = 0.0;
    if (moved > 0.0 && mean_new > 0.0)
      r2 = (mean_new < mean_old ? 1.0 : -1.0) * moved / mean_new;

    std::vector<double> powers;
    powers.reserve(scenario_.users.size());
    for (const auto& u : scenario_.users)
      powers.push_back(
          link_budget(LinkKind::uav_to_user, scenario_.terrain, pose_, u,
                      config_.channel)
              .rx_power_dbm);
    const double r3 = compute_r3(powers, config_.min_user_power_dbm);

    const double reward = config_.weights.c1 * r1 + config_.weights.c2 * r2 +
                          config_.weights.c3 * r3;
    ++state_.step_index;
    fill_aux();
    if (info) {
      info->r1 = r1;
      info->r2 = r2;
      info->r3 = r3;
      info->user_powers_dbm = std::move(powers);
    }
    return {reward, state_.step_index >= config_.episode_len};
  }

 private:
  std::vector<double> project_scores() const {
    if (!pca_) return {};
    return project(*pca_, map_).scores;
  }

  static double norm01(double v, double lo, double hi) {
    return hi > lo ? (v - lo) / (hi - lo) : 0.5;
  }

  void fill_aux() {
    const Box& b = config_.bounds;
    auto& aux = state_.positions_aux;
    aux.clear();
    aux.reserve(3 * (2 + scenario_.users.size()));
    auto push = [&](const Position3D& p) {
      aux.push_back(norm01(p.x, b.x_min, b.x_max));
      aux.push_back(norm01(p.y, b.y_min, b.y_max));
      aux.push_back(norm01(p.z, b.z_min, b.z_max));
    };
    push(pose_);
    push(scenario_.bs);
    for (const auto& u : scenario_.users) push(u);
  }

  Scenario scenario_;
  const PcaModel* pca_;
  EnvConfig config_;
  Position3D pose_;
  CoverageMap map_;
  EnvState state_;
};

}  // namespace relaylab

#endif  // RELAYLAB_ENV_HPP
