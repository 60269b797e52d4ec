#ifndef RELAYLAB_CONFIG_HPP
#define RELAYLAB_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "relaylab/agent.hpp"
#include "relaylab/env.hpp"

namespace relaylab {

struct ScenarioConfig {
  std::uint64_t seed = 1;
  int width_cells = 65;
  int height_cells = 65;
  double cell_size = 100.0;
  double roughness = 30.0;
  double forest_fraction = 0.2;
  std::string heightmap_path;  // overrides the generator when set
  int n_users = 15;
  Box bounds{0.0, 6400.0, 0.0, 6400.0, 10.0, 300.0};
  double max_user_spread = 10000.0;
};

struct PcaConfig {
  double variance_target = 0.995;
  int warmup_maps = 128;
};

struct PerConfig {
  double alpha = 0.6;
  double beta_start = 0.4;
  double beta_end = 1.0;
  double eps = 1e-3;
  std::size_t capacity = 100000;
};

struct CampaignConfig {
  std::vector<std::string> agents{"td3", "td3pca", "etd3"};
  int runs = 10;
  int episodes = 150;
  std::uint64_t seed_base = 1;
  double threshold_fraction = 0.9;
  int smooth_window = 10;
  bool rerandomize_scenario = true;
  int parallel = 1;
};

struct NetConfig {
  NetLayout layout = NetLayout::paper();
  int raw_image_size = 30;
};

struct LabConfig {
  ScenarioConfig scenario;
  ChannelParams channel;
  EnvConfig env;
  PcaConfig pca;
  PerConfig per;
  NetConfig net;
  CampaignConfig campaign;
  std::map<std::string, AgentHyper> agent_hyper;  // keyed by agent name

  LabConfig() {
    env.bounds = scenario.bounds;
    for (const char* k : {"td3", "td3pca", "etd3"})
      agent_hyper[k] = AgentHyper::for_kind(parse_agent(k));
  }

  AgentHyper hyper_for(AgentKind kind) const {
    auto it = agent_hyper.find(agent_name(kind));
    return it != agent_hyper.end() ? it->second
                                   : AgentHyper::for_kind(kind);
  }
};

namespace detail {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void parse_box(const nlohmann::json& j, Box& b) {
  maybe(j, "x_min", b.x_min);
  maybe(j, "x_max", b.x_max);
  maybe(j, "y_min", b.y_min);
  maybe(j, "y_max", b.y_max);
  maybe(j, "z_min", b.z_min);
  maybe(j, "z_max", b.z_max);
}

inline void parse_hyper(const nlohmann::json& j, AgentHyper& h) {
  maybe(j, "actor_lr", h.actor_lr);
  maybe(j, "critic_lr", h.critic_lr);
  maybe(j, "gamma", h.gamma);
  maybe(j, "tau", h.tau);
  maybe(j, "batch_size", h.batch_size);
  maybe(j, "policy_delay", h.policy_delay);
  maybe(j, "huber_delta", h.huber_delta);
  maybe(j, "explore_sigma0", h.explore_sigma0);
  maybe(j, "explore_decay", h.explore_decay);
  maybe(j, "target_noise_std", h.target_noise_std);
  maybe(j, "target_noise_clip", h.target_noise_clip);
}

}  // namespace detail

// Parses the experiment JSON; every field is optional and defaults to the
// desk-scale configuration (see docs/config.md).
inline LabConfig parse_config(const nlohmann::json& j) {
  using detail::maybe;
  LabConfig c;
  if (j.contains("scenario")) {
    const auto& s = j.at("scenario");
    maybe(s, "seed", c.scenario.seed);
    maybe(s, "width_cells", c.scenario.width_cells);
    maybe(s, "height_cells", c.scenario.height_cells);
    maybe(s, "cell_size", c.scenario.cell_size);
    maybe(s, "roughness", c.scenario.roughness);
    maybe(s, "forest_fraction", c.scenario.forest_fraction);
    maybe(s, "heightmap_path", c.scenario.heightmap_path);
    maybe(s, "n_users", c.scenario.n_users);
    maybe(s, "max_user_spread", c.scenario.max_user_spread);
    if (s.contains("bounds")) detail::parse_box(s.at("bounds"), c.scenario.bounds);
    c.env.bounds = c.scenario.bounds;
  }
  if (j.contains("channel")) {
    const auto& s = j.at("channel");
    maybe(s, "fc", c.channel.fc);
    maybe(s, "tx_power_uav_dbm", c.channel.tx_power_uav_dbm);
    maybe(s, "tx_power_bs_dbm", c.channel.tx_power_bs_dbm);
    maybe(s, "veg_loss_db", c.channel.veg_loss_db);
    maybe(s, "fresnel_clearance", c.channel.fresnel_clearance);
  }
  c.env.channel = c.channel;
  if (j.contains("env")) {
    const auto& s = j.at("env");
    maybe(s, "max_step", c.env.max_step);
    maybe(s, "episode_len", c.env.episode_len);
    maybe(s, "min_user_power_dbm", c.env.min_user_power_dbm);
    if (s.contains("reward_weights")) {
      const auto& w = s.at("reward_weights");
      c.env.weights.c1 = w.at(0).get<double>();
      c.env.weights.c2 = w.at(1).get<double>();
      c.env.weights.c3 = w.at(2).get<double>();
    }
  }
  if (j.contains("pca")) {
    const auto& s = j.at("pca");
    maybe(s, "variance_target", c.pca.variance_target);
    maybe(s, "warmup_maps", c.pca.warmup_maps);
  }
  if (j.contains("per")) {
    const auto& s = j.at("per");
    maybe(s, "alpha", c.per.alpha);
    maybe(s, "beta_start", c.per.beta_start);
    maybe(s, "beta_end", c.per.beta_end);
    maybe(s, "eps", c.per.eps);
    maybe(s, "capacity", c.per.capacity);
  }
  if (j.contains("net")) {
    const auto& s = j.at("net");
    if (s.contains("convs")) {
      c.net.layout.convs.clear();
      for (const auto& row : s.at("convs"))
        c.net.layout.convs.push_back({row.at(0).get<int>(), row.at(1).get<int>(),
                                      row.at(2).get<int>(), row.at(3).get<int>()});
    }
    if (s.contains("dense")) {
      c.net.layout.dense_units = s.at("dense").get<std::vector<int>>();
    }
    maybe(s, "leaky_slope", c.net.layout.leaky_slope);
    maybe(s, "raw_image_size", c.net.raw_image_size);
  }
  if (j.contains("campaign")) {
    const auto& s = j.at("campaign");
    maybe(s, "agents", c.campaign.agents);
    maybe(s, "runs", c.campaign.runs);
    maybe(s, "episodes", c.campaign.episodes);
    maybe(s, "seed_base", c.campaign.seed_base);
    maybe(s, "threshold_fraction", c.campaign.threshold_fraction);
    maybe(s, "smooth_window", c.campaign.smooth_window);
    maybe(s, "rerandomize_scenario", c.campaign.rerandomize_scenario);
    maybe(s, "parallel", c.campaign.parallel);
  }
  if (j.contains("agents")) {
    for (const auto& [name, body] : j.at("agents").items()) {
      AgentHyper h = AgentHyper::for_kind(parse_agent(name));
      detail::parse_hyper(body, h);
      c.agent_hyper[name] = h;
    }
  }
  if (c.campaign.runs < 1 || c.campaign.episodes < 1)
    throw std::invalid_argument("config: runs and episodes must be >= 1");
  return c;
}

inline LabConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return parse_config(j);
}

// Canonical echo of the effective configuration (for report provenance).
inline nlohmann::json config_to_json(const LabConfig& c) {
  nlohmann::json j;
  j["scenario"] = {{"seed", c.scenario.seed},
                   {"width_cells", c.scenario.width_cells},
                   {"height_cells", c.scenario.height_cells},
                   {"cell_size", c.scenario.cell_size},
                   {"roughness", c.scenario.roughness},
                   {"forest_fraction", c.scenario.forest_fraction},
                   {"heightmap_path", c.scenario.heightmap_path},
                   {"n_users", c.scenario.n_users},
                   {"max_user_spread", c.scenario.max_user_spread},
                   {"bounds",
                    {{"x_min", c.scenario.bounds.x_min},
                     {"x_max", c.scenario.bounds.x_max},
                     {"y_min", c.scenario.bounds.y_min},
                     {"y_max", c.scenario.bounds.y_max},
                     {"z_min", c.scenario.bounds.z_min},
                     {"z_max", c.scenario.bounds.z_max}}}};
  j["channel"] = {{"fc", c.channel.fc},
                  {"tx_power_uav_dbm", c.channel.tx_power_uav_dbm},
                  {"tx_power_bs_dbm", c.channel.tx_power_bs_dbm},
                  {"veg_loss_db", c.channel.veg_loss_db},
                  {"fresnel_clearance", c.channel.fresnel_clearance}};
  j["env"] = {{"max_step", c.env.max_step},
              {"episode_len", c.env.episode_len},
              {"min_user_power_dbm", c.env.min_user_power_dbm},
              {"reward_weights",
               {c.env.weights.c1, c.env.weights.c2, c.env.weights.c3}}};
  j["pca"] = {{"variance_target", c.pca.variance_target},
              {"warmup_maps", c.pca.warmup_maps}};
  j["per"] = {{"alpha", c.per.alpha},
              {"beta_start", c.per.beta_start},
              {"beta_end", c.per.beta_end},
              {"eps", c.per.eps},
              {"capacity", c.per.capacity}};
  nlohmann::json convs = nlohmann::json::array();
  for (const auto& cv : c.net.layout.convs)
    convs.push_back({cv.in_ch, cv.out_ch, cv.kernel, cv.stride});
  j["net"] = {{"convs", convs},
              {"dense", c.net.layout.dense_units},
              {"leaky_slope", c.net.layout.leaky_slope},
              {"raw_image_size", c.net.raw_image_size}};
  j["campaign"] = {{"agents", c.campaign.agents},
                   {"runs", c.campaign.runs},
                   {"episodes", c.campaign.episodes},
                   {"seed_base", c.campaign.seed_base},
                   {"threshold_fraction", c.campaign.threshold_fraction},
                   {"smooth_window", c.campaign.smooth_window},
                   {"rerandomize_scenario", c.campaign.rerandomize_scenario},
                   {"parallel", c.campaign.parallel}};
  nlohmann::json agents;
  for (const auto& [name, h] : c.agent_hyper)
    agents[name] = {{"actor_lr", h.actor_lr},
                    {"critic_lr", h.critic_lr},
                    {"gamma", h.gamma},
                    {"tau", h.tau},
                    {"batch_size", h.batch_size},
                    {"policy_delay", h.policy_delay},
                    {"huber_delta", h.huber_delta},
                    {"explore_sigma0", h.explore_sigma0},
                    {"explore_decay", h.explore_decay},
                    {"target_noise_std", h.target_noise_std},
                    {"target_noise_clip", h.target_noise_clip}};
  j["agents"] = agents;
  return j;
}

inline std::string config_hash(const LabConfig& c) {
  const std::string dump = config_to_json(c).dump();
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (unsigned char ch : dump) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace relaylab

#endif  // RELAYLAB_CONFIG_HPP
