#ifndef RELAYLAB_HARNESS_HPP
#define RELAYLAB_HARNESS_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "relaylab/agent.hpp"
#include "relaylab/config.hpp"
#include "relaylab/env.hpp"
#include "relaylab/pca.hpp"

namespace relaylab {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Scenario for run index r; the terrain/user layout is re-randomized per run
// unless the campaign pins it.
inline Scenario build_scenario(const LabConfig& cfg, int run) {
  const std::uint64_t seed =
      cfg.campaign.rerandomize_scenario
          ? cfg.scenario.seed + static_cast<std::uint64_t>(run)
          : cfg.scenario.seed;
  TerrainGrid terrain =
      cfg.scenario.heightmap_path.empty()
          ? generate_terrain(seed, cfg.scenario.width_cells,
                             cfg.scenario.height_cells, cfg.scenario.cell_size,
                             cfg.scenario.roughness,
                             cfg.scenario.forest_fraction)
          : load_heightmap(cfg.scenario.heightmap_path);
  Box bounds = cfg.scenario.bounds;
  bounds.x_max = std::min(bounds.x_max, terrain.extent_x());
  bounds.y_max = std::min(bounds.y_max, terrain.extent_y());
  return place_scenario(seed ^ 0x5c65a9b1d2e00f37ull, terrain,
                        cfg.scenario.n_users, bounds,
                        cfg.scenario.max_user_spread);
}

// Warm-up batch of coverage maps at uniformly sampled poses.
inline std::vector<CoverageMap> warmup_maps(const Scenario& scenario,
                                            const ChannelParams& channel,
                                            int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CoverageMap> maps;
  maps.reserve(count);
  const Box& b = scenario.bounds;
  for (int i = 0; i < count; ++i) {
    const Position3D pose{rng.uniform(b.x_min, b.x_max),
                          rng.uniform(b.y_min, b.y_max),
                          rng.uniform(b.z_min, b.z_max)};
    maps.push_back(compute_coverage_map(scenario, pose, channel));
  }
  return maps;
}

struct EpisodeLog {
  int episode = 0;
  double mean_step_reward = 0.0;
  double r1_mean = 0.0, r2_mean = 0.0, r3_mean = 0.0;
  double critic1_loss = 0.0, critic2_loss = 0.0, actor_loss = 0.0;
  double epsilon_sigma = 0.0;
};

struct RunResult {
  int run = 0;
  std::vector<EpisodeLog> episodes;
};

// One seeded training run of one agent kind.
inline RunResult train_run(const LabConfig& cfg, AgentKind kind, int run) {
  const std::uint64_t run_seed = cfg.campaign.seed_base + run;
  const Scenario scenario = build_scenario(cfg, run);

  PcaModel pca_model;
  const PcaModel* pca = nullptr;
  if (kind != AgentKind::TD3) {
    pca_model = fit_pca(warmup_maps(scenario, cfg.channel, cfg.pca.warmup_maps,
                                    run_seed ^ 0x9d2c5680a1b3c2d4ull),
                        cfg.pca.variance_target);
    pca = &pca_model;
  }

  EnvConfig env_cfg = cfg.env;
  env_cfg.bounds = scenario.bounds;
  Environment env(scenario, pca, env_cfg);
  const StateEncoder encoder(kind, cfg.net.layout, pca, cfg.net.raw_image_size);

  const AgentHyper hyper = cfg.hyper_for(kind);
  Environment& e = env;
  EnvState s = e.reset();
  AgentState enc = encoder.encode(s, e.coverage());
  const int aux_len = static_cast<int>(enc.aux.size());

  TD3Agent agent(kind, hyper, cfg.net.layout, encoder.image_shape(), aux_len,
                 env_cfg.max_step, run_seed ^ 0xa02bdbf7bb3c0a7ull);
  PrioritizedBuffer buffer(cfg.per.capacity, cfg.per.alpha, cfg.per.eps,
                           kind == AgentKind::E_TD3);

  const int episodes = cfg.campaign.episodes;
  const long total_steps =
      static_cast<long>(episodes) * env_cfg.episode_len;
  long global_step = 0;

  RunResult result;
  result.run = run;
  result.episodes.reserve(episodes);
  for (int ep = 0; ep < episodes; ++ep) {
    s = e.reset();
    enc = encoder.encode(s, e.coverage());
    EpisodeLog log;
    log.episode = ep;
    log.epsilon_sigma = agent.exploration_sigma(ep);
    int steps = 0, trains = 0;
    bool done = false;
    while (!done) {
      const std::array<double, 3> action = agent.select_action(enc, true, ep);
      StepInfo info;
      const auto [reward, terminal] = e.step(action, &info);
      done = terminal;
      AgentState next_enc = encoder.encode(e.state(), e.coverage());
      buffer.push(Transition{enc, action, reward, next_enc, terminal});
      enc = std::move(next_enc);

      log.mean_step_reward += reward;
      log.r1_mean += info.r1;
      log.r2_mean += info.r2;
      log.r3_mean += info.r3;
      ++steps;
      ++global_step;

      if (buffer.size() >= static_cast<std::size_t>(hyper.batch_size)) {
        const double frac = total_steps > 1
                                ? static_cast<double>(global_step) / total_steps
                                : 1.0;
        const double beta =
            cfg.per.beta_start + (cfg.per.beta_end - cfg.per.beta_start) * frac;
        const TrainDiagnostics diag = agent.train_step(buffer, beta);
        log.critic1_loss += diag.critic1_loss;
        log.critic2_loss += diag.critic2_loss;
        log.actor_loss += diag.actor_loss;
        ++trains;
      }
    }
    log.mean_step_reward /= steps;
    log.r1_mean /= steps;
    log.r2_mean /= steps;
    log.r3_mean /= steps;
    if (trains > 0) {
      log.critic1_loss /= trains;
      log.critic2_loss /= trains;
      log.actor_loss /= trains;
    }
    result.episodes.push_back(log);
  }
  return result;
}

// First episode at which the window-smoothed curve passes `theta` of its
// final plateau. Smoothing is a forward-looking window mean so a clean step
// at episode E is detected exactly at E.
inline int episodes_to_threshold(const std::vector<double>& curve, int window,
                                 double theta) {
  const int n = static_cast<int>(curve.size());
  if (n == 0) return 0;
  auto smoothed = [&](int t) {
    const int hi = std::min(t + window, n);
    double sum = 0.0;
    for (int i = t; i < hi; ++i) sum += curve[i];
    return sum / (hi - t);
  };
  const double plateau = smoothed(std::max(0, n - window));
  // the threshold must sit theta-of-the-way below the plateau on either sign
  const double threshold =
      plateau >= 0.0 ? theta * plateau
                     : plateau - (1.0 - theta) * std::abs(plateau);
  for (int t = 0; t < n; ++t)
    if (smoothed(t) > threshold) return t;
  return n;
}

struct AgentReport {
  AgentKind kind;
  std::vector<double> mean_curve;
  std::vector<double> std_curve;
  std::vector<RunResult> run_logs;              // per run, full episode logs
  std::vector<std::vector<double>> run_curves;  // per run
  std::vector<int> run_episodes_to_threshold;
  int mean_curve_episodes_to_threshold = 0;
  double threshold_fraction = 0.0;
  int runs = 0;
};

struct ConvergenceReport {
  std::vector<AgentReport> agents;
  LabConfig config;
};

// Trains every (agent kind, run) cell of the campaign. Runs may be fanned
// across `parallel` workers; results are aggregated in run order either way.
inline ConvergenceReport run_campaign(const LabConfig& cfg) {
  ConvergenceReport report;
  report.config = cfg;
  for (const std::string& name : cfg.campaign.agents) {
    const AgentKind kind = parse_agent(name);
    AgentReport ar;
    ar.kind = kind;
    ar.runs = cfg.campaign.runs;
    ar.threshold_fraction = cfg.campaign.threshold_fraction;
    std::vector<RunResult> results(cfg.campaign.runs);

    const int workers = std::max(1, cfg.campaign.parallel);
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::atomic<int> next_run{0};
    auto worker = [&]() {
      for (int r = next_run.fetch_add(1); r < cfg.campaign.runs;
           r = next_run.fetch_add(1)) {
        try {
          results[r] = train_run(cfg, kind, r);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mu);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    };
    if (workers == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    if (failure) {
      try {
        std::rethrow_exception(failure);
      } catch (const std::exception& e) {
        throw std::runtime_error("campaign: run failed (seed_base " +
                                 std::to_string(cfg.campaign.seed_base) +
                                 "): " + e.what());
      }
    }

    const int episodes = cfg.campaign.episodes;
    ar.mean_curve.assign(episodes, 0.0);
    ar.std_curve.assign(episodes, 0.0);
    for (const RunResult& rr : results) {
      std::vector<double> curve;
      curve.reserve(episodes);
      for (const EpisodeLog& l : rr.episodes) curve.push_back(l.mean_step_reward);
      for (int ep = 0; ep < episodes; ++ep) ar.mean_curve[ep] += curve[ep];
      ar.run_curves.push_back(std::move(curve));
    }
    for (double& v : ar.mean_curve) v /= cfg.campaign.runs;
    for (int ep = 0; ep < episodes; ++ep) {
      double acc = 0.0;
      for (const auto& c : ar.run_curves) {
        const double d = c[ep] - ar.mean_curve[ep];
        acc += d * d;
      }
      ar.std_curve[ep] = std::sqrt(acc / cfg.campaign.runs);
    }
    for (const auto& c : ar.run_curves)
      ar.run_episodes_to_threshold.push_back(episodes_to_threshold(
          c, cfg.campaign.smooth_window, cfg.campaign.threshold_fraction));
    ar.mean_curve_episodes_to_threshold = episodes_to_threshold(
        ar.mean_curve, cfg.campaign.smooth_window,
        cfg.campaign.threshold_fraction);
    ar.run_logs = std::move(results);
    report.agents.push_back(std::move(ar));
  }
  return report;
}

inline void write_curves_csv(const AgentReport& ar, std::ostream& out) {
  out << "episode,mean_reward,std_reward\n";
  for (std::size_t ep = 0; ep < ar.mean_curve.size(); ++ep)
    out << ep << "," << fmt_double(ar.mean_curve[ep]) << ","
        << fmt_double(ar.std_curve[ep]) << "\n";
}

inline void write_runlog_csv(const RunResult& rr, std::ostream& out) {
  out << "run_id,episode,mean_step_reward,r1_mean,r2_mean,r3_mean,"
         "critic1_loss,critic2_loss,actor_loss,epsilon_sigma\n";
  for (const EpisodeLog& l : rr.episodes)
    out << rr.run << "," << l.episode << "," << fmt_double(l.mean_step_reward)
        << "," << fmt_double(l.r1_mean) << "," << fmt_double(l.r2_mean) << ","
        << fmt_double(l.r3_mean) << "," << fmt_double(l.critic1_loss) << ","
        << fmt_double(l.critic2_loss) << "," << fmt_double(l.actor_loss) << ","
        << fmt_double(l.epsilon_sigma) << "\n";
}

inline nlohmann::json report_to_json(const ConvergenceReport& report) {
  nlohmann::json j;
  j["config"] = config_to_json(report.config);
  j["config_hash"] = config_hash(report.config);
  // headline numbers from the source study, for context only
  j["reference"] = {{"convergence_episodes", {{"etd3", 120}, {"td3pca", 300}, {"td3", 450}}},
                    {"pca_mae_db", 3.0},
                    {"note", "published full-scale values; not asserted"}};
  nlohmann::json agents;
  for (const AgentReport& ar : report.agents) {
    agents[agent_name(ar.kind)] = {
        {"runs", ar.runs},
        {"threshold_fraction", ar.threshold_fraction},
        {"episodes_to_threshold_mean_curve", ar.mean_curve_episodes_to_threshold},
        {"episodes_to_threshold_per_run", ar.run_episodes_to_threshold}};
  }
  j["agents"] = agents;
  return j;
}

struct PcaFidelityRow {
  double variance_target = 0.0;
  int retained = 0;
  int rank = 0;
  double fraction_of_input_dim = 0.0;
  double fraction_of_rank = 0.0;
  double mean_mae_db = 0.0;
  std::vector<double> per_map_mae_db;
};

// Round-trip reconstruction error per variance target over one batch of
// coverage maps.
inline std::vector<PcaFidelityRow> pca_fidelity_report(
    const Scenario& scenario, const ChannelParams& channel,
    const std::vector<double>& variance_targets, int batch = 100,
    std::uint64_t seed = 7) {
  const std::vector<CoverageMap> maps =
      warmup_maps(scenario, channel, batch, seed);
  std::vector<PcaFidelityRow> rows;
  for (double target : variance_targets) {
    const PcaModel model = fit_pca(maps, target);
    PcaFidelityRow row;
    row.variance_target = target;
    row.retained = model.k;
    row.rank = model.n_components();
    row.fraction_of_input_dim =
        static_cast<double>(model.k) / model.input_dim;
    row.fraction_of_rank = static_cast<double>(model.k) / model.n_components();
    for (const CoverageMap& m : maps) {
      const double mae = map_mae(m, reconstruct(model, project(model, m)));
      row.per_map_mae_db.push_back(mae);
      row.mean_mae_db += mae;
    }
    row.mean_mae_db /= maps.size();
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_pca_fidelity_csv(const std::vector<PcaFidelityRow>& rows,
                                   std::ostream& out) {
  out << "variance_target,retained_components,rank,fraction_of_input_dim,"
         "fraction_of_rank,mean_mae_db\n";
  for (const auto& r : rows)
    out << fmt_double(r.variance_target) << "," << r.retained << "," << r.rank
        << "," << fmt_double(r.fraction_of_input_dim) << ","
        << fmt_double(r.fraction_of_rank) << "," << fmt_double(r.mean_mae_db)
        << "\n";
}

}  // namespace relaylab

#endif  // RELAYLAB_HARNESS_HPP
