#include <array>
#include <cmath>

#include "doctest.h"
#include "relaylab/agent.hpp"
#include "relaylab/env.hpp"
#include "relaylab/pca.hpp"
#include "relaylab/terrain.hpp"

using namespace relaylab;

namespace {

// flat 1 km x 1 km world with a handful of fixed entities
Scenario flat_scenario() {
  Scenario s;
  s.terrain = generate_terrain(1, 11, 11, 100.0, 0.0, 0.0);
  s.bs = {100.0, 100.0, kBsHeight};
  s.users = {{300.0, 700.0, kUserHeight},
             {600.0, 200.0, kUserHeight},
             {800.0, 800.0, kUserHeight}};
  s.uav_init = {500.0, 500.0, 100.0};
  s.bounds = {0.0, 1000.0, 0.0, 1000.0, 10.0, 300.0};
  return s;
}

EnvConfig flat_config() {
  EnvConfig c;
  c.bounds = flat_scenario().bounds;
  c.max_step = 50.0;
  c.episode_len = 100;
  return c;
}

PcaModel fit_for(const Scenario& s, const EnvConfig& c) {
  std::vector<CoverageMap> maps;
  Rng rng(21);
  for (int i = 0; i < 8; ++i) {
    Position3D pose{rng.uniform(100.0, 900.0), rng.uniform(100.0, 900.0),
                    rng.uniform(50.0, 250.0)};
    maps.push_back(compute_coverage_map(s, pose, c.channel));
  }
  return fit_pca(maps, 0.995);
}

}  // namespace

TEST_CASE("reset fills the frame stack with identical scores") {
  const Scenario s = flat_scenario();
  const EnvConfig c = flat_config();
  const PcaModel pca = fit_for(s, c);
  Environment env(s, &pca, c);
  EnvState st = env.reset();

  REQUIRE(st.frame_stack[0].size() == static_cast<std::size_t>(pca.k));
  for (int i = 1; i < 4; ++i) CHECK(st.frame_stack[i] == st.frame_stack[0]);
  CHECK(st.step_index == 0);
  CHECK(st.positions_aux.size() == 3 * (2 + s.users.size()));
  // uav starts at the horizontal center of the bounds
  CHECK(st.positions_aux[0] == doctest::Approx(0.5));
  CHECK(st.positions_aux[1] == doctest::Approx(0.5));
  // entities below the flight floor normalize slightly negative; everything
  // stays near the unit box
  for (double v : st.positions_aux) {
    CHECK(v >= -0.1);
    CHECK(v <= 1.1);
  }
  CHECK(env.uav_pose().x == 500.0);
}

TEST_CASE("r1 judges the unclamped candidate and the pose stays in bounds") {
  const Scenario s = flat_scenario();
  const EnvConfig c = flat_config();
  Environment env(s, nullptr, c);
  env.reset();

  StepInfo info;
  env.step({10.0, -10.0, 5.0}, &info);
  CHECK(info.r1 == 1.0);

  // walk to the east edge, then push past it
  Environment edge(s, nullptr, c);
  edge.reset();
  for (int i = 0; i < 12; ++i) edge.step({50.0, 0.0, 0.0});
  CHECK(edge.uav_pose().x == 1000.0);
  edge.step({50.0, 0.0, 0.0}, &info);
  CHECK(info.r1 == 0.0);
  CHECK(edge.uav_pose().x == 1000.0);

  // oversized action is clamped to max_step before anything else
  Environment mid(s, nullptr, c);
  mid.reset();
  mid.step({1000.0, 0.0, 0.0}, &info);
  CHECK(mid.uav_pose().x == 550.0);
  CHECK(info.r1 == 1.0);  // candidate 550 is inside
}

TEST_CASE("r2 is the displacement over mean user distance, signed by approach") {
  Scenario s = flat_scenario();
  s.users = {{0.0, 500.0, kUserHeight}};
  s.uav_init = {500.0, 500.0, kUserHeight};  // level with the user
  s.bounds.z_min = 0.0;                      // keep the low pose unclamped
  EnvConfig c = flat_config();
  c.bounds = s.bounds;
  c.max_step = 100.0;

  Environment env(s, nullptr, c);
  env.reset();
  StepInfo info;
  env.step({-100.0, 0.0, 0.0}, &info);  // 500 -> 400, toward the user
  CHECK(info.r2 == doctest::Approx(100.0 / 400.0).epsilon(1e-12));

  env.step({100.0, 0.0, 0.0}, &info);  // back to 500, away
  CHECK(info.r2 == doctest::Approx(-100.0 / 500.0).epsilon(1e-12));

  env.step({0.0, 0.0, 0.0}, &info);  // no motion, no shaping
  CHECK(info.r2 == 0.0);
}

TEST_CASE("compute_r3 scales the floor magnitude by the mean power magnitude") {
  CHECK(compute_r3({-90.0, -90.0}, -90.0) == doctest::Approx(1.0));
  CHECK(compute_r3({-45.0}, -90.0) == doctest::Approx(2.0));
  CHECK(compute_r3({-80.0, -100.0}, -90.0) == doctest::Approx(1.0));
  CHECK(compute_r3({-60.0}, -90.0) == doctest::Approx(1.5));
  CHECK_THROWS_WITH(compute_r3({}, -90.0), "compute_r3: empty power list");
}

TEST_CASE("step reward is the weighted sum of the three terms") {
  const Scenario s = flat_scenario();
  EnvConfig c = flat_config();
  c.weights = {0.5, 0.3, 0.2};
  Environment env(s, nullptr, c);
  env.reset();
  StepInfo info;
  auto [reward, done] = env.step({25.0, -10.0, 15.0}, &info);
  CHECK(reward ==
        doctest::Approx(0.5 * info.r1 + 0.3 * info.r2 + 0.2 * info.r3)
            .epsilon(1e-12));
  CHECK_FALSE(done);
  CHECK(info.user_powers_dbm.size() == s.users.size());
  // r3 recomputes from the reported powers
  CHECK(info.r3 ==
        doctest::Approx(compute_r3(info.user_powers_dbm, c.min_user_power_dbm)));
}

TEST_CASE("frame stack shifts oldest-out on every step") {
  const Scenario s = flat_scenario();
  const EnvConfig c = flat_config();
  const PcaModel pca = fit_for(s, c);
  Environment env(s, &pca, c);
  EnvState st0 = env.reset();
  const auto initial = st0.frame_stack[0];

  env.step({50.0, 0.0, 0.0});
  const EnvState& st1 = env.state();
  CHECK(st1.frame_stack[0] == initial);
  CHECK(st1.frame_stack[1] == initial);
  CHECK(st1.frame_stack[2] == initial);
  CHECK(st1.frame_stack[3] != initial);
  const auto after_one = st1.frame_stack[3];

  for (int i = 0; i < 3; ++i) env.step({0.0, 50.0, 0.0});
  CHECK(env.state().frame_stack[0] == after_one);  // survived three shifts
}

TEST_CASE("episodes terminate at the configured length") {
  const Scenario s = flat_scenario();
  EnvConfig c = flat_config();
  c.episode_len = 3;
  Environment env(s, nullptr, c);
  env.reset();
  CHECK_FALSE(env.step({1, 1, 1}).second);
  CHECK_FALSE(env.step({1, 1, 1}).second);
  CHECK(env.step({1, 1, 1}).second);
  CHECK(env.state().step_index == 3);

  CHECK_THROWS_WITH(env.step({std::nan(""), 0, 0}),
                    "step: non-finite action");
}

TEST_CASE("pose stays inside bounds under random action sequences") {
  const Scenario s = flat_scenario();
  const EnvConfig c = flat_config();
  Environment env(s, nullptr, c);
  env.reset();
  Rng rng(8);
  for (int i = 0; i < 60; ++i) {
    env.step({rng.uniform(-80.0, 80.0), rng.uniform(-80.0, 80.0),
              rng.uniform(-80.0, 80.0)});
    CHECK(c.bounds.contains(env.uav_pose()));
  }
}

namespace {

// minimal critic/actor family for mechanics tests
NetLayout tiny_layout() {
  NetLayout l;
  l.convs = {{1, 2, 2, 1}};
  l.dense_units = {8, 8};
  return l;
}

AgentState random_state(Rng& rng) {
  AgentState s;
  s.image = nn::Tensor({1, 2, 2});
  for (double& v : s.image.data) v = rng.uniform(-1.0, 1.0);
  s.aux = nn::Tensor({4});
  for (double& v : s.aux.data) v = rng.uniform(0.0, 1.0);
  return s;
}

PrioritizedBuffer filled_buffer(int n, bool done, double reward, Rng& rng) {
  PrioritizedBuffer buf(64, 0.6, 1e-3, false);
  for (int i = 0; i < n; ++i) {
    Transition t;
    t.state = random_state(rng);
    t.next_state = random_state(rng);
    t.action = {rng.uniform(-50.0, 50.0), 0.0, 0.0};
    t.reward = reward;
    t.done = done;
    buf.push(std::move(t));
  }
  return buf;
}

void zero_network(nn::Network& net) {
  for (auto& w : net.weights)
    for (double& v : w.data) v = 0.0;
  for (auto& b : net.biases)
    for (double& v : b.data) v = 0.0;
}

TD3Agent mechanics_agent(double gamma, int policy_delay = 2) {
  AgentHyper h = AgentHyper::for_kind(AgentKind::TD3);
  h.gamma = gamma;
  h.batch_size = 8;
  h.policy_delay = policy_delay;
  return TD3Agent(AgentKind::TD3, h, tiny_layout(), {1, 2, 2}, 4, 50.0, 99);
}

}  // namespace

TEST_CASE("gamma zero reduces the critic target to the immediate reward") {
  Rng rng(12);
  auto buf = filled_buffer(8, false, 1.75, rng);
  TD3Agent agent = mechanics_agent(0.0);
  zero_network(agent.critic1());  // predictions are exactly 0
  auto diag = agent.train_step(buf, 0.4);
  // td = pred - y = -r for every sample
  CHECK(diag.mean_abs_td == doctest::Approx(1.75).epsilon(1e-12));
}

TEST_CASE("terminal transitions mask the bootstrap term") {
  Rng rng(13);
  TD3Agent agent = mechanics_agent(0.95);
  // pin both target critics to known constants via their output bias
  zero_network(agent.critic1_target());
  zero_network(agent.critic2_target());
  agent.critic1_target().biases.back().data[0] = 2.0;
  agent.critic2_target().biases.back().data[0] = 3.0;

  auto done_buf = filled_buffer(8, true, 1.0, rng);
  zero_network(agent.critic1());
  auto diag = agent.train_step(done_buf, 0.4);
  CHECK(diag.mean_abs_td == doctest::Approx(1.0).epsilon(1e-9));  // y = r

  TD3Agent agent2 = mechanics_agent(0.95);
  zero_network(agent2.critic1_target());
  zero_network(agent2.critic2_target());
  agent2.critic1_target().biases.back().data[0] = 2.0;
  agent2.critic2_target().biases.back().data[0] = 3.0;
  auto live_buf = filled_buffer(8, false, 1.0, rng);
  zero_network(agent2.critic1());
  auto diag2 = agent2.train_step(live_buf, 0.4);
  // y = r + gamma * min(2, 3) = 1 + 1.9
  CHECK(diag2.mean_abs_td == doctest::Approx(2.9).epsilon(1e-9));
}

TEST_CASE("the actor updates only every policy_delay critic steps") {
  Rng rng(14);
  auto buf = filled_buffer(16, false, 0.5, rng);
  TD3Agent agent = mechanics_agent(0.95, 3);
  int updates_seen = 0;
  for (int step = 1; step <= 7; ++step) {
    auto diag = agent.train_step(buf, 0.4);
    CHECK(diag.actor_updated == (step % 3 == 0));
    updates_seen += diag.actor_updated;
  }
  CHECK(agent.train_steps() == 7);
  CHECK(agent.actor_updates() == 2);
  CHECK(updates_seen == 2);
}

TEST_CASE("exploration noise decays per episode and stays clamped") {
  TD3Agent agent = mechanics_agent(0.95);
  CHECK(agent.exploration_sigma(0) == doctest::Approx(0.3));
  CHECK(agent.exploration_sigma(1) == doctest::Approx(0.3 * 0.995));
  CHECK(agent.exploration_sigma(100) < agent.exploration_sigma(10));

  Rng rng(15);
  AgentState s = random_state(rng);
  const auto greedy = agent.select_action(s, false, 0);
  const auto greedy2 = agent.select_action(s, false, 0);
  CHECK(greedy == greedy2);  // deterministic without exploration
  for (int i = 0; i < 50; ++i) {
    const auto noisy = agent.select_action(s, true, 0);
    for (double a : noisy) {
      CHECK(a >= -50.0);
      CHECK(a <= 50.0);
    }
  }
}

TEST_CASE("identical seeds give identical short training traces") {
  const Scenario s = flat_scenario();
  EnvConfig c = flat_config();
  c.episode_len = 4;
  const PcaModel pca = fit_for(s, c);
  StateEncoder enc(AgentKind::E_TD3, tiny_layout(), &pca);

  auto trace = [&]() {
    Environment env(s, &pca, c);
    AgentHyper h = AgentHyper::for_kind(AgentKind::E_TD3);
    h.batch_size = 4;
    TD3Agent agent(AgentKind::E_TD3, h, tiny_layout(), enc.image_shape(),
                   3 * (2 + static_cast<int>(s.users.size())), c.max_step, 7);
    PrioritizedBuffer buf(256);
    std::vector<double> rewards;
    for (int ep = 0; ep < 2; ++ep) {
      EnvState st = env.reset();
      bool done = false;
      while (!done) {
        AgentState as = enc.encode(st, env.coverage());
        const auto a = agent.select_action(as, true, ep);
        auto [r, d] = env.step(a);
        Transition t;
        t.state = as;
        t.action = a;
        t.reward = r;
        t.next_state = enc.encode(env.state(), env.coverage());
        t.done = d;
        buf.push(std::move(t));
        if (buf.size() >= 4) agent.train_step(buf, 0.4);
        rewards.push_back(r);
        done = d;
        st = env.state();
      }
    }
    return rewards;
  };

  const auto a = trace();
  const auto b = trace();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("state encoders produce the declared shapes") {
  const Scenario s = flat_scenario();
  const EnvConfig c = flat_config();
  const PcaModel pca = fit_for(s, c);

  StateEncoder raw(AgentKind::TD3, tiny_layout(), nullptr, 8);
  CHECK(raw.image_shape() == std::vector<int>{1, 8, 8});

  StateEncoder etd3(AgentKind::E_TD3, tiny_layout(), &pca);
  CHECK(etd3.image_shape()[1] == 4);
  CHECK(etd3.image_shape()[2] >= pca.k);

  Environment env(s, &pca, c);
  EnvState st = env.reset();
  AgentState enc_raw = raw.encode(st, env.coverage());
  CHECK(enc_raw.image.shape == raw.image_shape());
  for (double v : enc_raw.image.data) CHECK(std::isfinite(v));

  // E-TD3 rows repeat at reset (identical history), and TD3+PCA always
  // repeats the newest frame
  AgentState enc_h = etd3.encode(st, env.coverage());
  const int w = etd3.image_shape()[2];
  for (int r = 1; r < 4; ++r)
    for (int col = 0; col < w; ++col)
      CHECK(enc_h.image.data[r * w + col] == enc_h.image.data[col]);

  env.step({50.0, 0.0, 0.0});
  StateEncoder pca_enc(AgentKind::TD3_PCA, tiny_layout(), &pca);
  AgentState enc_p = pca_enc.encode(env.state(), env.coverage());
  const int wp = pca_enc.image_shape()[2];
  for (int r = 1; r < 4; ++r)
    for (int col = 0; col < wp; ++col)
      CHECK(enc_p.image.data[r * wp + col] == enc_p.image.data[col]);
}
