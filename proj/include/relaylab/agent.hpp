#ifndef RELAYLAB_AGENT_HPP
#define RELAYLAB_AGENT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "relaylab/env.hpp"
#include "relaylab/nn.hpp"
#include "relaylab/replay.hpp"

namespace relaylab {

enum class AgentKind { TD3, TD3_PCA, E_TD3 };

inline std::string agent_name(AgentKind k) {
  switch (k) {
    case AgentKind::TD3: return "td3";
    case AgentKind::TD3_PCA: return "td3pca";
    case AgentKind::E_TD3: return "etd3";
  }
  throw std::invalid_argument("agent_name: unknown kind");
}

inline AgentKind parse_agent(const std::string& s) {
  if (s == "td3") return AgentKind::TD3;
  if (s == "td3pca") return AgentKind::TD3_PCA;
  if (s == "etd3") return AgentKind::E_TD3;
  throw std::invalid_argument("unknown agent kind '" + s +
                              "' (valid: td3, td3pca, etd3)");
}

// Convolution/dense stack family shared by actor and critics.
struct NetLayout {
  struct Conv {
    int in_ch, out_ch, kernel, stride;
  };
  std::vector<Conv> convs;
  std::vector<int> dense_units;
  double leaky_slope = 0.01;

  // Table-1 architecture.
  static NetLayout paper() {
    NetLayout l;
    l.convs = {{1, 32, 4, 2}, {32, 64, 2, 1}, {64, 64, 1, 1}};
    l.dense_units = {512, 256, 256};
    return l;
  }

  // Smallest square conv input that keeps every layer valid.
  int min_input_size() const {
    for (int s = 1; s <= 4096; ++s) {
      int cur = s;
      bool ok = true;
      for (const auto& c : convs) {
        if (cur < c.kernel) {
          ok = false;
          break;
        }
        cur = (cur - c.kernel) / c.stride + 1;
      }
      if (ok) return s;
    }
    throw std::logic_error("NetLayout: no valid input size");
  }
};

// Builds the shared body: convs -> flatten -> concat(positions/action aux)
// -> dense stack. The final dense layer of the stack is linear (no
// activation) ahead of the output head.
inline nn::NetworkSpec make_body(const NetLayout& layout,
                                 const std::vector<int>& input_shape,
                                 int aux_len) {
  nn::NetworkSpec spec;
  spec.input_shape = input_shape;
  for (const auto& c : layout.convs) {
    spec.layers.push_back(nn::Conv2D{c.in_ch, c.out_ch, c.kernel, c.stride});
    spec.layers.push_back(nn::LeakyReLU{layout.leaky_slope});
  }
  spec.layers.push_back(nn::Flatten{});
  spec.layers.push_back(nn::ConcatAux{aux_len});
  for (std::size_t i = 0; i < layout.dense_units.size(); ++i) {
    spec.layers.push_back(nn::Dense{layout.dense_units[i]});
    if (i + 1 < layout.dense_units.size())
      spec.layers.push_back(nn::LeakyReLU{layout.leaky_slope});
  }
  return spec;
}

inline nn::NetworkSpec make_critic_spec(const NetLayout& layout,
                                        const std::vector<int>& input_shape,
                                        int aux_len, int action_dim) {
  nn::NetworkSpec spec = make_body(layout, input_shape, aux_len + action_dim);
  spec.layers.push_back(nn::Dense{1});
  return spec;
}

inline nn::NetworkSpec make_actor_spec(const NetLayout& layout,
                                       const std::vector<int>& input_shape,
                                       int aux_len, int action_dim,
                                       double max_action) {
  nn::NetworkSpec spec = make_body(layout, input_shape, aux_len);
  spec.layers.push_back(nn::Dense{action_dim});
  spec.layers.push_back(nn::TanhScale{max_action});
  return spec;
}

// Turns environment observations into network inputs for a given agent kind.
class StateEncoder {
 public:
  StateEncoder(AgentKind kind, const NetLayout& layout, const PcaModel* pca,
               int raw_image_size = 30)
      : kind_(kind) {
    const int min_s = layout.min_input_size();
    if (kind == AgentKind::TD3) {
      const int s = std::max(raw_image_size, min_s);
      image_shape_ = {1, s, s};
    } else {
      if (!pca) throw std::invalid_argument("StateEncoder: PCA model required");
      score_scale_ =
          1.0 / std::sqrt(std::max(pca->eigenvalues.empty() ? 1.0
                                                            : pca->eigenvalues[0],
                                   1.0));
      image_shape_ = {1, std::max(4, min_s), std::max(pca->k, min_s)};
    }
  }

  const std::vector<int>& image_shape() const { return image_shape_; }

  AgentState encode(const EnvState& state, const CoverageMap& map) const {
    AgentState out;
    out.aux = nn::Tensor({static_cast<int>(state.positions_aux.size())},
                         state.positions_aux);
    out.image = nn::Tensor(image_shape_);
    const int h = image_shape_[1], w = image_shape_[2];
    if (kind_ == AgentKind::TD3) {
      // bilinear downsample of the dBm map, affinely normalized
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          const double gy = (map.height_cells - 1) * (h > 1 ? double(r) / (h - 1) : 0.0);
          const double gx = (map.width_cells - 1) * (w > 1 ? double(c) / (w - 1) : 0.0);
          int r0 = std::min(static_cast<int>(gy), map.height_cells - 2);
          int c0 = std::min(static_cast<int>(gx), map.width_cells - 2);
          const double fy = gy - r0, fx = gx - c0;
          const double v = map.at(c0, r0) * (1 - fx) * (1 - fy) +
                           map.at(c0 + 1, r0) * fx * (1 - fy) +
                           map.at(c0, r0 + 1) * (1 - fx) * fy +
                           map.at(c0 + 1, r0 + 1) * fx * fy;
          out.image.data[static_cast<std::size_t>(r) * w + c] =
              (v - power_offset_dbm_) / power_scale_db_;
        }
      return out;
    }
    // PCA kinds: one score vector per row. E-TD3 uses the 4-frame history;
    // TD3+PCA repeats the newest frame (no temporal context).
    for (int r = 0; r < 4 && r < h; ++r) {
      const std::vector<double>& frame =
          kind_ == AgentKind::E_TD3 ? state.frame_stack[r] : state.frame_stack[3];
      for (int c = 0; c < w && c < static_cast<int>(frame.size()); ++c)
        out.image.data[static_cast<std::size_t>(r) * w + c] =
            frame[c] * score_scale_;
    }
    return out;
  }

 private:
  AgentKind kind_;
  std::vector<int> image_shape_;
  double score_scale_ = 1.0;
  double power_offset_dbm_ = -100.0;
  double power_scale_db_ = 50.0;
};

struct AgentHyper {
  double actor_lr = 1e-3;
  double critic_lr = 4e-4;
  double gamma = 0.99;
  double tau = 0.005;
  int batch_size = 100;
  int policy_delay = 2;
  double huber_delta = 1.0;        // E-TD3 only; others use pure MSE
  double explore_sigma0 = 0.3;     // fraction of max_action
  double explore_decay = 0.995;    // per episode
  double target_noise_std = 0.2;   // fraction of max_action
  double target_noise_clip = 0.5;  // fraction of max_action

  // Table-3 columns.
  static AgentHyper for_kind(AgentKind kind) {
    AgentHyper h;
    switch (kind) {
      case AgentKind::TD3:
        h.actor_lr = 1e-3;
        h.critic_lr = 4.0e-4;
        h.gamma = 0.99;
        break;
      case AgentKind::TD3_PCA:
        h.actor_lr = 1e-3;
        h.critic_lr = 5e-4;
        h.gamma = 0.95;
        break;
      case AgentKind::E_TD3:
        h.actor_lr = 1e-5;
        h.critic_lr = 6.4e-4;
        h.gamma = 0.95;
        break;
    }
    return h;
  }
};

struct TrainDiagnostics {
  double critic1_loss = 0.0;
  double critic2_loss = 0.0;
  double actor_loss = 0.0;
  double mean_abs_td = 0.0;
  bool actor_updated = false;
};

// Twin-critic deterministic-policy agent (baseline and enhanced variants).
class TD3Agent {
 public:
  TD3Agent(AgentKind kind, const AgentHyper& hyper, const NetLayout& layout,
           const std::vector<int>& image_shape, int aux_len, double max_action,
           std::uint64_t seed)
      : kind_(kind),
        hyper_(hyper),
        max_action_(max_action),
        rng_(seed),
        opt_actor_(hyper.actor_lr),
        opt_c1_(hyper.critic_lr),
        opt_c2_(hyper.critic_lr) {
    const nn::NetworkSpec actor_spec =
        make_actor_spec(layout, image_shape, aux_len, kActionDim, max_action);
    const nn::NetworkSpec critic_spec =
        make_critic_spec(layout, image_shape, aux_len, kActionDim);
    actor_ = nn::Network::create(actor_spec, rng_);
    critic1_ = nn::Network::create(critic_spec, rng_);
    critic2_ = nn::Network::create(critic_spec, rng_);
    actor_target_ = actor_;
    critic1_target_ = critic1_;
    critic2_target_ = critic2_;
  }

  static constexpr int kActionDim = 3;

  AgentKind kind() const { return kind_; }
  const AgentHyper& hyper() const { return hyper_; }
  bool uses_per() const { return kind_ == AgentKind::E_TD3; }
  bool uses_huber() const { return kind_ == AgentKind::E_TD3; }
  long train_steps() const { return train_steps_; }
  long actor_updates() const { return actor_updates_; }
  double exploration_sigma(int episode) const {
    return hyper_.explore_sigma0 * std::pow(hyper_.explore_decay, episode);
  }
  nn::Network& actor() { return actor_; }
  nn::Network& critic1() { return critic1_; }
  nn::Network& critic1_target() { return critic1_target_; }
  nn::Network& critic2_target() { return critic2_target_; }

  std::array<double, 3> select_action(const AgentState& s, bool explore,
                                      int episode) {
    const nn::Tensor out = actor_.forward(s.image, s.aux);
    std::array<double, 3> a{out.data[0], out.data[1], out.data[2]};
    if (explore) {
      const double sigma = exploration_sigma(episode) * max_action_;
      for (double& v : a)
        v = std::clamp(v + rng_.normal(0.0, sigma), -max_action_, max_action_);
    }
    return a;
  }

  TrainDiagnostics train_step(PrioritizedBuffer& buffer, double beta) {
    const std::size_t batch = static_cast<std::size_t>(hyper_.batch_size);
    SampleBatch sb = buffer.sample(batch, beta, rng_);
    TrainDiagnostics diag;

    // target values
    nn::Tensor targets({static_cast<int>(batch)});
    for (std::size_t i = 0; i < batch; ++i) {
      const Transition& t = *sb.transitions[i];
      double y = t.reward;
      if (!t.done) {
        const std::array<double, 3> a_next = smoothed_target_action(t.next_state);
        const nn::Tensor aux1 = critic_aux(t.next_state.aux, a_next);
        const double q1 =
            critic1_target_.forward(t.next_state.image, aux1).data[0];
        const double q2 =
            critic2_target_.forward(t.next_state.image, aux1).data[0];
        y += hyper_.gamma * std::min(q1, q2);
      }
      targets.data[i] = y;
    }

    // critic updates (per-sample backprop, accumulated)
    std::vector<double> td_errors(batch);
    diag.critic1_loss = update_critic(critic1_, opt_c1_, sb, targets, &td_errors);
    diag.critic2_loss = update_critic(critic2_, opt_c2_, sb, targets, nullptr);
    double sum_abs = 0.0;
    for (double e : td_errors) sum_abs += std::abs(e);
    diag.mean_abs_td = sum_abs / static_cast<double>(batch);
    if (uses_per())
      buffer.update_priorities(sb.indices, sb.stamps, td_errors);

    ++train_steps_;
    if (train_steps_ % hyper_.policy_delay == 0) {
      diag.actor_loss = update_actor(sb);
      diag.actor_updated = true;
      ++actor_updates_;
      nn::soft_update(actor_target_, actor_, hyper_.tau);
      nn::soft_update(critic1_target_, critic1_, hyper_.tau);
      nn::soft_update(critic2_target_, critic2_, hyper_.tau);
    } else {
      diag.actor_loss = last_actor_loss_;
    }
    last_actor_loss_ = diag.actor_loss;
    return diag;
  }

  // a' = pi'(s') + clipped smoothing noise, clamped to the action limit.
  std::array<double, 3> smoothed_target_action(const AgentState& next) {
    const nn::Tensor out = actor_target_.forward(next.image, next.aux);
    const double clip = hyper_.target_noise_clip * max_action_;
    const double std_dev = hyper_.target_noise_std * max_action_;
    std::array<double, 3> a{};
    for (int i = 0; i < 3; ++i) {
      const double noise = std::clamp(rng_.normal(0.0, std_dev), -clip, clip);
      a[i] = std::clamp(out.data[i] + noise, -max_action_, max_action_);
    }
    return a;
  }

  nn::Tensor critic_aux(const nn::Tensor& aux,
                        const std::array<double, 3>& action) const {
    nn::Tensor out({static_cast<int>(aux.size()) + kActionDim});
    std::copy(aux.data.begin(), aux.data.end(), out.data.begin());
    for (int i = 0; i < kActionDim; ++i)
      out.data[aux.size() + i] = action[i] / max_action_;
    return out;
  }

 private:
  double update_critic(nn::Network& critic, nn::AdamOptimizer& opt,
                       const SampleBatch& sb, const nn::Tensor& targets,
                       std::vector<double>* td_out) {
    const std::size_t batch = sb.transitions.size();
    nn::Tensor preds({static_cast<int>(batch)});
    std::vector<nn::ForwardCache> caches(batch);
    std::vector<nn::Tensor> auxes;
    auxes.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      const Transition& t = *sb.transitions[i];
      auxes.push_back(critic_aux(t.state.aux, t.action));
      preds.data[i] =
          critic.forward(t.state.image, auxes[i], &caches[i]).data[0];
      if (td_out) (*td_out)[i] = preds.data[i] - targets.data[i];
    }
    const auto [loss, grad] =
        uses_huber() ? nn::huber_loss(preds, targets, hyper_.huber_delta,
                                      &sb.is_weights)
                     : nn::mse_loss(preds, targets, &sb.is_weights);

    nn::Gradients total;
    for (std::size_t i = 0; i < batch; ++i) {
      nn::Tensor upstream({1});
      upstream.data[0] = grad.data[i];
      nn::Gradients g = critic.backward(caches[i], auxes[i], upstream);
      accumulate(total, g);
    }
    opt.step(critic, total);
    return loss;
  }

  double update_actor(const SampleBatch& sb) {
    const std::size_t batch = sb.transitions.size();
    nn::Gradients total;
    double q_sum = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      const Transition& t = *sb.transitions[i];
      nn::ForwardCache actor_cache;
      const nn::Tensor a = actor_.forward(t.state.image, t.state.aux, &actor_cache);
      nn::ForwardCache critic_cache;
      std::array<double, 3> act{a.data[0], a.data[1], a.data[2]};
      const nn::Tensor aux = critic_aux(t.state.aux, act);
      const double q =
          critic1_.forward(t.state.image, aux, &critic_cache).data[0];
      q_sum += q;

      // maximize Q => descend on -Q
      nn::Tensor upstream({1});
      upstream.data[0] = -1.0 / static_cast<double>(batch);
      const nn::Gradients cg = critic1_.backward(critic_cache, aux, upstream);
      // action entered the critic aux scaled by 1/max_action
      nn::Tensor dact({3});
      const std::size_t base = cg.daux.size() - 3;
      for (int j = 0; j < 3; ++j)
        dact.data[j] = cg.daux.data[base + j] / max_action_;
      nn::Gradients ag = actor_.backward(actor_cache, t.state.aux, dact);
      accumulate(total, ag);
    }
    opt_actor_.step(actor_, total);
    return -q_sum / static_cast<double>(batch);
  }

  static void accumulate(nn::Gradients& total, const nn::Gradients& g) {
    if (total.dw.empty()) {
      total = g;
      return;
    }
    for (std::size_t li = 0; li < g.dw.size(); ++li) {
      for (std::size_t i = 0; i < g.dw[li].data.size(); ++i)
        total.dw[li].data[i] += g.dw[li].data[i];
      for (std::size_t i = 0; i < g.db[li].data.size(); ++i)
        total.db[li].data[i] += g.db[li].data[i];
    }
  }

  AgentKind kind_;
  AgentHyper hyper_;
  double max_action_;
  Rng rng_;
  nn::Network actor_, critic1_, critic2_;
  nn::Network actor_target_, critic1_target_, critic2_target_;
  nn::AdamOptimizer opt_actor_, opt_c1_, opt_c2_;
  long train_steps_ = 0;
  long actor_updates_ = 0;
  double last_actor_loss_ = 0.0;
};

inline TD3Agent build_agent(AgentKind kind, const AgentHyper& hyper,
                            const NetLayout& layout,
                            const std::vector<int>& image_shape, int aux_len,
                            double max_action, std::uint64_t seed) {
  return TD3Agent(kind, hyper, layout, image_shape, aux_len, max_action, seed);
}

}  // namespace relaylab

#endif  // RELAYLAB_AGENT_HPP
