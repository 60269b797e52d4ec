#ifndef RELAYLAB_NN_HPP
#define RELAYLAB_NN_HPP

#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "relaylab/rng.hpp"

namespace relaylab::nn {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(count(shape), 0.0);
  }
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != count(shape))
      throw std::invalid_argument("Tensor: data length != product(shape)");
  }

  static std::size_t count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int v : s) {
      if (v <= 0) throw std::invalid_argument("Tensor: nonpositive dim");
      n *= static_cast<std::size_t>(v);
    }
    return n;
  }

  std::size_t size() const { return data.size(); }

  void check_finite(const char* where) const {
    for (double v : data)
      if (!std::isfinite(v))
        throw std::runtime_error(std::string(where) + ": non-finite value");
  }
};

// Layer descriptors. The image path is conv -> flatten; the position vector
// joins after Flatten via ConcatAux, then dense layers follow.
struct Conv2D {
  int in_ch, out_ch, kernel, stride;
};
struct LeakyReLU {
  double slope = 0.01;
};
struct Flatten {};
struct ConcatAux {
  int aux_len;
};
struct Dense {
  int units;
};
// Bounded output head: limit * tanh(x).
struct TanhScale {
  double limit;
};

using LayerSpec =
    std::variant<Conv2D, LeakyReLU, Flatten, ConcatAux, Dense, TanhScale>;

struct NetworkSpec {
  std::vector<int> input_shape;  // {channels, height, width}
  std::vector<LayerSpec> layers;

  static int conv_out(int in, int kernel, int stride) {
    return (in - kernel) / stride + 1;
  }

  // Shape inference; throws with the offending layer index on any mismatch.
  std::vector<int> output_shape() const {
    if (input_shape.size() != 3)
      throw std::invalid_argument("spec: input_shape must be {ch,h,w}");
    std::vector<int> cur = input_shape;
    bool flat = false;
    int concat_count = 0;
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const auto fail = [&](const std::string& why) {
        throw std::invalid_argument("spec: layer " + std::to_string(li) +
                                    ": " + why);
      };
      std::visit(
          [&](const auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Conv2D>) {
              if (flat) fail("Conv2D after Flatten");
              if (cur[0] != l.in_ch) fail("in_channels mismatch");
              if (l.kernel < 1 || l.stride < 1) fail("bad kernel/stride");
              const int h = conv_out(cur[1], l.kernel, l.stride);
              const int w = conv_out(cur[2], l.kernel, l.stride);
              if (cur[1] < l.kernel || cur[2] < l.kernel)
                fail("kernel larger than input");
              cur = {l.out_ch, h, w};
            } else if constexpr (std::is_same_v<T, LeakyReLU>) {
              // shape preserved
            } else if constexpr (std::is_same_v<T, Flatten>) {
              if (flat) fail("repeated Flatten");
              cur = {cur[0] * cur[1] * cur[2]};
              flat = true;
            } else if constexpr (std::is_same_v<T, ConcatAux>) {
              if (!flat) fail("ConcatAux before Flatten");
              if (l.aux_len < 1) fail("aux_len must be >= 1");
              cur = {cur[0] + l.aux_len};
              ++concat_count;
            } else if constexpr (std::is_same_v<T, Dense>) {
              if (!flat) fail("Dense before Flatten");
              if (l.units < 1) fail("units must be >= 1");
              cur = {l.units};
            } else if constexpr (std::is_same_v<T, TanhScale>) {
              if (!flat) fail("TanhScale before Flatten");
            }
          },
          layers[li]);
    }
    if (concat_count != 1)
      throw std::invalid_argument("spec: exactly one ConcatAux required");
    if (!flat) throw std::invalid_argument("spec: missing Flatten");
    return cur;
  }

  int aux_len() const {
    for (const auto& l : layers)
      if (const auto* c = std::get_if<ConcatAux>(&l)) return c->aux_len;
    return 0;
  }
};

struct Gradients {
  std::vector<Tensor> dw;  // per layer (empty when layer has no params)
  std::vector<Tensor> db;
  Tensor dimage;
  Tensor daux;
};

struct ForwardCache {
  std::vector<Tensor> inputs;  // activation entering each layer
  Tensor output;
  bool valid = false;
};

class Network {
 public:
  NetworkSpec spec;
  std::vector<Tensor> weights;  // empty Tensor where no params
  std::vector<Tensor> biases;

  Network() = default;

  static Network create(const NetworkSpec& spec, Rng& rng) {
    spec.output_shape();  // validate
    Network net;
    net.spec = spec;
    std::vector<int> cur = spec.input_shape;
    bool flat = false;
    for (const auto& layer : spec.layers) {
      Tensor w, b;
      std::visit(
          [&](const auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Conv2D>) {
              w = Tensor({l.out_ch, l.in_ch, l.kernel, l.kernel});
              b = Tensor({l.out_ch});
              const double bound =
                  1.0 / std::sqrt(double(l.in_ch) * l.kernel * l.kernel);
              for (double& v : w.data) v = rng.uniform(-bound, bound);
              cur = {l.out_ch, NetworkSpec::conv_out(cur[1], l.kernel, l.stride),
                     NetworkSpec::conv_out(cur[2], l.kernel, l.stride)};
            } else if constexpr (std::is_same_v<T, Flatten>) {
              cur = {cur[0] * cur[1] * cur[2]};
              flat = true;
            } else if constexpr (std::is_same_v<T, ConcatAux>) {
              cur = {cur[0] + l.aux_len};
            } else if constexpr (std::is_same_v<T, Dense>) {
              w = Tensor({l.units, cur[0]});
              b = Tensor({l.units});
              const double bound = 1.0 / std::sqrt(double(cur[0]));
              for (double& v : w.data) v = rng.uniform(-bound, bound);
              cur = {l.units};
            }
            (void)flat;
          },
          layer);
      net.weights.push_back(std::move(w));
      net.biases.push_back(std::move(b));
    }
    return net;
  }

  Tensor forward(const Tensor& image, const Tensor& aux,
                 ForwardCache* cache = nullptr) const {
    if (image.shape != spec.input_shape)
      throw std::invalid_argument("forward: image shape mismatch");
    if (static_cast<int>(aux.size()) != spec.aux_len())
      throw std::invalid_argument("forward: aux length mismatch");
    if (cache) {
      cache->inputs.clear();
      cache->valid = false;
    }
    Tensor cur = image;
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
      if (cache) cache->inputs.push_back(cur);
      cur = apply(li, cur, aux);
    }
    cur.check_finite("forward");
    if (cache) {
      cache->output = cur;
      cache->valid = true;
    }
    return cur;
  }

  // Exact gradients of the forward map; requires a cache produced by
  // forward() on the same inputs.
  Gradients backward(const ForwardCache& cache, const Tensor& aux,
                     const Tensor& upstream) const {
    if (!cache.valid || cache.inputs.size() != spec.layers.size())
      throw std::runtime_error("backward: missing or stale forward cache");
    if (upstream.shape != cache.output.shape)
      throw std::invalid_argument("backward: upstream shape mismatch");
    Gradients g;
    g.dw.resize(spec.layers.size());
    g.db.resize(spec.layers.size());
    Tensor grad = upstream;
    for (int li = static_cast<int>(spec.layers.size()) - 1; li >= 0; --li)
      grad = apply_backward(li, cache.inputs[li], aux, grad, g);
    g.dimage = std::move(grad);
    return g;
  }

 private:
  Tensor apply(std::size_t li, const Tensor& in, const Tensor& aux) const {
    const auto& layer = spec.layers[li];
    Tensor out;
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2D>) {
            out = conv_forward(l, in, weights[li], biases[li]);
          } else if constexpr (std::is_same_v<T, LeakyReLU>) {
            out = in;
            for (double& v : out.data)
              if (v < 0.0) v *= l.slope;
          } else if constexpr (std::is_same_v<T, Flatten>) {
            out = Tensor({static_cast<int>(in.size())}, in.data);
          } else if constexpr (std::is_same_v<T, ConcatAux>) {
            out = Tensor({static_cast<int>(in.size()) + l.aux_len});
            std::copy(in.data.begin(), in.data.end(), out.data.begin());
            std::copy(aux.data.begin(), aux.data.end(),
                      out.data.begin() + in.size());
          } else if constexpr (std::is_same_v<T, Dense>) {
            const Tensor& w = weights[li];
            out = Tensor({l.units});
            const int in_n = static_cast<int>(in.size());
            for (int u = 0; u < l.units; ++u) {
              double acc = biases[li].data[u];
              const double* wr = w.data.data() + static_cast<std::size_t>(u) * in_n;
              for (int i = 0; i < in_n; ++i) acc += wr[i] * in.data[i];
              out.data[u] = acc;
            }
          } else if constexpr (std::is_same_v<T, TanhScale>) {
            out = in;
            for (double& v : out.data) v = l.limit * std::tanh(v);
          }
        },
        layer);
    return out;
  }

  Tensor apply_backward(std::size_t li, const Tensor& in, const Tensor& aux,
                        const Tensor& grad_out, Gradients& g) const {
    const auto& layer = spec.layers[li];
    Tensor grad_in;
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2D>) {
            grad_in = conv_backward(l, in, weights[li], grad_out, g.dw[li],
                                    g.db[li]);
          } else if constexpr (std::is_same_v<T, LeakyReLU>) {
            grad_in = grad_out;
            for (std::size_t i = 0; i < in.size(); ++i)
              if (in.data[i] < 0.0) grad_in.data[i] *= l.slope;
          } else if constexpr (std::is_same_v<T, Flatten>) {
            grad_in = Tensor(in.shape, grad_out.data);
          } else if constexpr (std::is_same_v<T, ConcatAux>) {
            grad_in = Tensor(in.shape);
            std::copy(grad_out.data.begin(), grad_out.data.begin() + in.size(),
                      grad_in.data.begin());
            g.daux = Tensor({l.aux_len});
            std::copy(grad_out.data.begin() + in.size(), grad_out.data.end(),
                      g.daux.data.begin());
          } else if constexpr (std::is_same_v<T, Dense>) {
            const Tensor& w = weights[li];
            const int in_n = static_cast<int>(in.size());
            g.dw[li] = Tensor(w.shape);
            g.db[li] = Tensor({l.units});
            grad_in = Tensor(in.shape);
            for (int u = 0; u < l.units; ++u) {
              const double go = grad_out.data[u];
              g.db[li].data[u] = go;
              const std::size_t off = static_cast<std::size_t>(u) * in_n;
              for (int i = 0; i < in_n; ++i) {
                g.dw[li].data[off + i] = go * in.data[i];
                grad_in.data[i] += go * w.data[off + i];
              }
            }
          } else if constexpr (std::is_same_v<T, TanhScale>) {
            grad_in = grad_out;
            for (std::size_t i = 0; i < in.size(); ++i) {
              const double th = std::tanh(in.data[i]);
              grad_in.data[i] *= l.limit * (1.0 - th * th);
            }
          }
        },
        layer);
    return grad_in;
  }

  static Tensor conv_forward(const Conv2D& l, const Tensor& in,
                             const Tensor& w, const Tensor& b) {
    const int H = in.shape[1], W = in.shape[2];
    const int Ho = NetworkSpec::conv_out(H, l.kernel, l.stride);
    const int Wo = NetworkSpec::conv_out(W, l.kernel, l.stride);
    Tensor out({l.out_ch, Ho, Wo});
    for (int o = 0; o < l.out_ch; ++o)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double acc = b.data[o];
          const int iy0 = oy * l.stride, ix0 = ox * l.stride;
          for (int c = 0; c < l.in_ch; ++c)
            for (int ky = 0; ky < l.kernel; ++ky) {
              const double* irow = in.data.data() +
                                   (static_cast<std::size_t>(c) * H + iy0 + ky) * W +
                                   ix0;
              const double* wrow =
                  w.data.data() +
                  ((static_cast<std::size_t>(o) * l.in_ch + c) * l.kernel + ky) *
                      l.kernel;
              for (int kx = 0; kx < l.kernel; ++kx) acc += wrow[kx] * irow[kx];
            }
          out.data[(static_cast<std::size_t>(o) * Ho + oy) * Wo + ox] = acc;
        }
    return out;
  }

  static Tensor conv_backward(const Conv2D& l, const Tensor& in,
                              const Tensor& w, const Tensor& grad_out,
                              Tensor& dw, Tensor& db) {
    const int H = in.shape[1], W = in.shape[2];
    const int Ho = grad_out.shape[1], Wo = grad_out.shape[2];
    dw = Tensor(w.shape);
    db = Tensor({l.out_ch});
    Tensor grad_in(in.shape);
    for (int o = 0; o < l.out_ch; ++o)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          const double go =
              grad_out.data[(static_cast<std::size_t>(o) * Ho + oy) * Wo + ox];
          db.data[o] += go;
          const int iy0 = oy * l.stride, ix0 = ox * l.stride;
          for (int c = 0; c < l.in_ch; ++c)
            for (int ky = 0; ky < l.kernel; ++ky) {
              const std::size_t ioff =
                  (static_cast<std::size_t>(c) * H + iy0 + ky) * W + ix0;
              const std::size_t woff =
                  ((static_cast<std::size_t>(o) * l.in_ch + c) * l.kernel + ky) *
                  l.kernel;
              for (int kx = 0; kx < l.kernel; ++kx) {
                dw.data[woff + kx] += go * in.data[ioff + kx];
                grad_in.data[ioff + kx] += go * w.data[woff + kx];
              }
            }
        }
    return grad_in;
  }
};

// Mean Huber loss and its gradient w.r.t. pred. Optional per-element weights
// (importance sampling); weights scale both loss and gradient.
inline std::pair<double, Tensor> huber_loss(const Tensor& pred,
                                            const Tensor& target, double delta,
                                            const std::vector<double>* weights =
                                                nullptr) {
  if (pred.shape != target.shape)
    throw std::invalid_argument("huber_loss: shape mismatch");
  if (!(delta > 0.0)) throw std::invalid_argument("huber_loss: delta > 0");
  if (weights && weights->size() != pred.size())
    throw std::invalid_argument("huber_loss: weight length mismatch");
  const double n = static_cast<double>(pred.size());
  double loss = 0.0;
  Tensor grad(pred.shape);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double wgt = weights ? (*weights)[i] : 1.0;
    const double e = pred.data[i] - target.data[i];
    if (std::abs(e) <= delta) {
      loss += wgt * 0.5 * e * e;
      grad.data[i] = wgt * e / n;
    } else {
      loss += wgt * delta * (std::abs(e) - 0.5 * delta);
      grad.data[i] = wgt * delta * (e > 0.0 ? 1.0 : -1.0) / n;
    }
  }
  return {loss / n, grad};
}

// Mean squared error (0.5 * e^2 per element) with matching gradient.
inline std::pair<double, Tensor> mse_loss(const Tensor& pred,
                                          const Tensor& target,
                                          const std::vector<double>* weights =
                                              nullptr) {
  if (pred.shape != target.shape)
    throw std::invalid_argument("mse_loss: shape mismatch");
  const double n = static_cast<double>(pred.size());
  double loss = 0.0;
  Tensor grad(pred.shape);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double wgt = weights ? (*weights)[i] : 1.0;
    const double e = pred.data[i] - target.data[i];
    loss += wgt * 0.5 * e * e;
    grad.data[i] = wgt * e / n;
  }
  return {loss / n, grad};
}

// Adam with bias correction over every parameter tensor of a Network.
class AdamOptimizer {
 public:
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamOptimizer(double learning_rate = 1e-3) : lr(learning_rate) {}

  void step(Network& net, const Gradients& g) {
    if (m_w_.empty()) init(net);
    ++t_;
    for (std::size_t li = 0; li < net.weights.size(); ++li) {
      update(net.weights[li], g.dw[li], m_w_[li], v_w_[li]);
      update(net.biases[li], g.db[li], m_b_[li], v_b_[li]);
    }
  }

  long step_count() const { return t_; }

 private:
  void init(const Network& net) {
    for (std::size_t li = 0; li < net.weights.size(); ++li) {
      m_w_.emplace_back(net.weights[li].data.size(), 0.0);
      v_w_.emplace_back(net.weights[li].data.size(), 0.0);
      m_b_.emplace_back(net.biases[li].data.size(), 0.0);
      v_b_.emplace_back(net.biases[li].data.size(), 0.0);
    }
  }

  void update(Tensor& p, const Tensor& grad, std::vector<double>& m,
              std::vector<double>& v) {
    if (p.data.empty()) return;
    if (grad.data.size() != p.data.size())
      throw std::invalid_argument("optimizer_step: gradient shape mismatch");
    const double bc1 = 1.0 - std::pow(beta1, t_);
    const double bc2 = 1.0 - std::pow(beta2, t_);
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double gi = grad.data[i];
      if (!std::isfinite(gi))
        throw std::runtime_error("optimizer_step: non-finite gradient");
      m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
      v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      p.data[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }

  std::vector<std::vector<double>> m_w_, v_w_, m_b_, v_b_;
  long t_ = 0;
};

// theta' <- tau * theta + (1 - tau) * theta'
inline void soft_update(Network& target, const Network& online, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0))
    throw std::invalid_argument("soft_update: tau in [0,1]");
  auto blend = [tau](Tensor& t, const Tensor& o) {
    if (t.data.size() != o.data.size())
      throw std::invalid_argument("soft_update: shape mismatch");
    for (std::size_t i = 0; i < t.data.size(); ++i)
      t.data[i] = tau * o.data[i] + (1.0 - tau) * t.data[i];
  };
  for (std::size_t li = 0; li < target.weights.size(); ++li) {
    blend(target.weights[li], online.weights[li]);
    blend(target.biases[li], online.biases[li]);
  }
}

constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const Network& net, std::ostream& out) {
  out << "relaylab-net " << kCheckpointVersion << " " << net.weights.size()
      << "\n";
  auto dump = [&](const Tensor& t) {
    out << t.data.size();
    for (double v : t.data) {
      char buf[32];
      std::snprintf(buf, sizeof buf, " %.17g", v);
      out << buf;
    }
    out << "\n";
  };
  for (std::size_t li = 0; li < net.weights.size(); ++li) {
    dump(net.weights[li]);
    dump(net.biases[li]);
  }
}

// Loads parameters into a network built from the same spec; shape-checked.
inline void load_checkpoint(Network& net, std::istream& in) {
  std::string tag;
  std::uint32_t version = 0;
  std::size_t layers = 0;
  if (!(in >> tag >> version >> layers) || tag != "relaylab-net")
    throw std::runtime_error("load_checkpoint: bad header");
  if (version != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version");
  if (layers != net.weights.size())
    throw std::runtime_error("load_checkpoint: layer count mismatch");
  auto slurp = [&](Tensor& t) {
    std::size_t n = 0;
    if (!(in >> n)) throw std::runtime_error("load_checkpoint: truncated");
    if (n != t.data.size())
      throw std::runtime_error("load_checkpoint: parameter shape mismatch");
    for (double& v : t.data)
      if (!(in >> v)) throw std::runtime_error("load_checkpoint: truncated");
  };
  for (std::size_t li = 0; li < net.weights.size(); ++li) {
    slurp(net.weights[li]);
    slurp(net.biases[li]);
  }
}

}  // namespace relaylab::nn

#endif  // RELAYLAB_NN_HPP
