#include <cmath>
#include <sstream>

#include "doctest.h"
#include "relaylab/nn.hpp"
#include "relaylab/rng.hpp"

using namespace relaylab;
using namespace relaylab::nn;

namespace {

// exercises every layer type in one stack
NetworkSpec composite_spec() {
  NetworkSpec s;
  s.input_shape = {1, 6, 6};
  s.layers = {Conv2D{1, 2, 3, 1}, LeakyReLU{0.01}, Conv2D{2, 2, 2, 2},
              LeakyReLU{0.01}, Flatten{},          ConcatAux{3},
              Dense{5},          LeakyReLU{0.01},  Dense{2},
              TanhScale{1.5}};
  return s;
}

double scalar_out(const Network& net, const Tensor& image, const Tensor& aux,
                  const Tensor& coef) {
  const Tensor out = net.forward(image, aux);
  double f = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) f += coef.data[i] * out.data[i];
  return f;
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-6});
}

}  // namespace

TEST_CASE("backward matches central finite differences for every layer type") {
  const NetworkSpec spec = composite_spec();
  const double h = 1e-4;
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    Rng rng(seed);
    Network net = Network::create(spec, rng);
    Tensor image(spec.input_shape);
    for (double& v : image.data) v = rng.uniform(-1.0, 1.0);
    Tensor aux({spec.aux_len()});
    for (double& v : aux.data) v = rng.uniform(-1.0, 1.0);
    Tensor coef(spec.output_shape());
    for (double& v : coef.data) v = rng.uniform(-1.0, 1.0);

    ForwardCache cache;
    net.forward(image, aux, &cache);
    Gradients g = net.backward(cache, aux, coef);

    auto fd = [&](double& slot) {
      const double keep = slot;
      slot = keep + h;
      const double fp = scalar_out(net, image, aux, coef);
      slot = keep - h;
      const double fm = scalar_out(net, image, aux, coef);
      slot = keep;
      return (fp - fm) / (2.0 * h);
    };

    for (std::size_t li = 0; li < net.weights.size(); ++li) {
      for (std::size_t i = 0; i < net.weights[li].size(); ++i)
        CHECK(rel_err(g.dw[li].data[i], fd(net.weights[li].data[i])) <= 1e-4);
      for (std::size_t i = 0; i < net.biases[li].size(); ++i)
        CHECK(rel_err(g.db[li].data[i], fd(net.biases[li].data[i])) <= 1e-4);
    }
    for (std::size_t i = 0; i < image.size(); ++i)
      CHECK(rel_err(g.dimage.data[i], fd(image.data[i])) <= 1e-4);
    for (std::size_t i = 0; i < aux.size(); ++i)
      CHECK(rel_err(g.daux.data[i], fd(aux.data[i])) <= 1e-4);
  }
}

TEST_CASE("reference conv stack flattens a 30x30 input to 10816 features") {
  NetworkSpec s;
  s.input_shape = {1, 30, 30};
  s.layers = {Conv2D{1, 32, 4, 2}, LeakyReLU{}, Conv2D{32, 64, 2, 1},
              LeakyReLU{},         Conv2D{64, 64, 1, 1}, LeakyReLU{},
              Flatten{},           ConcatAux{1}};
  CHECK(s.output_shape() == std::vector<int>{10817});  // 10816 + aux

  // per-stage: 30 -> 14 -> 13 -> 13
  CHECK(NetworkSpec::conv_out(30, 4, 2) == 14);
  CHECK(NetworkSpec::conv_out(14, 2, 1) == 13);
  CHECK(NetworkSpec::conv_out(13, 1, 1) == 13);
  CHECK(64 * 13 * 13 == 10816);
}

TEST_CASE("huber loss has the expected values and is continuous at delta") {
  auto scalar = [](double e, double delta) {
    Tensor p({1}, {e}), t({1}, {0.0});
    return huber_loss(p, t, delta).first;
  };
  CHECK(scalar(0.5, 1.0) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(scalar(2.0, 1.0) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(scalar(-2.0, 1.0) == doctest::Approx(1.5).epsilon(1e-12));
  for (double delta : {0.3, 1.0, 2.5}) {
    const double below = scalar(delta - 1e-9, delta);
    const double above = scalar(delta + 1e-9, delta);
    CHECK(std::abs(above - below) < 1e-6);
  }

  // gradient equals finite differences on a mixed batch
  Tensor pred({4}, {0.2, -1.7, 0.9, 3.1});
  Tensor target({4}, {0.0, 0.0, 1.2, 2.0});
  std::vector<double> w{1.0, 0.5, 2.0, 1.5};
  auto [loss, grad] = huber_loss(pred, target, 1.0, &w);
  const double h = 1e-6;
  for (int i = 0; i < 4; ++i) {
    Tensor up = pred, dn = pred;
    up.data[i] += h;
    dn.data[i] -= h;
    const double fdg = (huber_loss(up, target, 1.0, &w).first -
                        huber_loss(dn, target, 1.0, &w).first) /
                       (2.0 * h);
    CHECK(rel_err(grad.data[i], fdg) < 1e-7);
  }
  CHECK_THROWS_WITH(huber_loss(pred, Tensor({3}), 1.0),
                    "huber_loss: shape mismatch");
  CHECK_THROWS_WITH(huber_loss(pred, target, 0.0), "huber_loss: delta > 0");
}

TEST_CASE("mse loss is half squared error with matching gradient") {
  Tensor pred({2}, {3.0, -1.0});
  Tensor target({2}, {1.0, -1.0});
  auto [loss, grad] = mse_loss(pred, target);
  CHECK(loss == doctest::Approx(1.0).epsilon(1e-12));  // (0.5*4 + 0)/2
  CHECK(grad.data[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(grad.data[1] == 0.0);
}

TEST_CASE("adam's first update moves parameters by -lr * sign(gradient)") {
  NetworkSpec s;
  s.input_shape = {1, 1, 1};
  s.layers = {Flatten{}, ConcatAux{1}, Dense{2}};
  Rng rng(7);
  Network net = Network::create(s, rng);
  const Network before = net;

  Gradients g;
  g.dw.resize(s.layers.size());
  g.db.resize(s.layers.size());
  g.dw[2] = Tensor(net.weights[2].shape, {0.3, -0.7, 0.0001, -2.0});
  g.db[2] = Tensor({2}, {1.0, -0.5});

  AdamOptimizer opt(1e-3);
  opt.step(net, g);
  for (std::size_t i = 0; i < net.weights[2].size(); ++i) {
    const double gi = g.dw[2].data[i];
    const double want = before.weights[2].data[i] - 1e-3 * (gi > 0 ? 1 : -1);
    CHECK(std::abs(net.weights[2].data[i] - want) < 1e-6);
  }
  CHECK(opt.step_count() == 1);
  g.dw[2].data[0] = std::nan("");
  CHECK_THROWS_WITH(opt.step(net, g), "optimizer_step: non-finite gradient");
}

TEST_CASE("adam drives down the loss on a fixed regression target") {
  const NetworkSpec spec = composite_spec();
  Rng rng(42);
  Network net = Network::create(spec, rng);
  Tensor image(spec.input_shape);
  for (double& v : image.data) v = rng.uniform(-1.0, 1.0);
  Tensor aux({spec.aux_len()}, {0.1, -0.2, 0.4});
  Tensor target({2}, {0.8, -0.3});

  AdamOptimizer opt(1e-3);
  double first = 0.0, last = 0.0;
  for (int it = 0; it < 200; ++it) {
    ForwardCache cache;
    net.forward(image, aux, &cache);
    auto [loss, grad] = mse_loss(cache.output, target);
    if (it == 0) first = loss;
    last = loss;
    opt.step(net, net.backward(cache, aux, grad));
  }
  CHECK(last < 0.05 * first);
}

TEST_CASE("soft_update blends toward the online network") {
  const NetworkSpec spec = composite_spec();
  Rng rng(5);
  Network online = Network::create(spec, rng);
  Network target = Network::create(spec, rng);
  const Network frozen = target;

  Network t0 = frozen;
  soft_update(t0, online, 0.0);
  CHECK(t0.weights[0].data == frozen.weights[0].data);

  Network t1 = frozen;
  soft_update(t1, online, 1.0);
  for (std::size_t li = 0; li < online.weights.size(); ++li)
    CHECK(t1.weights[li].data == online.weights[li].data);

  Network tm = frozen;
  soft_update(tm, online, 0.005);
  for (std::size_t i = 0; i < tm.weights[0].size(); ++i) {
    const double want =
        0.005 * online.weights[0].data[i] + 0.995 * frozen.weights[0].data[i];
    CHECK(std::abs(tm.weights[0].data[i] - want) < 1e-15);
  }
  CHECK_THROWS_WITH(soft_update(tm, online, 1.5), "soft_update: tau in [0,1]");
}

TEST_CASE("malformed specs are rejected with the offending layer index") {
  auto shape_of = [](NetworkSpec s) { return s.output_shape(); };
  NetworkSpec s;
  s.input_shape = {1, 6, 6};

  s.layers = {Conv2D{2, 4, 3, 1}, Flatten{}, ConcatAux{1}};
  CHECK_THROWS_WITH(shape_of(s), "spec: layer 0: in_channels mismatch");

  s.layers = {Conv2D{1, 4, 8, 1}, Flatten{}, ConcatAux{1}};
  CHECK_THROWS_WITH(shape_of(s), "spec: layer 0: kernel larger than input");

  s.layers = {Flatten{}, Conv2D{1, 4, 3, 1}, ConcatAux{1}};
  CHECK_THROWS_WITH(shape_of(s), "spec: layer 1: Conv2D after Flatten");

  s.layers = {Dense{4}, Flatten{}, ConcatAux{1}};
  CHECK_THROWS_WITH(shape_of(s), "spec: layer 0: Dense before Flatten");

  s.layers = {Flatten{}, Dense{4}};
  CHECK_THROWS_WITH(shape_of(s), "spec: exactly one ConcatAux required");

  s.layers = {Flatten{}, ConcatAux{1}, ConcatAux{1}};
  CHECK_THROWS_WITH(shape_of(s), "spec: exactly one ConcatAux required");

  s.layers = {ConcatAux{1}};
  CHECK_THROWS_WITH(shape_of(s), "spec: layer 0: ConcatAux before Flatten");

  s.input_shape = {1, 6};
  s.layers = {Flatten{}, ConcatAux{1}};
  CHECK_THROWS_WITH(shape_of(s), "spec: input_shape must be {ch,h,w}");
}

TEST_CASE("forward validates input shapes and rejects stale caches") {
  const NetworkSpec spec = composite_spec();
  Rng rng(8);
  Network net = Network::create(spec, rng);
  Tensor image(spec.input_shape);
  Tensor aux({spec.aux_len()});
  CHECK_THROWS_WITH(net.forward(Tensor({1, 5, 5}), aux),
                    "forward: image shape mismatch");
  CHECK_THROWS_WITH(net.forward(image, Tensor({2})),
                    "forward: aux length mismatch");
  ForwardCache never;
  CHECK_THROWS_WITH(net.backward(never, aux, Tensor({2})),
                    "backward: missing or stale forward cache");
}

TEST_CASE("zeroed parameters map any input to zero through tanh") {
  const NetworkSpec spec = composite_spec();
  Rng rng(3);
  Network net = Network::create(spec, rng);
  for (auto& w : net.weights)
    for (double& v : w.data) v = 0.0;
  Tensor image(spec.input_shape);
  for (double& v : image.data) v = 1.0;
  Tensor out = net.forward(image, Tensor({3}, {1.0, 1.0, 1.0}));
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("checkpoints round-trip and reject mismatched networks") {
  const NetworkSpec spec = composite_spec();
  Rng rng(11);
  Network net = Network::create(spec, rng);
  std::stringstream ss;
  save_checkpoint(net, ss);

  Rng rng2(99);
  Network other = Network::create(spec, rng2);
  load_checkpoint(other, ss);
  for (std::size_t li = 0; li < net.weights.size(); ++li) {
    CHECK(other.weights[li].data == net.weights[li].data);
    CHECK(other.biases[li].data == net.biases[li].data);
  }

  NetworkSpec small;
  small.input_shape = {1, 1, 1};
  small.layers = {Flatten{}, ConcatAux{1}, Dense{1}};
  Network tiny = Network::create(small, rng2);
  std::stringstream again;
  save_checkpoint(net, again);
  CHECK_THROWS_WITH(load_checkpoint(tiny, again),
                    "load_checkpoint: layer count mismatch");
  std::stringstream junk("not-a-checkpoint 1 3\n");
  CHECK_THROWS_WITH(load_checkpoint(net, junk), "load_checkpoint: bad header");
}
