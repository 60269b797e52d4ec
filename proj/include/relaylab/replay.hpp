#ifndef RELAYLAB_REPLAY_HPP
#define RELAYLAB_REPLAY_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "relaylab/nn.hpp"
#include "relaylab/rng.hpp"

namespace relaylab {

struct AgentState {
  nn::Tensor image;
  nn::Tensor aux;
};

struct Transition {
  AgentState state;
  std::array<double, 3> action{};  // (dx, dy, dz) meters
  double reward = 0.0;
  AgentState next_state;
  bool done = false;
};

namespace detail {

// Binary-indexed sum tree over leaf priorities.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity) : capacity_(capacity) {
    std::size_t leaves = 1;
    while (leaves < capacity) leaves *= 2;
    leaves_ = leaves;
    tree_.assign(2 * leaves_, 0.0);
  }

  void set(std::size_t idx, double value) {
    std::size_t node = leaves_ + idx;
    tree_[node] = value;
    for (node /= 2; node >= 1; node /= 2)
      tree_[node] = tree_[2 * node] + tree_[2 * node + 1];
  }

  double get(std::size_t idx) const { return tree_[leaves_ + idx]; }
  double total() const { return tree_[1]; }

  // Index of the leaf where the prefix sum reaches `target`.
  std::size_t find(double target) const {
    std::size_t node = 1;
    while (node < leaves_) {
      const double left = tree_[2 * node];
      if (target < left) {
        node = 2 * node;
      } else {
        target -= left;
        node = 2 * node + 1;
      }
    }
    return node - leaves_;
  }

 private:
  std::size_t capacity_ = 0;
  std::size_t leaves_ = 0;
  std::vector<double> tree_;
};

}  // namespace detail

struct SampleBatch {
  std::vector<const Transition*> transitions;
  std::vector<double> is_weights;
  std::vector<std::size_t> indices;      // slot indices for priority updates
  std::vector<std::uint64_t> stamps;     // insertion stamps to detect eviction
};

// Proportional prioritized replay over a ring of transitions. With
// `prioritized = false` it degrades to a uniform ring buffer behind the
// same sampling interface.
class PrioritizedBuffer {
 public:
  explicit PrioritizedBuffer(std::size_t capacity, double alpha = 0.6,
                             double eps = 1e-3, bool prioritized = true)
      : capacity_(capacity),
        alpha_(alpha),
        eps_(eps),
        prioritized_(prioritized),
        tree_(capacity) {
    if (capacity == 0)
      throw std::invalid_argument("PrioritizedBuffer: capacity must be > 0");
    storage_.reserve(capacity);
    stamps_.reserve(capacity);
  }

  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  double tree_total() const { return tree_.total(); }
  double priority(std::size_t slot) const { return raw_priority_[slot]; }
  std::uint64_t stale_update_count() const { return stale_updates_; }

  // New transitions receive the max priority seen so far (1.0 initially).
  void push(Transition t) {
    const std::size_t slot = next_;
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(t));
      raw_priority_.push_back(0.0);
      stamps_.push_back(stamp_);
    } else {
      storage_[slot] = std::move(t);
      stamps_[slot] = stamp_;
    }
    ++stamp_;
    raw_priority_[slot] = max_priority_;
    tree_.set(slot, std::pow(max_priority_, alpha_));
    next_ = (next_ + 1) % capacity_;
  }

  // Stratified proportional sampling; IS weights normalized by the batch max.
  SampleBatch sample(std::size_t batch, double beta, Rng& rng) const {
    if (batch == 0 || batch > storage_.size())
      throw std::runtime_error("sample: buffer underfull");
    SampleBatch out;
    out.transitions.reserve(batch);
    out.is_weights.reserve(batch);
    out.indices.reserve(batch);
    const double n = static_cast<double>(storage_.size());

    if (!prioritized_) {
      for (std::size_t i = 0; i < batch; ++i) {
        const std::size_t idx = rng.uniform_index(storage_.size());
        out.transitions.push_back(&storage_[idx]);
        out.indices.push_back(idx);
        out.stamps.push_back(stamps_[idx]);
        out.is_weights.push_back(1.0);
      }
      return out;
    }

    const double total = tree_.total();
    const double segment = total / static_cast<double>(batch);
    double max_w = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
      const double target = (i + rng.uniform()) * segment;
      std::size_t idx = tree_.find(std::min(target, std::nextafter(total, 0.0)));
      if (idx >= storage_.size()) idx = storage_.size() - 1;
      out.transitions.push_back(&storage_[idx]);
      out.indices.push_back(idx);
      out.stamps.push_back(stamps_[idx]);
      const double p = tree_.get(idx) / total;
      const double w = std::pow(n * p, -beta);
      out.is_weights.push_back(w);
      max_w = std::max(max_w, w);
    }
    for (double& w : out.is_weights) w /= max_w;
    return out;
  }

  // p <- |td_error| + eps; entries whose slot was since evicted are skipped.
  void update_priorities(const std::vector<std::size_t>& indices,
                         const std::vector<std::uint64_t>& stamps,
                         const std::vector<double>& td_errors) {
    if (indices.size() != td_errors.size() || indices.size() != stamps.size())
      throw std::invalid_argument("update_priorities: length mismatch");
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const std::size_t slot = indices[i];
      if (slot >= storage_.size()) throw std::out_of_range("update_priorities");
      if (stamps_[slot] != stamps[i]) {
        ++stale_updates_;
        continue;
      }
      const double p = std::abs(td_errors[i]) + eps_;
      raw_priority_[slot] = p;
      max_priority_ = std::max(max_priority_, p);
      tree_.set(slot, std::pow(p, alpha_));
    }
  }

  const Transition& at(std::size_t slot) const { return storage_[slot]; }

 private:
  std::size_t capacity_;
  double alpha_;
  double eps_;
  bool prioritized_;
  std::vector<Transition> storage_;
  std::vector<double> raw_priority_;
  std::vector<std::uint64_t> stamps_;
  std::size_t next_ = 0;
  std::uint64_t stamp_ = 0;
  double max_priority_ = 1.0;
  std::uint64_t stale_updates_ = 0;
  detail::SumTree tree_;
};

}  // namespace relaylab

#endif  // RELAYLAB_REPLAY_HPP
