#pragma once

#include "acrl/constraints.hpp"

#include <memory>
#include <random>
#include <vector>

namespace acrl {

using InstancePtr = std::shared_ptr<const ConstraintInstance>;

/// One environment step. Instances carry their cached interior anchor.
struct Transition {
  Vec obs;
  Vec pre_map_action;
  Vec executed_action;
  double reward = 0.0; // training reward (penalized for "+" variants)
  Vec next_obs;
  bool terminal = false; // true terminations only; time limits bootstrap
  InstancePtr inst;
  InstancePtr next_inst;
};

class ReplayBuffer {
public:
  ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 1u << 16));
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition &operator[](std::size_t i) const { return items_[i]; }

  void add(Transition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
  }

  /// Uniform indices with replacement.
  std::vector<std::size_t> sample(std::size_t batch) {
    if (items_.empty()) throw std::logic_error("ReplayBuffer: sampling from an empty buffer");
    std::uniform_int_distribution<std::size_t> U(0, items_.size() - 1);
    std::vector<std::size_t> idx(batch);
    for (auto &i : idx) i = U(rng_);
    return idx;
  }

private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
  std::mt19937_64 rng_;
};

} // namespace acrl
