#pragma once

// Fixed-capacity experience ring. Every stored sample carries one Bernoulli mask bit per ensemble
// actor, drawn at insertion and never redrawn.

#include <cstdint>
#include <mutex>
#include <random>
#include <vector>

#include "orsched/errors.hpp"
#include "orsched/mdp.hpp"
#include "orsched/rng.hpp"

namespace orsched {

struct ReplayItem {
  Experience exp;
  std::vector<std::uint8_t> mask;
};

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int actors, double mask_prob)
      : capacity_(capacity), actors_(actors), mask_prob_(mask_prob) {
    if (capacity == 0) throw SizeError("ReplayBuffer: capacity must be positive");
    if (actors < 1) throw SizeError("ReplayBuffer: need at least one actor");
    items_.reserve(capacity);
  }

  std::size_t capacity() const { return capacity_; }
  int actors() const { return actors_; }
  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }
  long inserted() const {
    std::lock_guard lock(mu_);
    return inserted_;
  }

  /// Inserts one sample, overwriting the oldest when full; returns its mask bits.
  std::vector<std::uint8_t> store(Experience exp, Rng& rng) {
    std::bernoulli_distribution bit(mask_prob_);
    std::vector<std::uint8_t> mask(actors_);
    for (auto& m : mask) m = bit(rng) ? 1 : 0;
    std::lock_guard lock(mu_);
    ReplayItem item{std::move(exp), mask};
    if (items_.size() < capacity_) items_.push_back(std::move(item));
    else items_[head_] = std::move(item);
    head_ = (head_ + 1) % capacity_;
    ++inserted_;
    return mask;
  }

  /// Read access for a single-threaded updater; not synchronized with concurrent `store`.
  const ReplayItem& at(std::size_t i) const { return items_.at(i); }

  /// Uniform indices with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const {
    std::lock_guard lock(mu_);
    if (items_.empty()) throw EmptySubsample("ReplayBuffer: sampling from an empty buffer");
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<std::size_t> out(n);
    for (auto& i : out) i = pick(rng);
    return out;
  }

 private:
  std::size_t capacity_;
  int actors_;
  double mask_prob_;
  std::vector<ReplayItem> items_;
  std::size_t head_ = 0;
  long inserted_ = 0;
  mutable std::mutex mu_;
};

}  // namespace orsched
