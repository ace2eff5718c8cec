#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "bvs/common.hpp"

namespace bvs {

/// Fixed-capacity ring of whole trials. Once full, each push overwrites
/// the oldest entry. Sampling is uniform with replacement.
template <typename T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity, 4096));
  }

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
      serial_.push_back(pushed_);
    } else {
      items_[head_] = std::move(item);
      serial_[head_] = pushed_;
      head_ = (head_ + 1) % capacity_;
    }
    ++pushed_;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_pushed() const { return pushed_; }
  const T& at(std::size_t slot) const { return items_.at(slot); }
  /// Push order (0-based) of the item stored in `slot`.
  std::uint64_t serial(std::size_t slot) const { return serial_.at(slot); }

  std::vector<std::size_t> sample_slots(std::size_t count, Rng& rng) const {
    if (items_.empty()) throw Error("cannot sample from an empty replay buffer");
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<std::size_t> out(count);
    for (auto& s : out) s = pick(rng);
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<T> items_;
  std::vector<std::uint64_t> serial_;
  std::size_t head_ = 0;
  std::uint64_t pushed_ = 0;
};

}  // namespace bvs
