#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rng.hpp"

namespace gvfl {

enum class SampleMode { Priority, Uniform };

// Ring buffer with a binary sum tree over priorities.  Leaves sit at
// [capacity, 2*capacity); internal node i sums children 2i and 2i+1.  The
// tree is rebuilt exactly (bottom-up from leaves) every `capacity` pushes so
// float drift cannot accumulate across long runs.
template <class T>
class SumTreeBuffer {
 public:
  explicit SumTreeBuffer(size_t capacity)
      : capacity_(capacity), entries_(capacity), tree_(2 * capacity, 0.0) {
    if (capacity == 0) throw std::invalid_argument("buffer capacity must be > 0");
  }

  size_t capacity() const { return capacity_; }
  size_t size() const { return size_; }

  void push(T entry, double priority) {
    if (!std::isfinite(priority) || priority < 0.0)
      throw std::invalid_argument("push: priority must be finite and >= 0");
    entries_[write_] = std::move(entry);
    set_priority(write_, priority);
    write_ = (write_ + 1) % capacity_;
    if (size_ < capacity_) ++size_;
    if (++pushes_since_rebuild_ >= capacity_) rebuild();
  }

  void set_priority(size_t idx, double priority) {
    if (idx >= capacity_) throw std::out_of_range("set_priority: bad index");
    size_t node = capacity_ + idx;
    double delta = priority - tree_[node];
    tree_[node] = priority;
    for (node /= 2; node >= 1; node /= 2) tree_[node] += delta;
  }

  double priority(size_t idx) const {
    if (idx >= size_) throw std::out_of_range("priority: bad index");
    return tree_[capacity_ + idx];
  }

  double total_priority() const { return size_ ? tree_[1] : 0.0; }

  double mean_priority() const {
    if (size_ == 0) throw std::logic_error("mean_priority on empty buffer");
    return total_priority() / static_cast<double>(size_);
  }

  const T& operator[](size_t idx) const {
    if (idx >= size_) throw std::out_of_range("buffer index out of range");
    return entries_[idx];
  }
  T& operator[](size_t idx) {
    if (idx >= size_) throw std::out_of_range("buffer index out of range");
    return entries_[idx];
  }

  // Draws `batch` indices with replacement.  Priority mode falls back to
  // uniform when the total priority is zero; the caller can detect that via
  // last_sample_uniform_fallback().
  std::vector<size_t> sample(size_t batch, SampleMode mode, Rng& rng) {
    if (size_ == 0) throw std::logic_error("sample on empty buffer");
    last_fallback_ = false;
    std::vector<size_t> out(batch);
    if (mode == SampleMode::Uniform ||
        (mode == SampleMode::Priority && total_priority() <= 0.0)) {
      if (mode == SampleMode::Priority) last_fallback_ = true;
      for (auto& idx : out)
        idx = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(size_)));
      return out;
    }
    for (auto& idx : out) {
      double s = rng.uniform01() * tree_[1];
      idx = retrieve(s);
    }
    return out;
  }

  bool last_sample_uniform_fallback() const { return last_fallback_; }

  // Exact recomputation of all internal sums.
  void rebuild() {
    pushes_since_rebuild_ = 0;
    for (size_t i = capacity_ - 1; i >= 1; --i)
      tree_[i] = tree_[2 * i] + tree_[2 * i + 1];
  }

 private:
  size_t retrieve(double s) const {
    size_t node = 1;
    while (node < capacity_) {
      size_t left = 2 * node;
      if (s < tree_[left]) {
        node = left;
      } else {
        s -= tree_[left];
        node = left + 1;
      }
    }
    size_t idx = node - capacity_;
    if (idx >= size_) idx = size_ - 1;  // float edge against empty leaves
    return idx;
  }

  size_t capacity_;
  std::vector<T> entries_;
  std::vector<double> tree_;
  size_t size_ = 0;
  size_t write_ = 0;
  size_t pushes_since_rebuild_ = 0;
  bool last_fallback_ = false;
};

}  // namespace gvfl
