#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "sparsecrf/common.hpp"

namespace sparsecrf {

/// Sorted (index, value) pairs. Zero values are never stored.
class SparseVector {
 public:
  struct Entry {
    std::uint32_t index;
    double value;
    bool operator==(const Entry&) const = default;
  };

  double get(std::uint32_t index) const {
    auto it = find(index);
    return it != entries_.end() && it->index == index ? it->value : 0.0;
  }

  /// Returns the change in the number of stored entries (-1, 0 or +1).
  int set(std::uint32_t index, double value) {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                               [](const Entry& e, std::uint32_t i) { return e.index < i; });
    const bool present = it != entries_.end() && it->index == index;
    if (value == 0.0) {
      if (!present) return 0;
      entries_.erase(it);
      return -1;
    }
    if (present) {
      it->value = value;
      return 0;
    }
    entries_.insert(it, Entry{index, value});
    return 1;
  }

  std::span<const Entry> entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  /// Entries whose index lies in [lo, hi).
  std::span<const Entry> range(std::uint32_t lo, std::uint32_t hi) const {
    auto cmp = [](const Entry& e, std::uint32_t i) { return e.index < i; };
    auto b = std::lower_bound(entries_.begin(), entries_.end(), lo, cmp);
    auto e = std::lower_bound(b, entries_.end(), hi, cmp);
    return {b, e};
  }

  double l1() const {
    double s = 0.0;
    for (const auto& e : entries_) s += std::abs(e.value);
    return s;
  }
  double squared_l2() const {
    double s = 0.0;
    for (const auto& e : entries_) s += e.value * e.value;
    return s;
  }

 private:
  std::vector<Entry>::const_iterator find(std::uint32_t index) const {
    return std::lower_bound(entries_.begin(), entries_.end(), index,
                            [](const Entry& e, std::uint32_t i) { return e.index < i; });
  }

  std::vector<Entry> entries_;
};

/// Unigram weights mu[block][y] and bigram weights lambda[block][y'][y] where
/// y' ranges over the labels plus the begin marker (index num_labels).
/// Absent entries are zero; stored counts are kept current on every write.
class ParameterStore {
 public:
  ParameterStore() = default;
  explicit ParameterStore(std::size_t num_labels) : labels_(num_labels) {}

  std::size_t num_labels() const noexcept { return labels_; }
  std::size_t num_blocks() const noexcept { return mu_.size(); }
  std::size_t mu_size() const noexcept { return labels_; }
  std::size_t lambda_size() const noexcept { return (labels_ + 1) * labels_; }

  std::uint32_t lambda_index(LabelId from, LabelId to) const noexcept {
    return static_cast<std::uint32_t>(from * labels_ + to);
  }

  BlockId add_block() {
    mu_.emplace_back();
    lambda_.emplace_back();
    return static_cast<BlockId>(mu_.size() - 1);
  }

  double mu(BlockId b, LabelId y) const { return mu_[b].get(y); }
  double lambda(BlockId b, LabelId from, LabelId to) const {
    return lambda_[b].get(lambda_index(from, to));
  }

  void set_mu(BlockId b, LabelId y, double value) {
    check_finite(value);
    active_mu_ += mu_[b].set(y, value);
  }
  void set_lambda(BlockId b, LabelId from, LabelId to, double value) {
    check_finite(value);
    active_lambda_ += lambda_[b].set(lambda_index(from, to), value);
  }

  const SparseVector& mu_block(BlockId b) const { return mu_[b]; }
  const SparseVector& lambda_block(BlockId b) const { return lambda_[b]; }

  std::size_t active_mu() const noexcept { return static_cast<std::size_t>(active_mu_); }
  std::size_t active_lambda() const noexcept {
    return static_cast<std::size_t>(active_lambda_);
  }

  double l1() const {
    double s = 0.0;
    for (std::size_t b = 0; b < mu_.size(); ++b) s += mu_[b].l1() + lambda_[b].l1();
    return s;
  }
  double squared_l2() const {
    double s = 0.0;
    for (std::size_t b = 0; b < mu_.size(); ++b)
      s += mu_[b].squared_l2() + lambda_[b].squared_l2();
    return s;
  }

 private:
  static void check_finite(double value) {
    if (!std::isfinite(value)) throw Error("attempt to store a non-finite weight");
  }

  std::size_t labels_ = 0;
  std::vector<SparseVector> mu_;
  std::vector<SparseVector> lambda_;
  long long active_mu_ = 0;
  long long active_lambda_ = 0;
};

}  // namespace sparsecrf
