#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sparsecrf/common.hpp"

namespace sparsecrf {

/// Dense string <-> index map. Indices follow insertion order.
class Dictionary {
 public:
  std::uint32_t insert(const std::string& symbol) {
    auto [it, inserted] =
        index_.try_emplace(symbol, static_cast<std::uint32_t>(symbols_.size()));
    if (inserted) symbols_.push_back(symbol);
    return it->second;
  }

  std::optional<std::uint32_t> find(const std::string& symbol) const {
    auto it = index_.find(symbol);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& symbol(std::uint32_t id) const { return symbols_.at(id); }
  std::size_t size() const noexcept { return symbols_.size(); }
  bool empty() const noexcept { return symbols_.empty(); }
  const std::vector<std::string>& symbols() const noexcept { return symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// Output labels plus the reserved index of the begin marker y0. The begin
/// marker is never predicted; its index is size(), one past the last label.
class LabelAlphabet {
 public:
  static constexpr const char* kDefaultBegin = "<s>";

  LabelAlphabet() = default;
  explicit LabelAlphabet(std::string begin_name) : begin_name_(std::move(begin_name)) {}

  LabelId add(const std::string& label) {
    if (label == begin_name_)
      throw Error("label '" + label + "' collides with the begin marker");
    return dict_.insert(label);
  }

  std::optional<LabelId> find(const std::string& label) const { return dict_.find(label); }

  LabelId at(const std::string& label) const {
    auto id = dict_.find(label);
    if (!id) throw Error("label '" + label + "' is not in the alphabet");
    return *id;
  }

  const std::string& name(LabelId id) const {
    return id == begin() ? begin_name_ : dict_.symbol(id);
  }

  std::size_t size() const noexcept { return dict_.size(); }
  LabelId begin() const noexcept { return static_cast<LabelId>(dict_.size()); }
  const std::string& begin_name() const noexcept { return begin_name_; }
  const std::vector<std::string>& labels() const noexcept { return dict_.symbols(); }

 private:
  std::string begin_name_ = kDefaultBegin;
  Dictionary dict_;
};

/// Per-column observed strings. Lookups of unseen strings yield unk().
class ObservationAlphabet {
 public:
  explicit ObservationAlphabet(std::size_t columns = 1) : columns_(columns) {
    if (columns == 0) throw Error("observation alphabet needs at least one column");
  }

  std::uint32_t add(std::size_t column, const std::string& value) {
    return columns_.at(column).insert(value);
  }

  std::uint32_t lookup(std::size_t column, const std::string& value) const {
    return columns_.at(column).find(value).value_or(unk(column));
  }

  std::uint32_t unk(std::size_t column) const {
    return static_cast<std::uint32_t>(columns_.at(column).size());
  }

  std::size_t columns() const noexcept { return columns_.size(); }
  const Dictionary& column(std::size_t c) const { return columns_.at(c); }

 private:
  std::vector<Dictionary> columns_;
};

}  // namespace sparsecrf
