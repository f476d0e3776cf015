#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sparsecrf/corpus.hpp"
#include "sparsecrf/model.hpp"
#include "sparsecrf/templates.hpp"

namespace sparsecrf {

struct FeatureKey {
  std::size_t template_id = 0;
  std::string value;

  auto operator<=>(const FeatureKey&) const = default;
};

/// Key whose indicator fires at 0-based position t, if any.
inline std::optional<FeatureKey> extract_keys(std::span<const Template> templates,
                                              std::size_t template_id, const Sequence& seq,
                                              std::size_t t) {
  if (template_id >= templates.size())
    throw Error("unknown template id " + std::to_string(template_id));
  if (t >= seq.length()) throw Error("position out of range");
  auto value = extract(templates[template_id].extractor, seq, t);
  if (!value) return std::nullopt;
  return FeatureKey{template_id, std::move(*value)};
}

/// A sequence compiled against a model: the blocks firing at each position
/// (CSR layout) and the gold label indices when available.
struct Instance {
  std::vector<std::uint32_t> offsets{0};
  std::vector<BlockId> blocks;
  std::vector<LabelId> gold;

  std::size_t length() const noexcept { return offsets.size() - 1; }
  bool labelled() const noexcept { return !gold.empty(); }
  std::span<const BlockId> at(std::size_t t) const {
    return {blocks.data() + offsets[t], blocks.data() + offsets[t + 1]};
  }
};

namespace detail {

template <typename Resolve>
Instance compile_with(const Model& model, const Sequence& seq, Resolve&& resolve) {
  if (seq.length() == 0) throw Error("empty sequence");
  if (seq.columns() != model.columns())
    throw Error("sequence has " + std::to_string(seq.columns()) + " columns, model expects " +
                std::to_string(model.columns()));
  Instance inst;
  const auto num_ex = static_cast<std::uint32_t>(model.extractors().size());
  for (std::size_t t = 0; t < seq.length(); ++t) {
    for (std::uint32_t e = 0; e < num_ex; ++e) {
      auto value = extract(model.extractors()[e].extractor, seq, t);
      if (!value) continue;
      if (std::optional<BlockId> b = resolve(e, *value)) inst.blocks.push_back(*b);
    }
    inst.offsets.push_back(static_cast<std::uint32_t>(inst.blocks.size()));
  }
  if (seq.labelled()) {
    inst.gold.reserve(seq.length());
    for (const auto& l : seq.labels) inst.gold.push_back(model.labels().at(l));
  }
  return inst;
}

}  // namespace detail

/// Compiles a sequence against a fixed model. Values the model has never
/// seen are dropped: they carry no weight.
inline Instance compile_instance(const Model& model, const Sequence& seq) {
  return detail::compile_with(model, seq, [&](std::uint32_t e, const std::string& v) {
    return model.find_block(e, v);
  });
}

/// Compiles a sequence, interning unseen (extractor, value) pairs accepted
/// by admit as new blocks.
template <typename Admit>
Instance compile_instance(Model& model, const Sequence& seq, Admit&& admit) {
  return detail::compile_with(
      model, seq, [&](std::uint32_t e, const std::string& v) -> std::optional<BlockId> {
        if (auto b = model.find_block(e, v)) return b;
        if (admit(e, v)) return model.intern_block(e, v);
        return std::nullopt;
      });
}

inline std::vector<Instance> compile_corpus(const Model& model, const Corpus& corpus) {
  std::vector<Instance> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus.sequences) out.push_back(compile_instance(model, s));
  return out;
}

// ---------------------------------------------------------------------------
// Block index

/// Where one block occurs inside one sequence. Positions are 0-based.
struct Occurrence {
  std::uint32_t sequence;
  std::uint32_t first;
  std::uint32_t last;
  std::vector<std::uint32_t> positions;
};

/// For each block, the sequences (and positions within them) where it
/// fires. Built once per training corpus, read-only afterwards.
class BlockIndex {
 public:
  BlockIndex() = default;

  BlockIndex(std::size_t num_blocks, std::span<const Instance> instances)
      : occurrences_(num_blocks), counts_(num_blocks, 0) {
    for (std::uint32_t i = 0; i < instances.size(); ++i) {
      const auto& inst = instances[i];
      for (std::uint32_t t = 0; t < inst.length(); ++t) {
        for (BlockId b : inst.at(t)) {
          auto& occ = occurrences_[b];
          if (occ.empty() || occ.back().sequence != i)
            occ.push_back(Occurrence{i, t, t, {}});
          occ.back().last = t;
          occ.back().positions.push_back(t);
          ++counts_[b];
        }
      }
    }
    order_.resize(num_blocks);
    for (BlockId b = 0; b < num_blocks; ++b) order_[b] = b;
    std::stable_sort(order_.begin(), order_.end(),
                     [&](BlockId a, BlockId b) { return counts_[a] > counts_[b]; });
  }

  std::size_t num_blocks() const noexcept { return occurrences_.size(); }
  std::span<const Occurrence> occurrences(BlockId b) const { return occurrences_[b]; }
  std::size_t count(BlockId b) const { return counts_[b]; }
  /// Blocks by descending occurrence count, ties by id.
  std::span<const BlockId> update_order() const noexcept { return order_; }

 private:
  std::vector<std::vector<Occurrence>> occurrences_;
  std::vector<std::size_t> counts_;
  std::vector<BlockId> order_;
};

inline BlockIndex build_block_index(const Model& model, std::span<const Instance> instances) {
  return BlockIndex(model.num_blocks(), instances);
}

// ---------------------------------------------------------------------------
// Frequency cut-off

/// Keys observed at least min_count times in the corpus.
inline std::set<FeatureKey> cutoff_filter(const Corpus& corpus,
                                          std::span<const Template> templates,
                                          std::size_t min_count) {
  if (min_count < 1) throw Error("min_count must be at least 1");
  std::map<FeatureKey, std::size_t> counts;
  for (const auto& seq : corpus.sequences)
    for (std::size_t t = 0; t < seq.length(); ++t)
      for (std::size_t k = 0; k < templates.size(); ++k)
        if (auto key = extract_keys(templates, k, seq, t)) ++counts[*key];
  std::set<FeatureKey> admitted;
  for (const auto& [key, n] : counts)
    if (n >= min_count) admitted.insert(key);
  return admitted;
}

// ---------------------------------------------------------------------------

/// Labelled training data compiled against a fresh all-zero model.
struct TrainingSet {
  Model model;
  std::vector<Instance> instances;
  BlockIndex index;
};

/// Builds the label alphabet (order of first appearance), interns every
/// feature value whose count reaches min_count and compiles the corpus.
inline TrainingSet prepare_training(const Corpus& corpus, const std::vector<Template>& templates,
                                    std::size_t min_count = 1,
                                    const std::vector<std::string>& label_order = {}) {
  if (corpus.empty()) throw Error("training corpus is empty");
  LabelAlphabet labels;
  for (const auto& l : label_order) labels.add(l);
  for (const auto& seq : corpus.sequences) {
    if (!seq.labelled()) throw Error("training corpus must be labelled");
    for (const auto& l : seq.labels) labels.add(l);
  }
  TrainingSet ts{Model(std::move(labels), corpus.columns(), templates), {}, {}};

  std::set<std::pair<std::uint32_t, std::string>> admitted;
  const bool filter = min_count > 1;
  if (filter) {
    for (const auto& key : cutoff_filter(corpus, templates, min_count))
      admitted.emplace(ts.model.extractor_of_template(key.template_id), key.value);
  }
  auto admit = [&](std::uint32_t e, const std::string& v) {
    return !filter || admitted.count({e, v}) > 0;
  };
  ts.instances.reserve(corpus.size());
  for (const auto& seq : corpus.sequences)
    ts.instances.push_back(compile_instance(ts.model, seq, admit));
  ts.index = build_block_index(ts.model, ts.instances);
  return ts;
}

}  // namespace sparsecrf
