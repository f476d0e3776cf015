#pragma once

#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sparsecrf/alphabet.hpp"
#include "sparsecrf/common.hpp"
#include "sparsecrf/parameter_store.hpp"
#include "sparsecrf/templates.hpp"

namespace sparsecrf {

struct ActiveCounts {
  std::size_t mu = 0;
  std::size_t lambda = 0;
  std::size_t total() const noexcept { return mu + lambda; }
  bool operator==(const ActiveCounts&) const = default;
};

/// A linear-chain CRF: label alphabet, templates, the dictionary of blocks
/// (one per distinct extractor/observed-value pair) and the weights.
///
/// A block groups mu[y, x] (when a unigram template uses the extractor) and
/// lambda[y', y, x] (when a bigram template does) for one observed value x.
class Model {
 public:
  struct ExtractorSlot {
    Extractor extractor;
    int unigram_template = -1;
    int bigram_template = -1;
    std::unordered_map<std::string, BlockId> blocks;
  };

  struct BlockInfo {
    std::uint32_t extractor;
    std::string value;
  };

  Model() = default;

  Model(LabelAlphabet labels, std::size_t columns, std::vector<Template> templates)
      : labels_(std::move(labels)), columns_(columns), templates_(std::move(templates)),
        store_(labels_.size()) {
    if (labels_.size() == 0) throw Error("model needs at least one label");
    if (columns_ == 0) throw Error("model needs at least one observation column");
    for (std::size_t i = 0; i < templates_.size(); ++i) {
      const auto& tpl = templates_[i];
      if (tpl.extractor.kind != Extractor::Kind::Bias &&
          static_cast<std::size_t>(tpl.extractor.column) >= columns_)
        throw Error("template '" + tpl.descriptor() + "' reads column " +
                    std::to_string(tpl.extractor.column) + " but the data has " +
                    std::to_string(columns_));
      auto& slot = slot_for(tpl.extractor);
      int& target = tpl.bigram() ? slot.bigram_template : slot.unigram_template;
      if (target >= 0) throw Error("duplicate template '" + tpl.descriptor() + "'");
      target = static_cast<int>(i);
    }
  }

  const LabelAlphabet& labels() const noexcept { return labels_; }
  std::size_t num_labels() const noexcept { return labels_.size(); }
  std::size_t columns() const noexcept { return columns_; }
  const std::vector<Template>& templates() const noexcept { return templates_; }
  const std::vector<ExtractorSlot>& extractors() const noexcept { return slots_; }

  std::size_t num_blocks() const noexcept { return blocks_.size(); }
  const BlockInfo& block(BlockId b) const { return blocks_[b]; }
  bool has_unigram(BlockId b) const { return slots_[blocks_[b].extractor].unigram_template >= 0; }
  bool has_bigram(BlockId b) const { return slots_[blocks_[b].extractor].bigram_template >= 0; }

  /// Readable "<extractor>=<value>" name of a block.
  std::string block_name(BlockId b) const {
    return slots_[blocks_[b].extractor].extractor.describe() + "=" + blocks_[b].value;
  }

  std::optional<BlockId> find_block(std::uint32_t extractor, const std::string& value) const {
    const auto& m = slots_[extractor].blocks;
    auto it = m.find(value);
    if (it == m.end()) return std::nullopt;
    return it->second;
  }

  BlockId intern_block(std::uint32_t extractor, const std::string& value) {
    auto& m = slots_.at(extractor).blocks;
    auto it = m.find(value);
    if (it != m.end()) return it->second;
    BlockId id = store_.add_block();
    blocks_.push_back(BlockInfo{extractor, value});
    m.emplace(value, id);
    return id;
  }

  std::uint32_t extractor_of_template(std::size_t template_id) const {
    const auto& ex = templates_.at(template_id).extractor;
    for (std::uint32_t i = 0; i < slots_.size(); ++i)
      if (slots_[i].extractor == ex) return i;
    throw Error("template without extractor");
  }

  ParameterStore& params() noexcept { return store_; }
  const ParameterStore& params() const noexcept { return store_; }

  ActiveCounts active_counts() const {
    return {store_.active_mu(), store_.active_lambda()};
  }

 private:
  ExtractorSlot& slot_for(const Extractor& ex) {
    for (auto& s : slots_)
      if (s.extractor == ex) return s;
    slots_.push_back(ExtractorSlot{ex, -1, -1, {}});
    return slots_.back();
  }

  LabelAlphabet labels_;
  std::size_t columns_ = 1;
  std::vector<Template> templates_;
  std::vector<ExtractorSlot> slots_;
  std::vector<BlockInfo> blocks_;
  ParameterStore store_;
};

inline ActiveCounts active_counts(const Model& model) { return model.active_counts(); }

// ---------------------------------------------------------------------------
// Text model format

inline constexpr const char* kModelMagic = "sparsecrf-model v1";

inline void save_model(std::ostream& out, const Model& model) {
  const auto& labels = model.labels();
  out << kModelMagic << '\n';
  out << "#labels\n";
  for (const auto& l : labels.labels()) out << l << '\n';
  out << "#begin " << labels.begin_name() << '\n';
  out << "#columns " << model.columns() << '\n';
  out << "#templates\n";
  for (const auto& t : model.templates()) out << t.descriptor() << '\n';
  out << "#weights\n";
  const auto& store = model.params();
  const auto Y = static_cast<LabelId>(model.num_labels());
  for (BlockId b = 0; b < model.num_blocks(); ++b) {
    const auto& info = model.block(b);
    const auto& slot = model.extractors()[info.extractor];
    for (const auto& e : store.mu_block(b).entries())
      out << "U\t" << slot.unigram_template << '\t' << info.value << '\t'
          << labels.name(e.index) << '\t' << format_double(e.value) << '\n';
    for (const auto& e : store.lambda_block(b).entries())
      out << "B\t" << slot.bigram_template << '\t' << info.value << '\t'
          << labels.name(e.index / Y) << '\t' << labels.name(e.index % Y) << '\t'
          << format_double(e.value) << '\n';
  }
}

inline void save_model_file(const std::string& path, const Model& model) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write model to '" + path + "'");
  save_model(out, model);
  out.flush();
  if (!out) throw Error("write failed for '" + path + "'");
}

inline Model load_model(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&](bool required) -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return true;
    }
    if (required) throw ParseError("unexpected end of model file", lineno + 1);
    return false;
  };
  auto expect = [&](const std::string& text) {
    next(true);
    if (line != text) throw ParseError("expected '" + text + "'", lineno);
  };

  next(true);
  if (line != kModelMagic) {
    if (line.rfind("sparsecrf-model", 0) == 0)
      throw ParseError("unsupported model version '" + line + "'", lineno);
    throw ParseError("not a sparsecrf model file", lineno);
  }
  expect("#labels");

  std::vector<std::string> label_names;
  while (true) {
    next(true);
    if (line.rfind("#begin ", 0) == 0) break;
    if (line.empty() || line.front() == '#' || line.find('\t') != std::string::npos)
      throw ParseError("bad label '" + line + "'", lineno);
    label_names.push_back(line);
  }
  LabelAlphabet labels(line.substr(7));
  try {
    for (const auto& l : label_names) {
      auto before = labels.size();
      labels.add(l);
      if (labels.size() == before) throw Error("duplicate label '" + l + "'");
    }
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(e.what(), lineno);
  }

  next(true);
  if (line.rfind("#columns ", 0) != 0) throw ParseError("expected '#columns <d>'", lineno);
  long long columns = 0;
  try {
    columns = parse_integer(line.substr(9));
  } catch (const ParseError& e) {
    throw ParseError(e.what(), lineno);
  }
  if (columns < 1) throw ParseError("column count must be positive", lineno);

  expect("#templates");
  std::vector<Template> templates;
  while (true) {
    next(true);
    if (line == "#weights") break;
    try {
      templates.push_back(parse_template(line));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno);
    }
  }

  Model model;
  try {
    model = Model(std::move(labels), static_cast<std::size_t>(columns), std::move(templates));
  } catch (const Error& e) {
    throw ParseError(e.what(), lineno);
  }

  const auto& lab = model.labels();
  auto label_id = [&](const std::string& name, bool allow_begin) -> LabelId {
    if (allow_begin && name == lab.begin_name()) return lab.begin();
    auto id = lab.find(name);
    if (!id) throw ParseError("unknown label '" + name + "'", lineno);
    return *id;
  };

  while (next(false)) {
    if (line.empty()) continue;
    auto f = detail::split_tabs(line);
    const bool unigram = f[0] == "U";
    if (!(unigram && f.size() == 5) && !(f[0] == "B" && f.size() == 6))
      throw ParseError("malformed weight line", lineno);
    long long tid = 0;
    double value = 0.0;
    try {
      tid = parse_integer(f[1]);
      value = parse_double(f.back());
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno);
    }
    if (tid < 0 || static_cast<std::size_t>(tid) >= model.templates().size())
      throw ParseError("template id out of range", lineno);
    if (model.templates()[static_cast<std::size_t>(tid)].bigram() == unigram)
      throw ParseError("weight kind does not match template kind", lineno);
    if (!std::isfinite(value)) throw ParseError("non-finite weight", lineno);
    if (value == 0.0) throw ParseError("zero weight stored", lineno);
    BlockId b = model.intern_block(model.extractor_of_template(static_cast<std::size_t>(tid)),
                                   f[2]);
    if (unigram) {
      model.params().set_mu(b, label_id(f[3], false), value);
    } else {
      model.params().set_lambda(b, label_id(f[3], true), label_id(f[4], false), value);
    }
  }
  return model;
}

inline Model load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model '" + path + "'");
  return load_model(in);
}

}  // namespace sparsecrf
