#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "sparsecrf/common.hpp"
#include "sparsecrf/corpus.hpp"

namespace sparsecrf {

/// What a template reads from the observation side. Unigram and bigram
/// templates with equal extractors share their observed values, and
/// therefore their blocks.
struct Extractor {
  enum class Kind { Bias, Offset, NGram };

  Kind kind = Kind::Bias;
  int column = 0;
  int offset = 0;  // Offset only
  int width = 1;   // NGram only, odd

  std::string describe() const {
    switch (kind) {
      case Kind::Bias:
        return "bias";
      case Kind::Offset:
        return "col=" + std::to_string(column) + ":off=" + std::to_string(offset);
      case Kind::NGram:
        return "ngram:col=" + std::to_string(column) + ":w=" + std::to_string(width);
    }
    return {};
  }

  bool operator==(const Extractor&) const = default;
};

inline constexpr const char* kBiasValue = "bias";

/// Joins n-gram tokens with '|'; '|' and '\' inside tokens are escaped.
inline std::string join_ngram(const std::vector<const std::string*>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out.push_back('|');
    for (char ch : *parts[i]) {
      if (ch == '|' || ch == '\\') out.push_back('\\');
      out.push_back(ch);
    }
  }
  return out;
}

/// Value observed by the extractor at 0-based position t, or nothing when
/// the offset or window leaves the sequence.
inline std::optional<std::string> extract(const Extractor& ex, const Sequence& seq,
                                          std::size_t t) {
  const auto T = static_cast<long>(seq.length());
  const auto pos = static_cast<long>(t);
  switch (ex.kind) {
    case Extractor::Kind::Bias:
      return std::string(kBiasValue);
    case Extractor::Kind::Offset: {
      long s = pos + ex.offset;
      if (s < 0 || s >= T) return std::nullopt;
      return seq.token(static_cast<std::size_t>(s), static_cast<std::size_t>(ex.column));
    }
    case Extractor::Kind::NGram: {
      long half = ex.width / 2;
      if (pos - half < 0 || pos + half >= T) return std::nullopt;
      std::vector<const std::string*> parts;
      for (long s = pos - half; s <= pos + half; ++s)
        parts.push_back(&seq.token(static_cast<std::size_t>(s),
                                   static_cast<std::size_t>(ex.column)));
      return join_ngram(parts);
    }
  }
  return std::nullopt;
}

struct Template {
  enum class Order { Unigram, Bigram };

  Order order = Order::Unigram;
  Extractor extractor;

  bool bigram() const noexcept { return order == Order::Bigram; }

  /// Descriptor as it appears in template and model files.
  std::string descriptor() const {
    const char* suffix = bigram() ? "b" : "u";
    switch (extractor.kind) {
      case Extractor::Kind::Bias:
        return std::string("bias:") + suffix;
      case Extractor::Kind::Offset:
        return std::string(suffix) + ":col=" + std::to_string(extractor.column) +
               ":off=" + std::to_string(extractor.offset);
      case Extractor::Kind::NGram:
        return std::string("ngram-") + suffix + ":col=" + std::to_string(extractor.column) +
               ":w=" + std::to_string(extractor.width);
    }
    return {};
  }

  bool operator==(const Template&) const = default;
};

namespace detail {

inline int parse_field(const std::string& part, const std::string& key,
                       const std::string& descriptor) {
  if (part.rfind(key + "=", 0) != 0)
    throw ParseError("bad template descriptor '" + descriptor + "': expected " + key + "=");
  try {
    return static_cast<int>(parse_integer(part.substr(key.size() + 1)));
  } catch (const ParseError&) {
    throw ParseError("bad template descriptor '" + descriptor + "'");
  }
}

}  // namespace detail

inline Template parse_template(const std::string& descriptor) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = descriptor.find(':', start);
    parts.push_back(descriptor.substr(start, pos == std::string::npos ? pos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }

  Template tpl;
  const std::string& head = parts[0];
  if (head == "bias") {
    if (parts.size() != 2 || (parts[1] != "u" && parts[1] != "b"))
      throw ParseError("bad template descriptor '" + descriptor + "'");
    tpl.order = parts[1] == "b" ? Template::Order::Bigram : Template::Order::Unigram;
    tpl.extractor.kind = Extractor::Kind::Bias;
    return tpl;
  }
  if (parts.size() != 3) throw ParseError("bad template descriptor '" + descriptor + "'");
  if (head == "u" || head == "b") {
    tpl.order = head == "b" ? Template::Order::Bigram : Template::Order::Unigram;
    tpl.extractor.kind = Extractor::Kind::Offset;
    tpl.extractor.column = detail::parse_field(parts[1], "col", descriptor);
    tpl.extractor.offset = detail::parse_field(parts[2], "off", descriptor);
  } else if (head == "ngram-u" || head == "ngram-b") {
    tpl.order = head == "ngram-b" ? Template::Order::Bigram : Template::Order::Unigram;
    tpl.extractor.kind = Extractor::Kind::NGram;
    tpl.extractor.column = detail::parse_field(parts[1], "col", descriptor);
    tpl.extractor.width = detail::parse_field(parts[2], "w", descriptor);
    if (tpl.extractor.width < 1 || tpl.extractor.width % 2 == 0)
      throw ParseError("n-gram width must be odd and positive in '" + descriptor + "'");
  } else {
    throw ParseError("unknown template kind in '" + descriptor + "'");
  }
  if (tpl.extractor.column < 0)
    throw ParseError("negative column in '" + descriptor + "'");
  return tpl;
}

/// Parses a template file: one descriptor per line, blank lines and
/// '#' comments ignored. Duplicates are rejected.
inline std::vector<Template> read_templates(std::istream& in) {
  std::vector<Template> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    auto last = line.find_last_not_of(" \t");
    try {
      auto tpl = parse_template(line.substr(first, last - first + 1));
      for (const auto& other : out)
        if (other == tpl) throw ParseError("duplicate template '" + tpl.descriptor() + "'");
      out.push_back(tpl);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

inline std::vector<Template> read_templates_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_templates(in);
}

/// The two templates of the basic model: (y_t, x_t) and (y_{t-1}, y_t, x_t).
inline std::vector<Template> default_templates() {
  return {parse_template("u:col=0:off=0"), parse_template("b:col=0:off=0")};
}

}  // namespace sparsecrf
