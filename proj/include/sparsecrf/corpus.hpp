#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sparsecrf/common.hpp"

namespace sparsecrf {

/// One observation sequence: T positions by d columns, plus the gold label
/// per position when the corpus is labelled.
struct Sequence {
  std::vector<std::vector<std::string>> tokens;
  std::vector<std::string> labels;

  std::size_t length() const noexcept { return tokens.size(); }
  std::size_t columns() const noexcept { return tokens.empty() ? 0 : tokens.front().size(); }
  bool labelled() const noexcept { return !labels.empty(); }

  const std::string& token(std::size_t t, std::size_t column) const {
    return tokens[t][column];
  }

  bool operator==(const Sequence&) const = default;
};

struct Corpus {
  std::vector<Sequence> sequences;

  std::size_t size() const noexcept { return sequences.size(); }
  bool empty() const noexcept { return sequences.empty(); }
  std::size_t columns() const noexcept {
    return sequences.empty() ? 0 : sequences.front().columns();
  }
  std::size_t tokens() const noexcept {
    std::size_t n = 0;
    for (const auto& s : sequences) n += s.length();
    return n;
  }

  bool operator==(const Corpus&) const = default;
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace detail

/// Reads the tab-separated column format: one position per line, blank line
/// between sequences, '#' in column 0 for comments. With has_labels the last
/// column is the gold label.
///
/// allow_empty admits a file with no sequence at all (used when labelling).
inline Corpus read_corpus(std::istream& in, bool has_labels, bool allow_empty = false) {
  Corpus corpus;
  Sequence current;
  std::size_t arity = 0;
  std::size_t lineno = 0;
  std::string line;

  auto flush = [&] {
    if (!current.tokens.empty()) corpus.sequences.push_back(std::move(current));
    current = Sequence{};
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line.front() == '#') continue;
    if (line.empty()) {
      flush();
      continue;
    }
    auto fields = detail::split_tabs(line);
    if (arity == 0) {
      arity = fields.size();
      if (has_labels && arity < 2)
        throw ParseError("labelled corpus needs at least one observation column and a label",
                         lineno);
    } else if (fields.size() != arity) {
      throw ParseError("expected " + std::to_string(arity) + " columns, found " +
                           std::to_string(fields.size()),
                       lineno);
    }
    for (const auto& f : fields)
      if (f.empty()) throw ParseError("empty field", lineno);
    if (has_labels) {
      current.labels.push_back(fields.back());
      fields.pop_back();
    }
    current.tokens.push_back(std::move(fields));
  }
  flush();
  if (corpus.empty() && !allow_empty) throw ParseError("corpus contains no sequence");
  return corpus;
}

inline Corpus read_corpus_file(const std::string& path, bool has_labels,
                               bool allow_empty = false) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_corpus(in, has_labels, allow_empty);
}

/// Writes one sequence. When predicted is non-empty it is appended as the
/// last column instead of the gold labels.
inline void write_sequence(std::ostream& out, const Sequence& seq,
                           const std::vector<std::string>* predicted = nullptr) {
  for (std::size_t t = 0; t < seq.length(); ++t) {
    for (std::size_t c = 0; c < seq.tokens[t].size(); ++c) {
      if (c > 0) out << '\t';
      out << seq.tokens[t][c];
    }
    if (predicted)
      out << '\t' << (*predicted)[t];
    else if (seq.labelled())
      out << '\t' << seq.labels[t];
    out << '\n';
  }
  out << '\n';
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& seq : corpus.sequences) write_sequence(out, seq);
}

inline void write_corpus_file(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_corpus(out, corpus);
  if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace sparsecrf
