#pragma once

#include <span>
#include <vector>

#include "sparsecrf/corpus.hpp"
#include "sparsecrf/features.hpp"
#include "sparsecrf/inference.hpp"
#include "sparsecrf/model.hpp"
#include "sparsecrf/parallel.hpp"

namespace sparsecrf {

enum class Decoder { Viterbi, Marginal };

/// Label sequence for every instance.
inline std::vector<std::vector<LabelId>> decode(const Model& model,
                                                std::span<const Instance> instances,
                                                Decoder decoder, Mode mode = Mode::Sparse,
                                                const Execution& exec = {}) {
  std::vector<std::vector<LabelId>> out(instances.size());
  for_each_chunk(instances.size(), exec, [&](std::size_t, std::size_t b, std::size_t e) {
    TransitionCache cache(model, mode);
    for (std::size_t i = b; i < e; ++i)
      out[i] = decoder == Decoder::Viterbi ? viterbi(cache, instances[i]).labels
                                           : posterior_decode(cache, instances[i]);
  });
  return out;
}

struct ErrorCount {
  std::size_t errors = 0;
  std::size_t tokens = 0;
  double rate() const noexcept {
    return tokens == 0 ? 0.0 : static_cast<double>(errors) / static_cast<double>(tokens);
  }
};

inline ErrorCount count_errors(std::span<const Instance> instances,
                               const std::vector<std::vector<LabelId>>& predicted) {
  ErrorCount ec;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (!instances[i].labelled()) throw Error("token error needs a labelled corpus");
    for (std::size_t t = 0; t < instances[i].length(); ++t) {
      ++ec.tokens;
      if (predicted[i][t] != instances[i].gold[t]) ++ec.errors;
    }
  }
  return ec;
}

/// Fraction of positions whose predicted label differs from the gold one.
inline double token_error(const Model& model, std::span<const Instance> instances,
                          Decoder decoder = Decoder::Viterbi, Mode mode = Mode::Sparse,
                          const Execution& exec = {}) {
  return count_errors(instances, decode(model, instances, decoder, mode, exec)).rate();
}

/// Compiles a labelled corpus for evaluation. Gold labels unknown to the
/// model map to the begin marker index, which is never predicted, so they
/// count as errors.
inline std::vector<Instance> compile_for_evaluation(const Model& model, const Corpus& corpus) {
  std::vector<Instance> instances;
  instances.reserve(corpus.size());
  for (const auto& seq : corpus.sequences) {
    if (!seq.labelled()) throw Error("token error needs a labelled corpus");
    Sequence copy = seq;
    copy.labels.clear();
    Instance inst = compile_instance(model, copy);
    inst.gold.resize(seq.length());
    for (std::size_t t = 0; t < seq.length(); ++t)
      inst.gold[t] = model.labels().find(seq.labels[t]).value_or(model.labels().begin());
    instances.push_back(std::move(inst));
  }
  return instances;
}

inline double token_error(const Model& model, const Corpus& corpus,
                          Decoder decoder = Decoder::Viterbi, Mode mode = Mode::Sparse,
                          const Execution& exec = {}) {
  return token_error(model, compile_for_evaluation(model, corpus), decoder, mode, exec);
}

}  // namespace sparsecrf
