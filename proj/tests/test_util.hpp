#pragma once

#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sparsecrf/sparsecrf.hpp"

namespace sparsecrf::fixtures {

inline std::vector<std::string> label_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("L" + std::to_string(i));
  return out;
}

/// Random labelled corpus with symbols s0..s{symbols-1} in one column.
inline Corpus random_corpus(std::mt19937_64& rng, std::size_t n, std::size_t min_len,
                            std::size_t max_len, std::size_t symbols, std::size_t labels) {
  Corpus c;
  std::uniform_int_distribution<std::size_t> len(min_len, max_len), sym(0, symbols - 1),
      lab(0, labels - 1);
  for (std::size_t i = 0; i < n; ++i) {
    Sequence s;
    const auto T = len(rng);
    for (std::size_t t = 0; t < T; ++t) {
      s.tokens.push_back({"s" + std::to_string(sym(rng))});
      s.labels.push_back("L" + std::to_string(lab(rng)));
    }
    c.sequences.push_back(std::move(s));
  }
  return c;
}

/// Fills every reachable weight with Uniform(-scale, scale); each bigram
/// weight is zeroed with probability lambda_sparsity.
inline void randomize_weights(Model& m, std::mt19937_64& rng, double scale,
                              double lambda_sparsity, double mu_sparsity = 0.0) {
  std::uniform_real_distribution<double> w(-scale, scale), u(0.0, 1.0);
  const auto Y = static_cast<LabelId>(m.num_labels());
  for (BlockId b = 0; b < m.num_blocks(); ++b) {
    if (m.has_unigram(b))
      for (LabelId y = 0; y < Y; ++y) {
        const double v = w(rng);
        m.params().set_mu(b, y, u(rng) < mu_sparsity ? 0.0 : v);
      }
    if (m.has_bigram(b))
      for (LabelId f = 0; f <= Y; ++f)
        for (LabelId y = 0; y < Y; ++y) {
          const double v = w(rng);
          m.params().set_lambda(b, f, y, u(rng) < lambda_sparsity ? 0.0 : v);
        }
  }
}

/// A training set with all label names present, in order L0..L{labels-1}.
inline TrainingSet random_problem(std::mt19937_64& rng, std::size_t n, std::size_t min_len,
                                  std::size_t max_len, std::size_t symbols, std::size_t labels,
                                  const std::vector<Template>& templates = default_templates()) {
  Corpus c = random_corpus(rng, n, min_len, max_len, symbols, labels);
  return prepare_training(c, templates, 1, label_names(labels));
}

inline double rel_err(double a, double b, double floor = 1e-300) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Every weight the model can hold for its blocks.
inline std::vector<oracle::Coordinate> all_coordinates(const Model& m) {
  std::vector<oracle::Coordinate> out;
  const auto Y = static_cast<LabelId>(m.num_labels());
  for (BlockId b = 0; b < m.num_blocks(); ++b) {
    if (m.has_unigram(b))
      for (LabelId y = 0; y < Y; ++y) out.push_back({b, false, 0, y});
    if (m.has_bigram(b))
      for (LabelId f = 0; f <= Y; ++f)
        for (LabelId y = 0; y < Y; ++y) out.push_back({b, true, f, y});
  }
  return out;
}

inline double grad_of(const Model& m, const CorpusStats& s, const oracle::Coordinate& k) {
  const auto& bs = s.blocks.at(k.block);
  if (bs.empty()) return 0.0;
  return k.bigram ? bs.grad_lambda(m.params().lambda_index(k.from, k.to)) : bs.grad_mu(k.to);
}

inline double hess_of(const Model& m, const CorpusStats& s, const oracle::Coordinate& k) {
  const auto& bs = s.blocks.at(k.block);
  if (bs.empty()) return 0.0;
  return k.bigram ? bs.variance_lambda[m.params().lambda_index(k.from, k.to)]
                  : bs.variance_mu[k.to];
}

/// Central difference of log_loss along one coordinate.
inline double fd_gradient(Model& m, std::span<const Instance> instances,
                          const oracle::Coordinate& k) {
  const double theta = k.get(m);
  const double g = oracle::finite_diff(
      [&](double v) {
        k.set(m, v);
        return log_loss(m, instances);
      },
      theta, oracle::fd_step(theta));
  k.set(m, theta);
  return g;
}

/// Central difference of the analytic gradient along one coordinate.
inline double fd_hessian(Model& m, std::span<const Instance> instances,
                         const oracle::Coordinate& k) {
  const double theta = k.get(m);
  const double h = oracle::finite_diff(
      [&](double v) {
        k.set(m, v);
        return grad_of(m, gradient(m, instances), k);
      },
      theta, oracle::fd_step(theta));
  k.set(m, theta);
  return h;
}

}  // namespace sparsecrf::fixtures
