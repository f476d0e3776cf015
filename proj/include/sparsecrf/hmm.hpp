#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sparsecrf/common.hpp"
#include "sparsecrf/corpus.hpp"

namespace sparsecrf {

/// First-order HMM used to simulate labelled corpora. Matrices are
/// row-major: transition is labels x labels, emission labels x observations.
struct HmmSpec {
  std::vector<std::string> labels;
  std::vector<std::string> observations;
  std::vector<double> initial;
  std::vector<double> transition;
  std::vector<double> emission;
  std::size_t length = 5;

  std::size_t num_labels() const noexcept { return labels.size(); }
  std::size_t num_observations() const noexcept { return observations.size(); }
  double trans(std::size_t from, std::size_t to) const { return transition[from * labels.size() + to]; }
  double emit(std::size_t y, std::size_t x) const { return emission[y * observations.size() + x]; }

  void validate() const {
    const auto Y = labels.size(), X = observations.size();
    if (Y == 0 || X == 0 || length == 0) throw Error("HMM needs labels, observations and T >= 1");
    if (initial.size() != Y || transition.size() != Y * Y || emission.size() != Y * X)
      throw Error("HMM matrix sizes do not match the alphabets");
    auto check_row = [](const double* row, std::size_t n) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!(row[i] >= 0.0)) throw Error("HMM probabilities must be nonnegative");
        s += row[i];
      }
      if (std::abs(s - 1.0) > 1e-12) throw Error("HMM row does not sum to one");
    };
    check_row(initial.data(), Y);
    for (std::size_t y = 0; y < Y; ++y) {
      check_row(&transition[y * Y], Y);
      check_row(&emission[y * X], X);
    }
  }
};

/// Six labels, five observations, length five. Transitions are uniform
/// except A->E and B->F, which take probability 0.5 (the rest of those rows
/// 0.1). Labels A-D emit a distinct dominant observation with probability
/// 0.8; E and F are ambiguous, 0.24 on 'e' and 0.19 elsewhere.
inline HmmSpec default_hmm_spec() {
  HmmSpec spec;
  spec.labels = {"A", "B", "C", "D", "E", "F"};
  spec.observations = {"a", "b", "c", "d", "e"};
  spec.length = 5;
  const std::size_t Y = 6, X = 5;
  spec.initial.assign(Y, 1.0 / 6.0);
  spec.transition.assign(Y * Y, 1.0 / 6.0);
  auto boost = [&](std::size_t from, std::size_t to) {
    for (std::size_t y = 0; y < Y; ++y) spec.transition[from * Y + y] = y == to ? 0.5 : 0.1;
  };
  boost(0, 4);
  boost(1, 5);
  spec.emission.assign(Y * X, 0.0);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < X; ++x) spec.emission[y * X + x] = x == y ? 0.8 : 0.05;
  for (std::size_t y = 4; y < 6; ++y)
    for (std::size_t x = 0; x < X; ++x) spec.emission[y * X + x] = x == 4 ? 0.24 : 0.19;
  return spec;
}

namespace detail {

/// Portable uniform draw in [0, 1) from the top 53 bits.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t sample_row(const double* row, std::size_t n, std::mt19937_64& rng) {
  const double u = unit_uniform(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += row[i];
    if (u < acc) return i;
  }
  for (std::size_t i = n; i-- > 0;)
    if (row[i] > 0.0) return i;
  return n - 1;
}

}  // namespace detail

/// N independent sequences. Sequence i uses its own generator seeded from
/// (seed, i), so output does not depend on how generation is scheduled.
inline Corpus generate_hmm_corpus(const HmmSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  const auto Y = spec.num_labels(), X = spec.num_observations();
  Corpus corpus;
  corpus.sequences.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    std::mt19937_64 rng(sseq);
    Sequence seq;
    std::size_t y = detail::sample_row(spec.initial.data(), Y, rng);
    for (std::size_t t = 0; t < spec.length; ++t) {
      if (t > 0) y = detail::sample_row(&spec.transition[y * Y], Y, rng);
      const std::size_t x = detail::sample_row(&spec.emission[y * X], X, rng);
      seq.tokens.push_back({spec.observations[x]});
      seq.labels.push_back(spec.labels[y]);
    }
    corpus.sequences.push_back(std::move(seq));
  }
  return corpus;
}

/// Exact expected per-token error of the posterior-marginal decoder:
/// enumerates every observation sequence, runs the HMM forward-backward and
/// weights 1 - max_y P(y_t = y | x) by P(x).
inline double bayes_error(const HmmSpec& spec, double max_sequences = 1e7) {
  spec.validate();
  const auto Y = spec.num_labels(), X = spec.num_observations(), T = spec.length;
  if (std::pow(static_cast<double>(X), static_cast<double>(T)) > max_sequences)
    throw Error("HMM too large for exact Bayes error enumeration");

  std::vector<std::size_t> x(T, 0);
  std::vector<double> alpha(T * Y), beta(T * Y);
  double expected_errors = 0.0;
  while (true) {
    for (std::size_t y = 0; y < Y; ++y) alpha[y] = spec.initial[y] * spec.emit(y, x[0]);
    for (std::size_t t = 1; t < T; ++t)
      for (std::size_t y = 0; y < Y; ++y) {
        double s = 0.0;
        for (std::size_t f = 0; f < Y; ++f) s += alpha[(t - 1) * Y + f] * spec.trans(f, y);
        alpha[t * Y + y] = s * spec.emit(y, x[t]);
      }
    for (std::size_t y = 0; y < Y; ++y) beta[(T - 1) * Y + y] = 1.0;
    for (std::size_t t = T - 1; t-- > 0;)
      for (std::size_t f = 0; f < Y; ++f) {
        double s = 0.0;
        for (std::size_t y = 0; y < Y; ++y)
          s += spec.trans(f, y) * spec.emit(y, x[t + 1]) * beta[(t + 1) * Y + y];
        beta[t * Y + f] = s;
      }
    double px = 0.0;
    for (std::size_t y = 0; y < Y; ++y) px += alpha[(T - 1) * Y + y];
    if (px > 0.0) {
      for (std::size_t t = 0; t < T; ++t) {
        double best = 0.0;
        for (std::size_t y = 0; y < Y; ++y) best = std::max(best, alpha[t * Y + y] * beta[t * Y + y]);
        // P(x) * (1 - max posterior) = P(x) - max joint
        expected_errors += px - best;
      }
    }
    std::size_t k = 0;
    while (k < T && ++x[k] == X) x[k++] = 0;
    if (k == T) break;
  }
  return expected_errors / static_cast<double>(T);
}

}  // namespace sparsecrf
