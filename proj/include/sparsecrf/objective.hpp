#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "sparsecrf/features.hpp"
#include "sparsecrf/inference.hpp"
#include "sparsecrf/model.hpp"
#include "sparsecrf/parallel.hpp"

namespace sparsecrf {

struct PenaltyConfig {
  double rho1 = 0.0;  // l1 weight
  double rho2 = 0.0;  // squared-l2 weight (the penalty is rho2/2 * ||theta||^2)

  void validate() const {
    if (!(rho1 >= 0.0) || !(rho2 >= 0.0) || !std::isfinite(rho1) || !std::isfinite(rho2))
      throw Error("penalty weights must be finite and nonnegative");
  }
};

/// Observed and expected feature counts of one block plus the per-position
/// variance sums used as approximate second derivatives. Lambda arrays are
/// indexed like ParameterStore::lambda_index (begin marker row last).
struct BlockStats {
  std::vector<double> observed_mu, expected_mu, variance_mu;
  std::vector<double> observed_lambda, expected_lambda, variance_lambda;

  bool empty() const noexcept { return expected_mu.empty(); }

  void reset(std::size_t labels) {
    observed_mu.assign(labels, 0.0);
    expected_mu.assign(labels, 0.0);
    variance_mu.assign(labels, 0.0);
    const auto n = (labels + 1) * labels;
    observed_lambda.assign(n, 0.0);
    expected_lambda.assign(n, 0.0);
    variance_lambda.assign(n, 0.0);
  }

  void merge(const BlockStats& o) {
    if (o.empty()) return;
    if (empty()) {
      *this = o;
      return;
    }
    auto add = [](std::vector<double>& a, const std::vector<double>& b) {
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    add(observed_mu, o.observed_mu);
    add(expected_mu, o.expected_mu);
    add(variance_mu, o.variance_mu);
    add(observed_lambda, o.observed_lambda);
    add(expected_lambda, o.expected_lambda);
    add(variance_lambda, o.variance_lambda);
  }

  double grad_mu(LabelId y) const { return expected_mu[y] - observed_mu[y]; }
  double grad_lambda(std::size_t k) const { return expected_lambda[k] - observed_lambda[k]; }
};

/// Statistics for a set of blocks (untouched blocks stay empty).
struct CorpusStats {
  std::vector<BlockStats> blocks;

  void merge(const CorpusStats& o) {
    if (blocks.size() < o.blocks.size()) blocks.resize(o.blocks.size());
    for (std::size_t b = 0; b < o.blocks.size(); ++b) blocks[b].merge(o.blocks[b]);
  }

  /// Largest |dl/dtheta_k| over all computed coordinates.
  double grad_inf_norm() const {
    double g = 0.0;
    for (const auto& s : blocks) {
      if (s.empty()) continue;
      for (std::size_t y = 0; y < s.expected_mu.size(); ++y)
        g = std::max(g, std::abs(s.grad_mu(static_cast<LabelId>(y))));
      for (std::size_t k = 0; k < s.expected_lambda.size(); ++k)
        g = std::max(g, std::abs(s.grad_lambda(k)));
    }
    return g;
  }
};

namespace detail {

/// Adds the contribution of block b at position t of a labelled instance.
/// pair_buf caches the pairwise matrix of position t across blocks.
inline void accumulate_position(const Model& model, const Lattice& L, const Instance& inst,
                                std::size_t t, BlockId b, BlockStats& s,
                                std::vector<double>& pair_buf, std::size_t& pair_t) {
  const std::size_t Y = model.num_labels();
  if (s.empty()) s.reset(Y);
  const LabelId gold = inst.gold[t];
  if (model.has_unigram(b)) {
    for (LabelId y = 0; y < Y; ++y) {
      const double p = L.marginal(t, y);
      s.expected_mu[y] += p;
      s.variance_mu[y] += p * (1.0 - p);
    }
    s.observed_mu[gold] += 1.0;
  }
  if (model.has_bigram(b)) {
    const auto& store = model.params();
    if (t == 0) {
      const LabelId begin = model.labels().begin();
      for (LabelId y = 0; y < Y; ++y) {
        const double p = L.marginal(0, y);
        const auto k = store.lambda_index(begin, y);
        s.expected_lambda[k] += p;
        s.variance_lambda[k] += p * (1.0 - p);
      }
      s.observed_lambda[store.lambda_index(begin, gold)] += 1.0;
    } else {
      if (pair_t != t) {
        pair_buf.resize(Y * Y);
        L.pairwise(t, pair_buf);
        pair_t = t;
      }
      for (std::size_t k = 0; k < Y * Y; ++k) {
        const double p = pair_buf[k];
        s.expected_lambda[k] += p;
        s.variance_lambda[k] += p * (1.0 - p);
      }
      s.observed_lambda[store.lambda_index(inst.gold[t - 1], gold)] += 1.0;
    }
  }
}

inline void require_labels(const Instance& inst) {
  if (!inst.labelled()) throw Error("objective requires labelled sequences");
}

}  // namespace detail

/// Negated conditional log-likelihood, sum_i [log Z(x_i) - theta . F(x_i, y_i)].
inline double log_loss(const Model& model, std::span<const Instance> instances,
                       const Execution& exec = {}) {
  const std::size_t chunks = exec.chunks(instances.size());
  std::vector<double> partial(chunks, 0.0);
  for_each_chunk(instances.size(), exec, [&](std::size_t c, std::size_t b, std::size_t e) {
    TransitionCache cache(model, Mode::Sparse);
    double sum = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      detail::require_labels(instances[i]);
      Lattice L = forward_backward(cache, instances[i]);
      sum += L.log_z() - log_potential(model, instances[i], instances[i].gold);
    }
    partial[c] = sum;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

inline double penalty_value(const Model& model, const PenaltyConfig& penalty) {
  const auto& s = model.params();
  return penalty.rho1 * s.l1() + 0.5 * penalty.rho2 * s.squared_l2();
}

/// log_loss + rho1 ||theta||_1 + rho2/2 ||theta||_2^2.
inline double penalized_objective(const Model& model, std::span<const Instance> instances,
                                  const PenaltyConfig& penalty, const Execution& exec = {}) {
  penalty.validate();
  return log_loss(model, instances, exec) + penalty_value(model, penalty);
}

/// Full statistics: one forward-backward pass per sequence, every block.
inline CorpusStats gradient(const Model& model, std::span<const Instance> instances,
                            const Execution& exec = {}) {
  const std::size_t chunks = exec.chunks(instances.size());
  std::vector<CorpusStats> partial(chunks);
  for_each_chunk(instances.size(), exec, [&](std::size_t c, std::size_t b, std::size_t e) {
    TransitionCache cache(model, Mode::Sparse);
    auto& stats = partial[c];
    stats.blocks.resize(model.num_blocks());
    std::vector<double> pair_buf;
    for (std::size_t i = b; i < e; ++i) {
      const auto& inst = instances[i];
      detail::require_labels(inst);
      Lattice L = forward_backward(cache, inst);
      std::size_t pair_t = static_cast<std::size_t>(-1);
      for (std::size_t t = 0; t < inst.length(); ++t)
        for (BlockId blk : inst.at(t))
          detail::accumulate_position(model, L, inst, t, blk, stats.blocks[blk], pair_buf,
                                      pair_t);
    }
  });
  CorpusStats out;
  out.blocks.resize(model.num_blocks());
  for (const auto& p : partial) out.merge(p);
  return out;
}

/// Statistics of one block from its occurrences only, each sequence
/// processed with a forward-backward truncated to [first, last] occurrence.
/// Returns the number of lattices computed.
inline std::size_t block_statistics(const Model& model, std::span<const Instance> instances,
                                    const BlockIndex& index, BlockId block, BlockStats& out,
                                    const Execution& exec = {}) {
  const auto occ = index.occurrences(block);
  const std::size_t chunks = exec.chunks(occ.size());
  std::vector<BlockStats> partial(chunks);
  for_each_chunk(occ.size(), exec, [&](std::size_t c, std::size_t b, std::size_t e) {
    TransitionCache cache(model, Mode::Sparse);
    std::vector<double> pair_buf;
    for (std::size_t i = b; i < e; ++i) {
      const auto& o = occ[i];
      const auto& inst = instances[o.sequence];
      detail::require_labels(inst);
      Lattice L = truncated_forward_backward(cache, inst, o.first, o.last);
      std::size_t pair_t = static_cast<std::size_t>(-1);
      for (auto t : o.positions)
        detail::accumulate_position(model, L, inst, t, block, partial[c], pair_buf, pair_t);
    }
  });
  out = BlockStats{};
  out.reset(model.num_labels());
  for (const auto& p : partial) out.merge(p);
  return occ.size();
}

/// Statistics restricted to the given blocks.
inline CorpusStats gradient(const Model& model, std::span<const Instance> instances,
                            const BlockIndex& index, std::span<const BlockId> restrict_to,
                            const Execution& exec = {}) {
  CorpusStats out;
  out.blocks.resize(model.num_blocks());
  for (BlockId b : restrict_to) block_statistics(model, instances, index, b, out.blocks[b], exec);
  return out;
}

/// Approximate diagonal second derivatives: per-position Bernoulli variances,
/// sum_i sum_t p (1 - p). Same object as the gradient; the variance arrays
/// carry the curvature.
inline CorpusStats hessian_diag_approx(const Model& model, std::span<const Instance> instances,
                                       const BlockIndex& index,
                                       std::span<const BlockId> restrict_to,
                                       const Execution& exec = {}) {
  return gradient(model, instances, index, restrict_to, exec);
}

}  // namespace sparsecrf
