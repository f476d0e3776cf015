#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include "sparsecrf/features.hpp"
#include "sparsecrf/model.hpp"

namespace sparsecrf {

enum class Mode { Dense, Sparse };

/// M(y', y) = exp(sum of active lambda) - 1 over the pairs with at least one
/// stored lambda. At the first position the only source is the begin marker.
struct SparseTransitionDelta {
  struct Entry {
    LabelId from;
    LabelId to;
    double lambda;  // summed bigram weight
    double m;       // expm1(lambda)
  };

  std::vector<Entry> entries;  // sorted by (from, to)
  std::size_t r() const noexcept { return entries.size(); }
};

/// Everything the recursions need at one position: log and exp unigram
/// potentials, the sparse delta and, for dense mode, the full matrices.
struct PositionTransition {
  bool first = false;  // source row is the begin marker
  std::size_t labels = 0;
  std::vector<double> unigram;      // u(y)
  std::vector<double> exp_unigram;  // exp(u(y))
  SparseTransitionDelta delta;
  // Entries grouped by destination: by_to[to_offsets[y] .. to_offsets[y+1]).
  std::vector<std::uint32_t> to_offsets;
  std::vector<std::uint32_t> by_to;
  // Dense mode only, (from_count x labels) row-major.
  std::vector<double> dense_lambda;
  std::vector<double> dense_exp;

  std::size_t from_count() const noexcept { return first ? 1 : labels; }
};

namespace detail {

inline std::shared_ptr<PositionTransition> build_transition(const Model& model,
                                                            std::span<const BlockId> blocks,
                                                            bool first, Mode mode) {
  const auto Y = model.num_labels();
  const auto& store = model.params();
  auto pt = std::make_shared<PositionTransition>();
  pt->first = first;
  pt->labels = Y;
  pt->unigram.assign(Y, 0.0);
  for (BlockId b : blocks)
    if (model.has_unigram(b))
      for (const auto& e : store.mu_block(b).entries()) pt->unigram[e.index] += e.value;
  pt->exp_unigram.resize(Y);
  for (std::size_t y = 0; y < Y; ++y) {
    pt->exp_unigram[y] = std::exp(pt->unigram[y]);
    if (!std::isfinite(pt->exp_unigram[y]))
      throw InferenceError("unigram potential overflows (u=" + format_double(pt->unigram[y]) +
                           ")");
  }

  const auto lo = first ? store.lambda_index(model.labels().begin(), 0) : 0u;
  const auto hi = first ? lo + static_cast<std::uint32_t>(Y)
                        : static_cast<std::uint32_t>(Y * Y);
  std::vector<SparseVector::Entry> gathered;
  for (BlockId b : blocks)
    if (model.has_bigram(b))
      for (const auto& e : store.lambda_block(b).range(lo, hi)) gathered.push_back(e);
  std::stable_sort(gathered.begin(), gathered.end(),
                   [](const auto& a, const auto& b) { return a.index < b.index; });
  for (std::size_t i = 0; i < gathered.size();) {
    const auto idx = gathered[i].index;
    double sum = 0.0;
    for (; i < gathered.size() && gathered[i].index == idx; ++i) sum += gathered[i].value;
    const double m = std::expm1(sum);
    if (!std::isfinite(m))
      throw InferenceError("bigram potential overflows (lambda=" + format_double(sum) + ")");
    pt->delta.entries.push_back({first ? 0u : static_cast<LabelId>(idx / Y),
                                 static_cast<LabelId>(idx % Y), sum, m});
  }

  pt->to_offsets.assign(Y + 1, 0);
  for (const auto& e : pt->delta.entries) ++pt->to_offsets[e.to + 1];
  std::partial_sum(pt->to_offsets.begin(), pt->to_offsets.end(), pt->to_offsets.begin());
  pt->by_to.resize(pt->delta.entries.size());
  {
    auto fill = pt->to_offsets;
    for (std::uint32_t k = 0; k < pt->delta.entries.size(); ++k)
      pt->by_to[fill[pt->delta.entries[k].to]++] = k;
  }

  if (mode == Mode::Dense) {
    const auto rows = pt->from_count();
    pt->dense_lambda.assign(rows * Y, 0.0);
    for (const auto& e : pt->delta.entries) pt->dense_lambda[e.from * Y + e.to] = e.lambda;
    pt->dense_exp.resize(rows * Y);
    for (std::size_t k = 0; k < rows * Y; ++k) pt->dense_exp[k] = std::exp(pt->dense_lambda[k]);
  }
  return pt;
}

}  // namespace detail

/// Memoizes PositionTransition per (first-position flag, block set). Only
/// valid while the model's weights stay unchanged; not thread-safe, use one
/// per thread.
class TransitionCache {
 public:
  TransitionCache(const Model& model, Mode mode) : model_(&model), mode_(mode) {}

  std::shared_ptr<const PositionTransition> get(const Instance& inst, std::size_t t) {
    auto blocks = inst.at(t);
    key_.assign(1, t == 0 ? 1u : 0u);
    key_.insert(key_.end(), blocks.begin(), blocks.end());
    auto it = cache_.find(key_);
    if (it != cache_.end()) return it->second;
    auto pt = detail::build_transition(*model_, blocks, t == 0, mode_);
    cache_.emplace(key_, pt);
    return pt;
  }

  Mode mode() const noexcept { return mode_; }
  const Model& model() const noexcept { return *model_; }
  std::size_t size() const noexcept { return cache_.size(); }
  void clear() { cache_.clear(); }

 private:
  const Model* model_;
  Mode mode_;
  std::vector<std::uint32_t> key_;
  std::map<std::vector<std::uint32_t>, std::shared_ptr<const PositionTransition>> cache_;
};

/// Scaled forward/backward quantities for one sequence.
///
/// alpha[t] sums to one; scale[t] is the forward normalizer so that
/// log Z = sum_t log scale[t]. beta is scaled by the forward normalizers for
/// a full lattice and self-normalized for a truncated one; norm[t] =
/// sum_y alpha[t][y] beta[t][y] absorbs the difference. Marginals are valid
/// for positions in [first, last].
class Lattice {
 public:
  std::size_t length() const noexcept { return T_; }
  std::size_t labels() const noexcept { return Y_; }
  std::size_t first() const noexcept { return first_; }
  std::size_t last() const noexcept { return last_; }
  bool truncated() const noexcept { return first_ != 0 || last_ + 1 != T_; }

  /// NaN for a truncated lattice.
  double log_z() const noexcept { return log_z_; }

  double alpha(std::size_t t, LabelId y) const { return alpha_[t * Y_ + y]; }
  double beta(std::size_t t, LabelId y) const { return beta_[t * Y_ + y]; }
  double scale(std::size_t t) const { return scale_[t]; }

  /// P(y_t = y | x).
  double marginal(std::size_t t, LabelId y) const {
    return alpha_[t * Y_ + y] * beta_[t * Y_ + y] / norm_[t];
  }

  /// P(y_{t-1} = from, y_t = to | x); at t = 0 the only source row is the
  /// begin marker and `from` must be 0.
  double pairwise(std::size_t t, LabelId from, LabelId to) const {
    const auto& pt = *transitions_[t];
    if (t == 0) return marginal(0, to);
    double w = pt.exp_unigram[to] * beta_[t * Y_ + to] / (scale_[t] * norm_[t]);
    double psi = 1.0;
    if (!pt.dense_exp.empty()) {
      psi = pt.dense_exp[from * Y_ + to];
    } else {
      for (std::uint32_t k = pt.to_offsets[to]; k < pt.to_offsets[to + 1]; ++k) {
        const auto& e = pt.delta.entries[pt.by_to[k]];
        if (e.from == from) psi += e.m;
      }
    }
    return alpha_[(t - 1) * Y_ + from] * psi * w;
  }

  /// Writes the (from_count x labels) pairwise matrix at position t into out.
  void pairwise(std::size_t t, std::span<double> out) const {
    const auto& pt = *transitions_[t];
    if (t == 0) {
      for (LabelId y = 0; y < Y_; ++y) out[y] = marginal(0, y);
      return;
    }
    thread_local std::vector<double> w;
    w.resize(Y_);
    const double denom = scale_[t] * norm_[t];
    for (LabelId y = 0; y < Y_; ++y) w[y] = pt.exp_unigram[y] * beta_[t * Y_ + y] / denom;
    const double* a = &alpha_[(t - 1) * Y_];
    if (!pt.dense_exp.empty()) {
      for (LabelId f = 0; f < Y_; ++f)
        for (LabelId y = 0; y < Y_; ++y) out[f * Y_ + y] = a[f] * pt.dense_exp[f * Y_ + y] * w[y];
      return;
    }
    for (LabelId f = 0; f < Y_; ++f)
      for (LabelId y = 0; y < Y_; ++y) out[f * Y_ + y] = a[f] * w[y];
    for (const auto& e : pt.delta.entries) out[e.from * Y_ + e.to] += a[e.from] * e.m * w[e.to];
  }

  const PositionTransition& transition(std::size_t t) const { return *transitions_[t]; }

  /// Multiplications by stored entries of M: r(x_t) for every forward step
  /// and for every backward step (t >= 2 in 1-based terms). Zero in dense mode.
  std::size_t forward_multiplies() const noexcept { return fwd_mults_; }
  std::size_t backward_multiplies() const noexcept { return bwd_mults_; }
  std::size_t bigram_multiplies() const noexcept { return fwd_mults_ + bwd_mults_; }

 private:
  friend Lattice run_forward_backward(TransitionCache&, const Instance&, std::size_t,
                                      std::size_t);

  std::size_t T_ = 0, Y_ = 0, first_ = 0, last_ = 0;
  std::vector<double> alpha_, beta_, scale_, norm_;
  std::vector<std::shared_ptr<const PositionTransition>> transitions_;
  double log_z_ = std::numeric_limits<double>::quiet_NaN();
  std::size_t fwd_mults_ = 0, bwd_mults_ = 0;
};

/// Forward over [0, last], backward over [first, T-1]. With the full span
/// the backward pass reuses the forward scale factors.
inline Lattice run_forward_backward(TransitionCache& cache, const Instance& inst,
                                    std::size_t first, std::size_t last) {
  const std::size_t T = inst.length();
  if (T == 0) throw InferenceError("empty sequence");
  if (first > last || last >= T) throw Error("invalid span for forward-backward");
  const std::size_t Y = cache.model().num_labels();
  const bool dense = cache.mode() == Mode::Dense;
  const bool full = first == 0 && last + 1 == T;

  Lattice L;
  L.T_ = T;
  L.Y_ = Y;
  L.first_ = first;
  L.last_ = last;
  L.alpha_.assign(T * Y, 0.0);
  L.beta_.assign(T * Y, 0.0);
  L.scale_.assign(T, 0.0);
  L.norm_.assign(T, 0.0);
  L.transitions_.resize(T);
  for (std::size_t t = 0; t < T; ++t)
    if (t <= last || t >= first) L.transitions_[t] = cache.get(inst, t);

  auto check = [](double v, const char* what, std::size_t t) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw InferenceError(std::string(what) + " normalizer is not finite and positive at t=" +
                           std::to_string(t + 1));
  };

  // forward
  for (std::size_t t = 0; t <= last; ++t) {
    const auto& pt = *L.transitions_[t];
    double* a = &L.alpha_[t * Y];
    if (t == 0) {
      if (dense) {
        for (std::size_t y = 0; y < Y; ++y) a[y] = pt.dense_exp[y];
      } else {
        std::fill(a, a + Y, 1.0);
        for (const auto& e : pt.delta.entries) a[e.to] += 1.0 * e.m;
        L.fwd_mults_ += pt.delta.r();
      }
    } else {
      const double* prev = &L.alpha_[(t - 1) * Y];
      if (dense) {
        std::fill(a, a + Y, 0.0);
        for (std::size_t f = 0; f < Y; ++f) {
          const double pf = prev[f];
          const double* row = &pt.dense_exp[f * Y];
          for (std::size_t y = 0; y < Y; ++y) a[y] += pf * row[y];
        }
      } else {
        double s = 0.0;
        for (std::size_t f = 0; f < Y; ++f) s += prev[f];
        std::fill(a, a + Y, s);
        for (const auto& e : pt.delta.entries) a[e.to] += prev[e.from] * e.m;
        L.fwd_mults_ += pt.delta.r();
      }
    }
    double c = 0.0;
    for (std::size_t y = 0; y < Y; ++y) {
      a[y] *= pt.exp_unigram[y];
      c += a[y];
    }
    check(c, "forward", t);
    L.scale_[t] = c;
    for (std::size_t y = 0; y < Y; ++y) a[y] /= c;
  }

  // backward
  {
    double* b = &L.beta_[(T - 1) * Y];
    std::fill(b, b + Y, full ? 1.0 : 1.0 / static_cast<double>(Y));
  }
  std::vector<double> v(Y);
  for (std::size_t t = T - 1; t-- > first;) {
    const auto& next = *L.transitions_[t + 1];
    const double* bn = &L.beta_[(t + 1) * Y];
    double* b = &L.beta_[t * Y];
    double vs = 0.0;
    for (std::size_t y = 0; y < Y; ++y) {
      v[y] = bn[y] * next.exp_unigram[y];
      vs += v[y];
    }
    if (dense) {
      for (std::size_t f = 0; f < Y; ++f) {
        const double* row = &next.dense_exp[f * Y];
        double s = 0.0;
        for (std::size_t y = 0; y < Y; ++y) s += row[y] * v[y];
        b[f] = s;
      }
    } else {
      std::fill(b, b + Y, vs);
      for (const auto& e : next.delta.entries) b[e.from] += e.m * v[e.to];
      L.bwd_mults_ += next.delta.r();
    }
    double d = full ? L.scale_[t + 1] : 0.0;
    if (!full)
      for (std::size_t y = 0; y < Y; ++y) d += b[y];
    check(d, "backward", t);
    for (std::size_t y = 0; y < Y; ++y) b[y] /= d;
  }

  for (std::size_t t = first; t <= last; ++t) {
    double n = 0.0;
    for (std::size_t y = 0; y < Y; ++y) n += L.alpha_[t * Y + y] * L.beta_[t * Y + y];
    check(n, "posterior", t);
    L.norm_[t] = n;
  }

  if (full) {
    double lz = 0.0;
    for (double c : L.scale_) lz += std::log(c);
    L.log_z_ = lz;
  }
  return L;
}

inline Lattice forward_backward(TransitionCache& cache, const Instance& inst) {
  return run_forward_backward(cache, inst, 0, inst.length() - 1);
}

inline Lattice forward_backward(const Model& model, const Instance& inst, Mode mode) {
  TransitionCache cache(model, mode);
  return forward_backward(cache, inst);
}

inline Lattice forward_backward_dense(const Model& model, const Instance& inst) {
  return forward_backward(model, inst, Mode::Dense);
}

inline Lattice forward_backward_sparse(const Model& model, const Instance& inst) {
  return forward_backward(model, inst, Mode::Sparse);
}

/// Lattice valid for marginals at positions [first, last] (0-based): the
/// forward recursion stops at last, the backward one at first.
inline Lattice truncated_forward_backward(TransitionCache& cache, const Instance& inst,
                                          std::size_t first, std::size_t last) {
  return run_forward_backward(cache, inst, first, last);
}

inline Lattice truncated_forward_backward(const Model& model, const Instance& inst,
                                          std::size_t first, std::size_t last,
                                          Mode mode = Mode::Sparse) {
  TransitionCache cache(model, mode);
  return run_forward_backward(cache, inst, first, last);
}

// ---------------------------------------------------------------------------
// Scores and decoding

/// Unnormalized log-potential of a labelling.
inline double log_potential(const Model& model, const Instance& inst,
                            std::span<const LabelId> labels) {
  const auto& store = model.params();
  double score = 0.0;
  LabelId prev = model.labels().begin();
  for (std::size_t t = 0; t < inst.length(); ++t) {
    const LabelId y = labels[t];
    for (BlockId b : inst.at(t)) {
      if (model.has_unigram(b)) score += store.mu(b, y);
      if (model.has_bigram(b)) score += store.lambda(b, prev, y);
    }
    prev = y;
  }
  return score;
}

struct ViterbiResult {
  std::vector<LabelId> labels;
  double score = 0.0;
};

/// Best labelling. Ties go to the smallest label index, then to the
/// smallest predecessor index; dense and sparse modes agree exactly.
inline ViterbiResult viterbi(TransitionCache& cache, const Instance& inst) {
  const std::size_t T = inst.length();
  if (T == 0) throw InferenceError("empty sequence");
  const std::size_t Y = cache.model().num_labels();
  const bool dense = cache.mode() == Mode::Dense;

  std::vector<double> eps(T * Y);
  std::vector<LabelId> back(T * Y, 0);
  std::vector<LabelId> order(Y);
  std::vector<std::size_t> stamp(Y, 0);
  std::size_t stamp_id = 0;
  const double ninf = -std::numeric_limits<double>::infinity();

  for (std::size_t t = 0; t < T; ++t) {
    auto pt = cache.get(inst, t);
    double* e = &eps[t * Y];
    if (t == 0) {
      for (std::size_t y = 0; y < Y; ++y) e[y] = 0.0;
      for (const auto& d : pt->delta.entries) e[d.to] = d.lambda;
      for (std::size_t y = 0; y < Y; ++y) {
        e[y] = e[y] + pt->unigram[y];
        back[y] = static_cast<LabelId>(cache.model().labels().begin());
      }
      continue;
    }
    const double* prev = &eps[(t - 1) * Y];
    if (dense) {
      for (std::size_t y = 0; y < Y; ++y) {
        double best = ninf;
        LabelId arg = 0;
        for (std::size_t f = 0; f < Y; ++f) {
          const double val = prev[f] + pt->dense_lambda[f * Y + y];
          if (val > best) {
            best = val;
            arg = static_cast<LabelId>(f);
          }
        }
        e[y] = best + pt->unigram[y];
        back[t * Y + y] = arg;
      }
      continue;
    }
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](LabelId a, LabelId b) {
      return prev[a] > prev[b] || (prev[a] == prev[b] && a < b);
    });
    for (std::size_t y = 0; y < Y; ++y) {
      ++stamp_id;
      double best = ninf;
      LabelId arg = 0;
      auto consider = [&](double val, LabelId f) {
        if (val > best || (val == best && f < arg)) {
          best = val;
          arg = f;
        }
      };
      for (std::uint32_t k = pt->to_offsets[y]; k < pt->to_offsets[y + 1]; ++k) {
        const auto& d = pt->delta.entries[pt->by_to[k]];
        stamp[d.from] = stamp_id;
        consider(prev[d.from] + d.lambda, d.from);
      }
      for (LabelId f : order) {
        if (stamp[f] == stamp_id) continue;
        consider(prev[f], f);
        break;
      }
      e[y] = best + pt->unigram[y];
      back[t * Y + y] = arg;
    }
  }

  ViterbiResult res;
  res.labels.resize(T);
  const double* last = &eps[(T - 1) * Y];
  LabelId arg = 0;
  for (std::size_t y = 1; y < Y; ++y)
    if (last[y] > last[arg]) arg = static_cast<LabelId>(y);
  res.score = last[arg];
  if (!std::isfinite(res.score)) throw InferenceError("non-finite Viterbi score");
  for (std::size_t t = T; t-- > 0;) {
    res.labels[t] = arg;
    if (t > 0) arg = back[t * Y + arg];
  }
  return res;
}

inline ViterbiResult viterbi(const Model& model, const Instance& inst, Mode mode) {
  TransitionCache cache(model, mode);
  return viterbi(cache, inst);
}

/// Per-position argmax of the posterior marginals (smallest index on ties).
inline std::vector<LabelId> posterior_decode(TransitionCache& cache, const Instance& inst) {
  Lattice L = forward_backward(cache, inst);
  std::vector<LabelId> out(inst.length());
  for (std::size_t t = 0; t < inst.length(); ++t) {
    LabelId arg = 0;
    double best = L.marginal(t, 0);
    for (LabelId y = 1; y < L.labels(); ++y) {
      const double p = L.marginal(t, y);
      if (p > best) {
        best = p;
        arg = y;
      }
    }
    out[t] = arg;
  }
  return out;
}

}  // namespace sparsecrf
