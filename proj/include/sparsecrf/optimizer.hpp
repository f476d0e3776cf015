#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sparsecrf/evaluation.hpp"
#include "sparsecrf/features.hpp"
#include "sparsecrf/objective.hpp"
#include "sparsecrf/parallel.hpp"

namespace sparsecrf {

/// s(z, rho): shrinks z toward zero by rho, zero inside [-rho, rho].
inline double soft_threshold(double z, double rho) {
  if (z > rho) return z - rho;
  if (z < -rho) return z + rho;
  return 0.0;
}

inline constexpr double kHessFloor = 1e-8;

/// Minimizer of the local quadratic model plus the elastic-net penalty for
/// one coordinate. alpha >= 1 inflates the curvature, shortening the step
/// without moving its fixed points. Curvature at or below kHessFloor is
/// clamped; *clamped is incremented when that happens.
inline double coordinate_update(double theta, double grad, double hess,
                                const PenaltyConfig& penalty, double alpha = 1.0,
                                std::size_t* clamped = nullptr) {
  if (!(hess > kHessFloor)) {
    hess = kHessFloor;
    if (clamped) ++*clamped;
  }
  const double h = alpha * hess;
  return soft_threshold(h * theta - grad, penalty.rho1) / (h + penalty.rho2);
}

enum class TrainMode { Coordinate, Blockwise };

struct TrainConfig {
  PenaltyConfig penalty{1.0, 0.001};
  TrainMode mode = TrainMode::Blockwise;
  double alpha_initial = 100.0;
  std::optional<double> alpha_main;  // default: 1 (coordinate) or 3 (blockwise)
  std::size_t switch_epoch = 3;      // first epoch that uses alpha_main
  std::size_t max_epochs = 30;
  double tol = 1e-4;  // relative change of the penalized objective
  std::size_t cutoff = 1;
  Execution exec;

  double main_alpha() const { return alpha_main.value_or(mode == TrainMode::Blockwise ? 3.0 : 1.0); }

  void validate() const {
    penalty.validate();
    if (!(alpha_initial >= 1.0) || !(main_alpha() >= 1.0))
      throw Error("alpha values must be at least 1");
    if (!(tol > 0.0)) throw Error("tolerance must be positive");
    if (max_epochs == 0) throw Error("max_epochs must be positive");
    if (cutoff == 0) throw Error("cutoff must be at least 1");
  }
};

struct EpochStats {
  std::size_t lattices = 0;  // forward-backward passes run
  std::size_t updates = 0;   // coordinates visited
  std::size_t clamped = 0;   // curvature clamps
};

struct EpochRecord {
  std::size_t epoch = 0;
  double objective = 0.0;
  double loss = 0.0;
  std::size_t active_mu = 0;
  std::size_t active_lambda = 0;
  std::optional<double> heldout_error;
  double seconds = 0.0;
  double alpha = 1.0;
  std::size_t lattices = 0;
  bool rejected = false;  // objective went up; weights rolled back
};

struct TrainHistory {
  double initial_objective = 0.0;
  std::vector<EpochRecord> epochs;
  std::size_t alpha_doublings = 0;
  bool converged = false;
  bool aborted = false;
  std::string abort_reason;
};

/// One line per epoch, tab separated, with a header line.
inline void write_history(std::ostream& out, const TrainHistory& history) {
  out << "epoch\tobjective\tloss\tactive_mu\tactive_lambda\theldout_error\tseconds\n";
  for (const auto& r : history.epochs) {
    out << r.epoch << '\t' << format_double(r.objective) << '\t' << format_double(r.loss)
        << '\t' << r.active_mu << '\t' << r.active_lambda << '\t'
        << (r.heldout_error ? format_double(*r.heldout_error) : std::string("-")) << '\t'
        << format_double(r.seconds) << '\n';
  }
}

namespace detail {

/// Which lambda rows a block can ever touch: the begin row only if the block
/// fires at the first position, label rows only if it fires later.
struct Exposure {
  bool first = false;
  bool later = false;
};

inline Exposure exposure(const BlockIndex& index, BlockId b) {
  Exposure ex;
  for (const auto& o : index.occurrences(b)) {
    if (o.first == 0) ex.first = true;
    if (o.last > 0) ex.later = true;
  }
  return ex;
}

template <typename Fn>
void for_each_lambda(const Model& model, const Exposure& ex, Fn&& fn) {
  const auto Y = static_cast<LabelId>(model.num_labels());
  if (ex.later)
    for (LabelId f = 0; f < Y; ++f)
      for (LabelId y = 0; y < Y; ++y) fn(f, y);
  if (ex.first)
    for (LabelId y = 0; y < Y; ++y) fn(model.labels().begin(), y);
}

}  // namespace detail

/// One pass of single-coordinate descent: every coordinate of every block,
/// each with fresh statistics over the sequences containing its block.
inline EpochStats cd_epoch(Model& model, std::span<const Instance> instances,
                           const BlockIndex& index, const TrainConfig& config, double alpha) {
  EpochStats st;
  auto& store = model.params();
  BlockStats stats;
  for (BlockId b : index.update_order()) {
    if (index.occurrences(b).empty()) continue;
    if (model.has_unigram(b)) {
      for (LabelId y = 0; y < model.num_labels(); ++y) {
        st.lattices += block_statistics(model, instances, index, b, stats, config.exec);
        store.set_mu(b, y,
                     coordinate_update(store.mu(b, y), stats.grad_mu(y), stats.variance_mu[y],
                                       config.penalty, alpha, &st.clamped));
        ++st.updates;
      }
    }
    if (model.has_bigram(b)) {
      detail::for_each_lambda(model, detail::exposure(index, b), [&](LabelId f, LabelId y) {
        st.lattices += block_statistics(model, instances, index, b, stats, config.exec);
        const auto k = store.lambda_index(f, y);
        store.set_lambda(b, f, y,
                         coordinate_update(store.lambda(b, f, y), stats.grad_lambda(k),
                                           stats.variance_lambda[k], config.penalty, alpha,
                                           &st.clamped));
        ++st.updates;
      });
    }
  }
  return st;
}

/// One pass of blockwise descent: per block, one truncated forward-backward
/// per sequence containing it, then all mu updates followed by all lambda
/// updates from those statistics.
inline EpochStats blockwise_epoch(Model& model, std::span<const Instance> instances,
                                  const BlockIndex& index, const TrainConfig& config,
                                  double alpha) {
  EpochStats st;
  auto& store = model.params();
  BlockStats stats;
  for (BlockId b : index.update_order()) {
    if (index.occurrences(b).empty()) continue;
    st.lattices += block_statistics(model, instances, index, b, stats, config.exec);
    if (model.has_unigram(b)) {
      for (LabelId y = 0; y < model.num_labels(); ++y) {
        store.set_mu(b, y,
                     coordinate_update(store.mu(b, y), stats.grad_mu(y), stats.variance_mu[y],
                                       config.penalty, alpha, &st.clamped));
        ++st.updates;
      }
    }
    if (model.has_bigram(b)) {
      detail::for_each_lambda(model, detail::exposure(index, b), [&](LabelId f, LabelId y) {
        const auto k = store.lambda_index(f, y);
        store.set_lambda(b, f, y,
                         coordinate_update(store.lambda(b, f, y), stats.grad_lambda(k),
                                           stats.variance_lambda[k], config.penalty, alpha,
                                           &st.clamped));
        ++st.updates;
      });
    }
  }
  return st;
}

/// First-order optimality check of the elastic-net objective. For a zero
/// coordinate the violation is max(0, |g| - rho1); otherwise it is
/// |g + rho2 theta + rho1 sign(theta)|.
struct StationarityReport {
  double max_violation = 0.0;
  double grad_inf_norm = 0.0;
  double kappa = 0.0;  // 1e-3 * max(1, grad_inf_norm)
  std::size_t coordinates = 0;
  bool satisfied() const noexcept { return max_violation <= kappa; }
};

inline StationarityReport stationarity(const Model& model, std::span<const Instance> instances,
                                       const PenaltyConfig& penalty,
                                       const Execution& exec = {}) {
  const CorpusStats g = gradient(model, instances, exec);
  const auto& store = model.params();
  StationarityReport rep;
  rep.grad_inf_norm = g.grad_inf_norm();
  rep.kappa = 1e-3 * std::max(1.0, rep.grad_inf_norm);
  auto check = [&](double theta, double grad) {
    ++rep.coordinates;
    double v = theta == 0.0 ? std::max(0.0, std::abs(grad) - penalty.rho1)
                            : std::abs(grad + penalty.rho2 * theta +
                                       penalty.rho1 * (theta > 0.0 ? 1.0 : -1.0));
    rep.max_violation = std::max(rep.max_violation, v);
  };
  for (BlockId b = 0; b < model.num_blocks(); ++b) {
    const auto& s = g.blocks[b];
    if (s.empty()) continue;
    if (model.has_unigram(b))
      for (LabelId y = 0; y < model.num_labels(); ++y) check(store.mu(b, y), s.grad_mu(y));
    if (model.has_bigram(b))
      for (std::size_t k = 0; k < s.expected_lambda.size(); ++k)
        check(store.lambda_block(b).get(static_cast<std::uint32_t>(k)), s.grad_lambda(k));
  }
  return rep;
}

struct TrainResult {
  Model model;
  TrainHistory history;
};

inline constexpr std::size_t kMaxRetries = 20;

/// Outer loop: epochs until the relative change of the penalized objective
/// drops below tol or max_epochs is reached. From switch_epoch on, an epoch
/// that increases the objective or overflows is rolled back and alpha is
/// doubled. Overflow before switch_epoch, or more than kMaxRetries failed
/// epochs in a row, aborts training with the last good weights.
inline TrainHistory train(Model& model, std::span<const Instance> instances,
                          const BlockIndex& index, const TrainConfig& config,
                          std::span<const Instance> heldout = {}) {
  config.validate();
  using clock = std::chrono::steady_clock;
  TrainHistory history;
  double alpha_main = config.main_alpha();
  std::size_t consecutive_failures = 0;
  double previous_loss = log_loss(model, instances, config.exec);
  double previous = previous_loss + penalty_value(model, config.penalty);
  history.initial_objective = previous;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = clock::now();
    const double alpha = epoch < config.switch_epoch ? config.alpha_initial : alpha_main;
    ParameterStore snapshot = model.params();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.alpha = alpha;
    bool failed = false;
    std::string failure;
    try {
      EpochStats st = config.mode == TrainMode::Blockwise
                          ? blockwise_epoch(model, instances, index, config, alpha)
                          : cd_epoch(model, instances, index, config, alpha);
      rec.lattices = st.lattices;
      rec.loss = log_loss(model, instances, config.exec);
      rec.objective = rec.loss + penalty_value(model, config.penalty);
      if (!std::isfinite(rec.objective)) throw InferenceError("non-finite objective");
    } catch (const InferenceError& e) {
      failed = true;
      failure = e.what();
    }

    if (failed && (epoch < config.switch_epoch || ++consecutive_failures > kMaxRetries)) {
      model.params() = std::move(snapshot);
      history.aborted = true;
      history.abort_reason = failure;
      return history;
    }
    if (failed || (epoch >= config.switch_epoch && rec.objective > previous)) {
      model.params() = std::move(snapshot);
      rec.rejected = true;
      rec.objective = previous;
      rec.loss = previous_loss;
      alpha_main *= 2.0;
      ++history.alpha_doublings;
    } else {
      consecutive_failures = 0;
    }
    rec.active_mu = model.params().active_mu();
    rec.active_lambda = model.params().active_lambda();
    if (!heldout.empty()) rec.heldout_error = token_error(model, heldout, Decoder::Viterbi,
                                                          Mode::Sparse, config.exec);
    rec.seconds = std::chrono::duration<double>(clock::now() - start).count();
    history.epochs.push_back(rec);

    if (!rec.rejected) {
      const double change = std::abs(previous - rec.objective) /
                            std::max(std::abs(previous), std::numeric_limits<double>::min());
      previous = rec.objective;
      previous_loss = rec.loss;
      if (change < config.tol) {
        history.converged = true;
        break;
      }
    }
  }
  return history;
}

/// Builds the model from a labelled corpus and trains it. heldout, when
/// non-empty, is evaluated after every epoch.
inline TrainResult train(const Corpus& corpus, const std::vector<Template>& templates,
                         const TrainConfig& config, const Corpus* heldout = nullptr) {
  config.validate();
  TrainingSet ts = prepare_training(corpus, templates, config.cutoff);
  std::vector<Instance> held;
  if (heldout) held = compile_for_evaluation(ts.model, *heldout);
  TrainResult result;
  result.history = train(ts.model, ts.instances, ts.index, config, held);
  result.model = std::move(ts.model);
  return result;
}

}  // namespace sparsecrf
