#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "sparsecrf/sparsecrf.hpp"
#include "test_util.hpp"

using namespace sparsecrf;

namespace {

TrainingSet synthetic(std::size_t n, std::uint64_t seed) {
  return prepare_training(generate_hmm_corpus(default_hmm_spec(), n, seed), default_templates());
}

/// Minimizer of a/2 x^2 + b x + rho1 |x| + rho2/2 x^2.
double elastic_net_1d(double a, double b, const PenaltyConfig& p) {
  return soft_threshold(-b, p.rho1) / (a + p.rho2);
}

}  // namespace

TEST(SoftThreshold, Definition) {
  EXPECT_EQ(soft_threshold(5, 2), 3);
  EXPECT_EQ(soft_threshold(-5, 2), -3);
  EXPECT_EQ(soft_threshold(1, 2), 0);
  EXPECT_EQ(soft_threshold(-2, 2), 0);
  EXPECT_EQ(soft_threshold(0.5, 0), 0.5);
}

TEST(CoordinateUpdate, Examples) {
  EXPECT_EQ(coordinate_update(0, -3, 1, {1, 0}), 2.0);
  EXPECT_EQ(coordinate_update(0, 0.7, 2, {1, 0.5}), 0.0);
  EXPECT_EQ(coordinate_update(0, -1.0, 2, {1, 0.5}), 0.0);
  EXPECT_DOUBLE_EQ(coordinate_update(1.5, 0.6, 2.0, {0, 0}), 1.5 - 0.6 / 2.0);
}

TEST(CoordinateUpdate, ClampsFlatCurvature) {
  std::size_t clamped = 0;
  const double v = coordinate_update(0.0, -1e-9, 0.0, {0, 0}, 1.0, &clamped);
  EXPECT_EQ(clamped, 1u);
  EXPECT_DOUBLE_EQ(v, 1e-9 / kHessFloor);
  coordinate_update(0.0, -1.0, 0.5, {0, 0}, 1.0, &clamped);
  EXPECT_EQ(clamped, 1u);
}

TEST(CoordinateUpdate, AlphaShortensStepButKeepsFixedPoints) {
  const double newton = coordinate_update(1.0, 0.4, 2.0, {0, 0}, 1.0);
  const double damped = coordinate_update(1.0, 0.4, 2.0, {0, 0}, 4.0);
  EXPECT_DOUBLE_EQ(newton, 0.8);
  EXPECT_DOUBLE_EQ(damped, 1.0 - 0.4 / 8.0);
  // theta = 0.5 with g = -(rho2 theta + rho1) is stationary for any alpha
  for (double a : {1.0, 3.0, 100.0}) EXPECT_DOUBLE_EQ(coordinate_update(0.5, -1.1, 0.3, {1, 0.2}, a), 0.5);
}

TEST(CoordinateUpdate, QuadraticSolvedInOneStep) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3, 3), pos(0.1, 4);
  for (int i = 0; i < 1000; ++i) {
    const double a = pos(rng), b = u(rng), x0 = u(rng);
    const PenaltyConfig p{std::abs(u(rng)), std::abs(u(rng))};
    EXPECT_NEAR(coordinate_update(x0, a * x0 + b, a, p), elastic_net_1d(a, b, p), 1e-12);
  }
}

TEST(CoordinateUpdate, UnchangedExactlyAtOptimality) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-3, 3), pos(0.1, 4);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 2000; ++i) {
    const double h = pos(rng), alpha = 1.0 + 9.0 * std::abs(u(rng)) / 3.0;
    const PenaltyConfig p{std::abs(u(rng)), std::abs(u(rng))};
    double theta = coin(rng) ? 0.0 : u(rng);
    double g = u(rng);
    if (coin(rng)) g = theta == 0.0 ? p.rho1 * u(rng) / 3.0
                                    : -(p.rho2 * theta + p.rho1 * (theta > 0 ? 1 : -1));
    const double violation =
        theta == 0.0 ? std::max(0.0, std::abs(g) - p.rho1)
                     : std::abs(g + p.rho2 * theta + p.rho1 * (theta > 0 ? 1 : -1));
    const double next = coordinate_update(theta, g, h, p, alpha);
    const bool unchanged = std::abs(next - theta) <= 1e-12 * std::max(1.0, std::abs(theta));
    EXPECT_EQ(unchanged, violation <= 1e-12) << "theta=" << theta << " g=" << g;
  }
}

TEST(Epochs, CoordinateUpdateUsesFreshStatistics) {
  Corpus c;
  Sequence s;
  s.tokens = {{"a"}, {"a"}, {"a"}};
  s.labels = {"L0", "L0", "L1"};
  c.sequences.push_back(s);
  TrainingSet ts = prepare_training(c, {parse_template("u:col=0:off=0")}, 1,
                                    fixtures::label_names(2));
  TrainConfig cfg;
  cfg.penalty = {0.1, 0.5};
  // expected counts 1.5 each, observed 2 and 1, variances 3/4 each
  const double first = coordinate_update(0.0, -0.5, 0.75, cfg.penalty);
  cd_epoch(ts.model, ts.instances, ts.index, cfg, 1.0);
  EXPECT_DOUBLE_EQ(ts.model.params().mu(0, 0), first);

  Model check = ts.model;
  check.params().set_mu(0, 1, 0.0);
  const auto g = gradient(check, ts.instances);
  EXPECT_DOUBLE_EQ(ts.model.params().mu(0, 1),
                   coordinate_update(0.0, g.blocks[0].grad_mu(1), g.blocks[0].variance_mu[1],
                                     cfg.penalty));
}

TEST(Epochs, HugeRho1KeepsModelEmpty) {
  auto ts = synthetic(20, 3);
  const double gmax = gradient(ts.model, ts.instances).grad_inf_norm();
  for (TrainMode mode : {TrainMode::Coordinate, TrainMode::Blockwise}) {
    Model m = ts.model;
    TrainConfig cfg;
    cfg.penalty = {gmax, 0.001};
    cfg.mode = mode;
    if (mode == TrainMode::Coordinate)
      cd_epoch(m, ts.instances, ts.index, cfg, 1.0);
    else
      blockwise_epoch(m, ts.instances, ts.index, cfg, 1.0);
    EXPECT_EQ(m.active_counts().total(), 0u);
  }
}

TEST(Epochs, SingleSymbolBlockwiseIsFullBatch) {
  std::mt19937_64 rng(4);
  auto ts = fixtures::random_problem(rng, 6, 2, 5, 1, 3);
  ASSERT_EQ(ts.model.num_blocks(), 1u);
  fixtures::randomize_weights(ts.model, rng, 0.5, 0.3);
  TrainConfig cfg;
  cfg.penalty = {0.05, 0.01};
  Model expect = ts.model;
  const auto g = gradient(ts.model, ts.instances);
  for (const auto& k : fixtures::all_coordinates(ts.model))
    k.set(expect, coordinate_update(k.get(ts.model), fixtures::grad_of(ts.model, g, k),
                                    fixtures::hess_of(ts.model, g, k), cfg.penalty, 2.0));
  auto st = blockwise_epoch(ts.model, ts.instances, ts.index, cfg, 2.0);
  EXPECT_EQ(st.lattices, 6u);
  for (const auto& k : fixtures::all_coordinates(ts.model))
    EXPECT_NEAR(k.get(ts.model), k.get(expect), 1e-12);
}

TEST(Epochs, SingleSymbolModesShareFixedPoints) {
  std::mt19937_64 rng(5);
  auto ts = fixtures::random_problem(rng, 8, 2, 5, 1, 3);
  TrainConfig cfg;
  cfg.penalty = {0.2, 0.01};
  cfg.tol = 1e-12;
  cfg.max_epochs = 300;
  double objective[2];
  for (int i = 0; i < 2; ++i) {
    Model m = ts.model;
    cfg.mode = i == 0 ? TrainMode::Coordinate : TrainMode::Blockwise;
    auto h = train(m, ts.instances, ts.index, cfg);
    EXPECT_FALSE(h.aborted);
    EXPECT_TRUE(stationarity(m, ts.instances, cfg.penalty).satisfied());
    objective[i] = penalized_objective(m, ts.instances, cfg.penalty);
  }
  EXPECT_NEAR(objective[0], objective[1], 1e-6 * std::abs(objective[0]));
}

TEST(Epochs, LatticeCountBound) {
  auto ts = synthetic(30, 6);
  TrainConfig cfg;
  std::size_t bound = 0;
  for (BlockId b = 0; b < ts.model.num_blocks(); ++b) bound += ts.index.occurrences(b).size();
  auto st = blockwise_epoch(ts.model, ts.instances, ts.index, cfg, 3.0);
  EXPECT_LE(st.lattices, bound);
  EXPECT_LT(st.lattices, ts.model.num_blocks() * ts.instances.size());
}

TEST(Train, ObjectiveDecreases) {
  auto ts = synthetic(50, 7);
  for (TrainMode mode : {TrainMode::Coordinate, TrainMode::Blockwise}) {
    Model m = ts.model;
    TrainConfig cfg;
    cfg.mode = mode;
    cfg.max_epochs = 10;
    auto h = train(m, ts.instances, ts.index, cfg);
    ASSERT_FALSE(h.epochs.empty());
    double prev = h.initial_objective;
    for (const auto& r : h.epochs) {
      if (r.epoch >= cfg.switch_epoch) EXPECT_LE(r.objective, prev);
      prev = r.objective;
    }
    EXPECT_LT(h.epochs.back().objective, 0.8 * h.initial_objective);
    for (std::size_t i = 0; i < h.epochs.size(); ++i) EXPECT_EQ(h.epochs[i].epoch, i + 1);
  }
}

TEST(Train, InfiniteToleranceStopsAfterOneEpoch) {
  auto ts = synthetic(10, 8);
  TrainConfig cfg;
  cfg.tol = std::numeric_limits<double>::infinity();
  auto h = train(ts.model, ts.instances, ts.index, cfg);
  EXPECT_EQ(h.epochs.size(), 1u);
  EXPECT_TRUE(h.converged);
}

TEST(Train, ConfigValidation) {
  auto ts = synthetic(3, 9);
  TrainConfig cfg;
  cfg.tol = 0;
  EXPECT_THROW(train(ts.model, ts.instances, ts.index, cfg), Error);
  cfg = {};
  cfg.alpha_main = 0.5;
  EXPECT_THROW(train(ts.model, ts.instances, ts.index, cfg), Error);
  cfg = {};
  cfg.penalty.rho1 = -1;
  EXPECT_THROW(train(ts.model, ts.instances, ts.index, cfg), Error);
}

TEST(Train, ReachesStationaryPoint) {
  auto ts = synthetic(10, 10);
  for (double rho1 : {0.5, 1.0}) {
    for (TrainMode mode : {TrainMode::Coordinate, TrainMode::Blockwise}) {
      Model m = ts.model;
      TrainConfig cfg;
      cfg.penalty = {rho1, 0.001};
      cfg.mode = mode;
      cfg.tol = 1e-14;
      cfg.max_epochs = 1000;
      train(m, ts.instances, ts.index, cfg);
      auto rep = stationarity(m, ts.instances, cfg.penalty);
      EXPECT_TRUE(rep.satisfied()) << "rho1=" << rho1 << " violation=" << rep.max_violation;
    }
  }
}

TEST(Train, ActiveCountsShrinkWithRho1) {
  const std::vector<double> rhos{0.001, 0.01, 0.1, 1.0, 2.5};
  std::vector<double> mu(rhos.size(), 0.0), lambda(rhos.size(), 0.0);
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    auto ts = synthetic(10, 100 + rep);
    for (std::size_t i = 0; i < rhos.size(); ++i) {
      Model m = ts.model;
      TrainConfig cfg;
      cfg.penalty = {rhos[i], 0.001};
      train(m, ts.instances, ts.index, cfg);
      mu[i] += m.params().active_mu();
      lambda[i] += m.params().active_lambda();
    }
  }
  for (std::size_t i = 1; i < rhos.size(); ++i) {
    EXPECT_LE(mu[i], mu[i - 1]);
    EXPECT_LE(lambda[i], lambda[i - 1]);
  }
}

TEST(Train, DeterministicAcrossThreads) {
  auto ts = synthetic(40, 11);
  Model a = ts.model, b = ts.model;
  TrainConfig cfg;
  cfg.max_epochs = 4;
  cfg.exec = {1, true};
  train(a, ts.instances, ts.index, cfg);
  cfg.exec = {3, true};
  train(b, ts.instances, ts.index, cfg);
  std::ostringstream sa, sb;
  save_model(sa, a);
  save_model(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Train, HeldoutErrorIsRecorded) {
  auto corpus = generate_hmm_corpus(default_hmm_spec(), 20, 12);
  auto test = generate_hmm_corpus(default_hmm_spec(), 20, 13);
  TrainConfig cfg;
  cfg.max_epochs = 3;
  auto result = train(corpus, default_templates(), cfg, &test);
  ASSERT_FALSE(result.history.epochs.empty());
  for (const auto& r : result.history.epochs) ASSERT_TRUE(r.heldout_error.has_value());
  EXPECT_EQ(*result.history.epochs.back().heldout_error,
            token_error(result.model, test, Decoder::Viterbi));
}

TEST(History, WritesOneLinePerEpoch) {
  TrainHistory h;
  EpochRecord r;
  r.epoch = 1;
  r.objective = 2.5;
  r.loss = 2.0;
  r.active_mu = 3;
  r.active_lambda = 4;
  r.seconds = 0.125;
  h.epochs.push_back(r);
  r.epoch = 2;
  r.heldout_error = 0.25;
  h.epochs.push_back(r);
  std::ostringstream out;
  write_history(out, h);
  EXPECT_EQ(out.str(),
            "epoch\tobjective\tloss\tactive_mu\tactive_lambda\theldout_error\tseconds\n"
            "1\t2.5\t2\t3\t4\t-\t0.125\n"
            "2\t2.5\t2\t3\t4\t0.25\t0.125\n");
}
