// sparsecrf: train, label, evaluate and inspect linear-chain CRFs, and
// generate synthetic HMM corpora.

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sparsecrf/sparsecrf.hpp"

using namespace sparsecrf;

namespace {

constexpr int kRuntimeError = 1;
constexpr int kUsageError = 2;

struct Options {
  std::string data, test, templates, model, out, history, mode = "blockwise";
  std::string decoder = "viterbi";
  double rho1 = 1.0, rho2 = 0.001, alpha_init = 100.0, tol = 1e-4;
  std::optional<double> alpha_main;
  std::size_t switch_epoch = 3, max_epochs = 30, cutoff = 1;
  std::size_t threads = Execution::hardware();
  bool deterministic = false, sparse_decode = false;
  std::uint64_t seed = 1;
  std::size_t n_train = 10, n_test = 1000;

  Execution exec() const { return {threads, deterministic}; }
};

void print_kv(std::ostream& out, const std::string& key, const std::string& value) {
  out << key << '=' << value << '\n';
}

std::ostream& output_stream(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw Error("cannot write '" + path + "'");
  return file;
}

int cmd_train(const Options& o) {
  const Corpus corpus = read_corpus_file(o.data, true);
  std::optional<Corpus> heldout;
  if (!o.test.empty()) heldout = read_corpus_file(o.test, true);
  const auto templates = o.templates.empty() ? default_templates() : read_templates_file(o.templates);

  TrainConfig cfg;
  cfg.penalty = {o.rho1, o.rho2};
  cfg.mode = o.mode == "coordinate" ? TrainMode::Coordinate : TrainMode::Blockwise;
  cfg.alpha_initial = o.alpha_init;
  cfg.alpha_main = o.alpha_main;
  cfg.switch_epoch = o.switch_epoch;
  cfg.max_epochs = o.max_epochs;
  cfg.tol = o.tol;
  cfg.cutoff = o.cutoff;
  cfg.exec = o.exec();

  auto result = train(corpus, templates, cfg, heldout ? &*heldout : nullptr);
  save_model_file(o.out, result.model);
  const std::string history_path = o.history.empty() ? o.out + ".history" : o.history;
  {
    std::ofstream h(history_path);
    if (!h) throw Error("cannot write '" + history_path + "'");
    write_history(h, result.history);
  }
  const auto& hist = result.history;
  print_kv(std::cout, "epochs", std::to_string(hist.epochs.size()));
  print_kv(std::cout, "objective",
           format_double(hist.epochs.empty() ? hist.initial_objective : hist.epochs.back().objective));
  print_kv(std::cout, "active_mu", std::to_string(result.model.params().active_mu()));
  print_kv(std::cout, "active_lambda", std::to_string(result.model.params().active_lambda()));
  print_kv(std::cout, "alpha_doublings", std::to_string(hist.alpha_doublings));
  print_kv(std::cout, "converged", hist.converged ? "1" : "0");
  if (hist.aborted) {
    std::cerr << "sparsecrf: training aborted: " << hist.abort_reason << '\n';
    return kRuntimeError;
  }
  return 0;
}

void check_columns(const Model& model, const Corpus& corpus) {
  if (!corpus.empty() && corpus.columns() != model.columns())
    throw ParseError("input has " + std::to_string(corpus.columns()) +
                     " observation columns, the model expects " +
                     std::to_string(model.columns()));
}

int cmd_label(const Options& o) {
  const Model model = load_model_file(o.model);
  const Corpus corpus = read_corpus_file(o.data, false, true);
  check_columns(model, corpus);
  const auto instances = compile_corpus(model, corpus);
  const Decoder decoder = o.decoder == "marginal" ? Decoder::Marginal : Decoder::Viterbi;
  const auto predicted =
      decode(model, instances, decoder, o.sparse_decode ? Mode::Sparse : Mode::Dense, o.exec());
  std::ofstream file;
  std::ostream& out = output_stream(o.out, file);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::vector<std::string> names;
    for (LabelId y : predicted[i]) names.push_back(model.labels().name(y));
    write_sequence(out, corpus.sequences[i], &names);
  }
  return 0;
}

int cmd_eval(const Options& o) {
  const auto start = std::chrono::steady_clock::now();
  const Model model = load_model_file(o.model);
  const Corpus corpus = read_corpus_file(o.data, true);
  check_columns(model, corpus);
  const auto instances = compile_for_evaluation(model, corpus);
  const Decoder decoder = o.decoder == "marginal" ? Decoder::Marginal : Decoder::Viterbi;
  const auto predicted =
      decode(model, instances, decoder, o.sparse_decode ? Mode::Sparse : Mode::Dense, o.exec());
  const ErrorCount ec = count_errors(instances, predicted);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  print_kv(std::cout, "token_error", format_double(ec.rate()));
  print_kv(std::cout, "errors", std::to_string(ec.errors));
  print_kv(std::cout, "tokens", std::to_string(ec.tokens));
  print_kv(std::cout, "sequences", std::to_string(corpus.size()));
  print_kv(std::cout, "active_mu", std::to_string(model.params().active_mu()));
  print_kv(std::cout, "active_lambda", std::to_string(model.params().active_lambda()));
  print_kv(std::cout, "decoder", o.decoder);
  print_kv(std::cout, "seconds", format_double(secs));
  return 0;
}

// One row per block and weight kind; one column per label. mu rows hold
// |mu[y]|, lambda rows hold the sum over source labels (begin marker
// included) of |lambda[y'][y]|.
int cmd_inspect(const Options& o) {
  const Model model = load_model_file(o.model);
  const auto Y = static_cast<LabelId>(model.num_labels());
  std::ofstream file;
  std::ostream& out = output_stream(o.out, file);
  out << "block\tkind";
  for (LabelId y = 0; y < Y; ++y) out << '\t' << model.labels().name(y);
  out << '\n';
  const auto& store = model.params();
  for (BlockId b = 0; b < model.num_blocks(); ++b) {
    if (model.has_unigram(b)) {
      out << model.block_name(b) << "\tmu";
      for (LabelId y = 0; y < Y; ++y) out << '\t' << format_double(std::abs(store.mu(b, y)));
      out << '\n';
    }
    if (model.has_bigram(b)) {
      std::vector<double> col(Y, 0.0);
      for (const auto& e : store.lambda_block(b).entries()) col[e.index % Y] += std::abs(e.value);
      out << model.block_name(b) << "\tlambda";
      for (double v : col) out << '\t' << format_double(v);
      out << '\n';
    }
  }
  return 0;
}

int cmd_gen(const Options& o) {
  const HmmSpec spec = default_hmm_spec();
  const Corpus train_corpus = generate_hmm_corpus(spec, o.n_train, o.seed);
  // Test sequences come from an independent stream of the same seed.
  const Corpus test_corpus = generate_hmm_corpus(spec, o.n_test, ~o.seed);
  write_corpus_file(o.data, train_corpus);
  if (!o.test.empty()) write_corpus_file(o.test, test_corpus);
  print_kv(std::cout, "train_sequences", std::to_string(train_corpus.size()));
  print_kv(std::cout, "test_sequences", std::to_string(o.test.empty() ? 0 : test_corpus.size()));
  print_kv(std::cout, "bayes_error", format_double(bayes_error(spec)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Sparse linear-chain CRF toolkit"};
  app.require_subcommand(1);

  auto threads = [&](CLI::App* c) {
    c->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    c->add_flag("--deterministic", o.deterministic, "fixed reduction order");
  };
  auto decoding = [&](CLI::App* c) {
    c->add_flag("--sparse-decode", o.sparse_decode, "use the sparse recursions");
    c->add_option("--decoder", o.decoder, "viterbi or marginal")
        ->check(CLI::IsMember({"viterbi", "marginal"}));
  };

  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--data", o.data, "labelled training corpus")->required();
  train_cmd->add_option("--test", o.test, "labelled held-out corpus, scored every epoch");
  train_cmd->add_option("--templates", o.templates, "template file");
  train_cmd->add_option("--out,--model", o.out, "model file to write")->required();
  train_cmd->add_option("--history", o.history, "history file (default <out>.history)");
  train_cmd->add_option("--rho1", o.rho1)->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--rho2", o.rho2)->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--alpha-init", o.alpha_init)->check(CLI::Range(1.0, 1e300));
  train_cmd->add_option("--alpha-main", o.alpha_main)->check(CLI::Range(1.0, 1e300));
  train_cmd->add_option("--switch-epoch", o.switch_epoch);
  train_cmd->add_option("--max-epochs", o.max_epochs)->check(CLI::PositiveNumber);
  train_cmd->add_option("--tol", o.tol)->check(CLI::PositiveNumber);
  train_cmd->add_option("--mode", o.mode)->check(CLI::IsMember({"blockwise", "coordinate"}));
  train_cmd->add_option("--cutoff", o.cutoff, "minimum feature count")->check(CLI::PositiveNumber);
  threads(train_cmd);

  auto* label_cmd = app.add_subcommand("label", "label a corpus");
  label_cmd->add_option("--model", o.model)->required();
  label_cmd->add_option("--data", o.data, "unlabelled corpus")->required();
  label_cmd->add_option("--out", o.out, "output file (default stdout)");
  decoding(label_cmd);
  threads(label_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "token error on a labelled corpus");
  eval_cmd->add_option("--model", o.model)->required();
  eval_cmd->add_option("--data,--test", o.data, "labelled corpus")->required();
  decoding(eval_cmd);
  threads(eval_cmd);

  auto* inspect_cmd = app.add_subcommand("inspect", "per-block weight magnitudes as TSV");
  inspect_cmd->add_option("--model", o.model)->required();
  inspect_cmd->add_option("--out", o.out, "output file (default stdout)");

  auto* gen_cmd = app.add_subcommand("gen", "sample corpora from the synthetic HMM");
  gen_cmd->add_option("--data,--out", o.data, "training corpus to write")->required();
  gen_cmd->add_option("--test", o.test, "test corpus to write");
  gen_cmd->add_option("--n-train", o.n_train);
  gen_cmd->add_option("--n-test", o.n_test);
  gen_cmd->add_option("--seed", o.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*train_cmd) return cmd_train(o);
    if (*label_cmd) return cmd_label(o);
    if (*eval_cmd) return cmd_eval(o);
    if (*inspect_cmd) return cmd_inspect(o);
    return cmd_gen(o);
  } catch (const ParseError& e) {
    std::cerr << "sparsecrf: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "sparsecrf: " << e.what() << '\n';
    return kRuntimeError;
  }
}
