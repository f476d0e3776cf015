#include <gtest/gtest.h>

#include <map>
#include <random>
#include <sstream>

#include "sparsecrf/sparsecrf.hpp"
#include "test_util.hpp"

using namespace sparsecrf;

namespace {

Sequence seq_of(std::initializer_list<const char*> tokens) {
  Sequence s;
  for (auto t : tokens) s.tokens.push_back({t});
  return s;
}

Corpus corpus_of(std::initializer_list<std::initializer_list<const char*>> seqs) {
  Corpus c;
  for (auto s : seqs) {
    Sequence q = seq_of(s);
    q.labels.assign(q.length(), "L0");
    c.sequences.push_back(q);
  }
  return c;
}

}  // namespace

TEST(Templates, DescriptorGrammar) {
  for (const std::string d : {"bias:u", "bias:b", "u:col=0:off=-2", "b:col=1:off=3",
                              "ngram-u:col=0:w=3", "ngram-b:col=2:w=1"})
    EXPECT_EQ(parse_template(d).descriptor(), d);
  for (const std::string d : {"bias", "bias:x", "u:col=0", "u:off=1:col=0", "ngram-u:col=0:w=2",
                              "ngram-u:col=0:w=0", "tri:col=0:off=1", "u:col=-1:off=0",
                              "u:col=0:off=x"})
    EXPECT_THROW(parse_template(d), ParseError) << d;
}

TEST(Templates, FileSkipsCommentsAndRejectsDuplicates) {
  std::istringstream ok("# base\nu:col=0:off=0\n\n  b:col=0:off=0  \n");
  EXPECT_EQ(read_templates(ok).size(), 2u);
  std::istringstream dup("u:col=0:off=0\nu:col=0:off=0\n");
  try {
    read_templates(dup);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ExtractKeys, BiasFiresEverywhere) {
  std::vector<Template> tpl{parse_template("bias:u")};
  Sequence s = seq_of({"x", "y"});
  for (std::size_t t = 0; t < 2; ++t) {
    auto k = extract_keys(tpl, 0, s, t);
    ASSERT_TRUE(k);
    EXPECT_EQ(k->value, "bias");
  }
}

TEST(ExtractKeys, OffsetOutsideSequenceIsAbsent) {
  std::vector<Template> tpl{parse_template("u:col=0:off=1"), parse_template("u:col=0:off=-1")};
  Sequence s = seq_of({"c", "a", "t"});
  EXPECT_FALSE(extract_keys(tpl, 0, s, 2));
  EXPECT_EQ(extract_keys(tpl, 0, s, 1)->value, "t");
  EXPECT_FALSE(extract_keys(tpl, 1, s, 0));
  EXPECT_EQ(extract_keys(tpl, 1, s, 1)->value, "c");
}

TEST(ExtractKeys, NGramCenteredWindow) {
  std::vector<Template> tpl{parse_template("ngram-u:col=0:w=3")};
  Sequence s = seq_of({"c", "a", "t"});
  EXPECT_EQ(extract_keys(tpl, 0, s, 1)->value, "c|a|t");
  EXPECT_FALSE(extract_keys(tpl, 0, s, 0));
  EXPECT_FALSE(extract_keys(tpl, 0, s, 2));
}

TEST(ExtractKeys, NGramEscapesSeparator) {
  std::vector<Template> tpl{parse_template("ngram-u:col=0:w=3")};
  Sequence a = seq_of({"a|b", "c", "d"});
  Sequence b = seq_of({"a", "b|c", "d"});
  EXPECT_EQ(extract_keys(tpl, 0, a, 1)->value, "a\\|b|c|d");
  EXPECT_NE(extract_keys(tpl, 0, a, 1)->value, extract_keys(tpl, 0, b, 1)->value);
}

TEST(ExtractKeys, UnknownTemplateIsAnError) {
  std::vector<Template> tpl{parse_template("bias:u")};
  EXPECT_THROW(extract_keys(tpl, 3, seq_of({"a"}), 0), Error);
}

TEST(BlockIndex, SingleSequence) {
  Corpus c = corpus_of({{"a", "b", "a"}});
  TrainingSet ts = prepare_training(c, {parse_template("u:col=0:off=0")});
  auto a = ts.model.find_block(0, "a");
  auto b = ts.model.find_block(0, "b");
  ASSERT_TRUE(a && b);
  auto occ_a = ts.index.occurrences(*a);
  ASSERT_EQ(occ_a.size(), 1u);
  EXPECT_EQ(occ_a[0].first, 0u);
  EXPECT_EQ(occ_a[0].last, 2u);
  EXPECT_EQ(occ_a[0].positions, (std::vector<std::uint32_t>{0, 2}));
  auto occ_b = ts.index.occurrences(*b);
  ASSERT_EQ(occ_b.size(), 1u);
  EXPECT_EQ(occ_b[0].positions, (std::vector<std::uint32_t>{1}));
  EXPECT_EQ(ts.index.update_order()[0], *a);
}

TEST(BlockIndex, EmptyTemplateSetGivesEmptyIndex) {
  Corpus c = corpus_of({{"a", "b"}});
  TrainingSet ts = prepare_training(c, {});
  EXPECT_EQ(ts.index.num_blocks(), 0u);
  EXPECT_EQ(ts.instances[0].blocks.size(), 0u);
}

TEST(BlockIndex, MatchesLinearRescan) {
  std::mt19937_64 rng(11);
  auto templates = default_templates();
  templates.push_back(parse_template("u:col=0:off=-1"));
  templates.push_back(parse_template("ngram-b:col=0:w=3"));
  templates.push_back(parse_template("bias:u"));
  Corpus c = fixtures::random_corpus(rng, 40, 1, 9, 6, 3);
  TrainingSet ts = prepare_training(c, templates);
  const auto& m = ts.model;
  for (BlockId b = 0; b < m.num_blocks(); ++b) {
    const auto& info = m.block(b);
    const auto& ex = m.extractors()[info.extractor].extractor;
    std::map<std::uint32_t, std::vector<std::uint32_t>> expect;
    std::size_t total = 0;
    for (std::uint32_t i = 0; i < c.size(); ++i)
      for (std::uint32_t t = 0; t < c.sequences[i].length(); ++t) {
        auto v = extract(ex, c.sequences[i], t);
        if (v && *v == info.value) {
          expect[i].push_back(t);
          ++total;
        }
      }
    EXPECT_EQ(ts.index.count(b), total);
    auto occ = ts.index.occurrences(b);
    ASSERT_EQ(occ.size(), expect.size());
    for (const auto& o : occ) {
      EXPECT_EQ(o.positions, expect[o.sequence]);
      EXPECT_EQ(o.first, o.positions.front());
      EXPECT_EQ(o.last, o.positions.back());
    }
  }
  auto order = ts.index.update_order();
  for (std::size_t i = 1; i < order.size(); ++i)
    EXPECT_GE(ts.index.count(order[i - 1]), ts.index.count(order[i]));
}

TEST(BlockIndex, BiasBlockSpansWholeSequences) {
  Corpus c = corpus_of({{"a", "b", "c"}, {"d"}});
  TrainingSet ts = prepare_training(c, {parse_template("bias:u"), parse_template("bias:b")});
  ASSERT_EQ(ts.model.num_blocks(), 1u);
  auto occ = ts.index.occurrences(0);
  ASSERT_EQ(occ.size(), 2u);
  EXPECT_EQ(occ[0].first, 0u);
  EXPECT_EQ(occ[0].last, 2u);
  EXPECT_TRUE(ts.model.has_unigram(0) && ts.model.has_bigram(0));
}

TEST(Cutoff, MinCountOneAdmitsEverything) {
  Corpus c = corpus_of({{"a", "b", "a"}});
  auto tpl = std::vector<Template>{parse_template("u:col=0:off=0")};
  auto admitted = cutoff_filter(c, tpl, 1);
  EXPECT_EQ(admitted.size(), 2u);
  auto two = cutoff_filter(c, tpl, 2);
  ASSERT_EQ(two.size(), 1u);
  EXPECT_EQ(two.begin()->value, "a");
  EXPECT_THROW(cutoff_filter(c, tpl, 0), Error);
}

TEST(Cutoff, AdmittedSetShrinksWithThreshold) {
  std::mt19937_64 rng(5);
  Corpus c = fixtures::random_corpus(rng, 30, 2, 8, 25, 2);
  auto templates = default_templates();
  templates.push_back(parse_template("ngram-u:col=0:w=3"));
  std::size_t prev = SIZE_MAX;
  for (std::size_t k = 1; k <= 10; ++k) {
    auto n = cutoff_filter(c, templates, k).size();
    EXPECT_LE(n, prev);
    prev = n;
  }
}

TEST(Cutoff, PrepareTrainingDropsRareValues) {
  Corpus c = corpus_of({{"a", "b", "a"}, {"a", "c"}});
  TrainingSet ts = prepare_training(c, default_templates(), 2);
  EXPECT_EQ(ts.model.num_blocks(), 1u);
  EXPECT_TRUE(ts.model.find_block(0, "a"));
  EXPECT_EQ(ts.instances[0].at(1).size(), 0u);
}

TEST(Compile, UnknownValuesAreDropped) {
  Corpus c = corpus_of({{"a", "b"}});
  TrainingSet ts = prepare_training(c, default_templates());
  Instance inst = compile_instance(ts.model, seq_of({"a", "zzz"}));
  EXPECT_EQ(inst.at(0).size(), 1u);
  EXPECT_EQ(inst.at(1).size(), 0u);
  EXPECT_EQ(ts.model.num_blocks(), 2u);
}
