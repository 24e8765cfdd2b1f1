#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "cral/error.h"
#include "cral/strategies.h"

namespace cral {
namespace {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;

RowVectorXd dist(std::initializer_list<std::pair<TagId, double>> entries) {
  RowVectorXd p = RowVectorXd::Zero(TagSet::kSize);
  for (const auto& [t, v] : entries) p(t) = v;
  return p;
}

// One sentence per word, optionally gold-tagged.
struct Fixture {
  Corpus corpus;
  TypeIndex index;
  AnnotationStore store;
  CandidatePool pool;
  MarginalTable marginals;
  std::vector<MatrixXd> states;

  Fixture(const std::vector<std::string>& words, const std::vector<RowVectorXd>& rows,
          const std::vector<TagId>& gold = {}) {
    for (std::size_t i = 0; i < words.size(); ++i) {
      Sentence s;
      s.id = "s" + std::to_string(i);
      Token t;
      t.surface = words[i];
      t.type_key = make_type_key(words[i]);
      if (i < gold.size()) t.gold = gold[i];
      s.tokens.push_back(t);
      corpus.sentences.push_back(s);
      marginals.push_back(rows.at(i));
      states.push_back(MatrixXd::Zero(1, 2));
    }
    index = TypeIndex(corpus);
    store = AnnotationStore(corpus);
    rebuild();
  }
  void rebuild() { pool = build_candidate_pool(corpus, index, store); }
  std::vector<std::vector<TagId>> argmax() const {
    std::vector<std::vector<TagId>> out;
    for (const auto& m : marginals) {
      Eigen::Index j;
      m.row(0).maxCoeff(&j);
      out.push_back({static_cast<TagId>(j)});
    }
    return out;
  }
};

TEST(Scores, TokenEntropy) {
  EXPECT_NEAR(token_entropy(dist({{0, .25}, {1, .25}, {2, .25}, {3, .25}})), std::log(4.0), 1e-12);
  EXPECT_EQ(token_entropy(dist({{5, 1.0}})), 0.0);
  EXPECT_NEAR(token_entropy(dist({{0, .5}, {1, .5}})) * 2, 2 * std::log(2.0), 1e-12);
}

TEST(Scores, CommitteeDisagreement) {
  EXPECT_EQ(committee_disagreement({3, 3, 3}), 0);
  EXPECT_EQ(committee_disagreement({3, 3, 4}), 1);
  EXPECT_EQ(committee_disagreement({3, 4, 5}), 2);
}

TEST(Scores, TokenConfusionWithRunnerUp) {
  const TokenConfusion c = token_confusion(dist({{tags::NOUN, .7}, {tags::PROPN, .2}, {tags::ADJ, .1}}));
  EXPECT_EQ(c.predicted, tags::NOUN);
  EXPECT_EQ(c.runner_up, tags::PROPN);
  EXPECT_NEAR(c.score, 0.3, 1e-12);
  EXPECT_THROW(token_confusion(RowVectorXd::Ones(1)), InvalidArgument);
}

TEST(Pool, ExcludesAnnotatedAndBoundaryTokens) {
  Fixture f({"a", "a", "b"}, std::vector<RowVectorXd>(3, dist({{0, 1.0}})));
  f.store.insert({0, 0}, 0);
  f.rebuild();
  ASSERT_EQ(f.pool.types.size(), 2u);
  EXPECT_EQ(f.pool.find("a")->occurrences.size(), 1u);
  f.corpus.sentences[2].tokens[0].boundary = true;
  f.rebuild();
  EXPECT_EQ(f.pool.find("b"), nullptr);
}

TEST(Random, DeterministicAndDistinct) {
  Fixture f({"a", "b", "c", "d", "e", "a"}, std::vector<RowVectorXd>(6, dist({{0, 1.0}})));
  const auto x = select_random(f.pool, 3, 42);
  const auto y = select_random(f.pool, 3, 42);
  ASSERT_EQ(x.size(), 3u);
  std::set<std::string> keys;
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(x[i].type_key, y[i].type_key);
    EXPECT_EQ(x[i].position, y[i].position);
    keys.insert(x[i].type_key);
  }
  EXPECT_EQ(keys.size(), 3u);
  EXPECT_EQ(select_random(f.pool, 50, 1).size(), 5u);
  EXPECT_TRUE(select_random(CandidatePool{}, 5, 1).empty());
}

TEST(Random, TypesEquallyLikely) {
  Fixture f({"a", "b", "b", "b"}, std::vector<RowVectorXd>(4, dist({{0, 1.0}})));
  int a = 0;
  const int draws = 10000;
  for (int s = 0; s < draws; ++s) a += select_random(f.pool, 1, static_cast<std::uint64_t>(s))[0].type_key == "a";
  EXPECT_NEAR(static_cast<double>(a) / draws, 0.5, 0.02);
}

TEST(TopB, OrdersByScoreThenFrequencyThenKey) {
  Fixture f({"a", "b", "b", "c", "d"}, std::vector<RowVectorXd>(5, dist({{0, 1.0}})));
  TypeScoreTable t;
  t.scores = {{"a", 1.0}, {"b", 1.0}, {"c", 1.0}, {"d", 2.0}};
  EXPECT_EQ(top_b(t, f.pool, 10), (std::vector<std::string>{"d", "b", "a", "c"}));
  EXPECT_EQ(top_b(t, f.pool, 2), (std::vector<std::string>{"d", "b"}));
  EXPECT_TRUE(top_b(t, f.pool, 0).empty());
}

TEST(Centroid, NearestRowAndTies) {
  MatrixXd pts(3, 1);
  pts << 0, 1, 5;
  EXPECT_EQ(nearest_to_centroid(pts), 1u);
  MatrixXd tie(2, 1);
  tie << -1, 1;
  EXPECT_EQ(nearest_to_centroid(tie), 0u);
  EXPECT_THROW(nearest_to_centroid(MatrixXd(0, 2)), InvalidArgument);
}

TEST(Uncertainty, SumsEntropyAndPicksMostUncertainOccurrence) {
  Fixture f({"a", "a", "b"}, {dist({{0, .5}, {1, .5}}), dist({{0, .9}, {1, .1}}), dist({{0, .25}, {1, .25}, {2, .25}, {3, .25}})});
  const TypeScoreTable t = score_uns(f.marginals, f.pool);
  EXPECT_NEAR(t.scores.at("a"), std::log(2.0) + token_entropy(f.marginals[1].row(0)), 1e-12);
  const auto batch = select_uns(f.marginals, f.pool, 2);
  ASSERT_EQ(batch.size(), 2u);
  EXPECT_EQ(batch[0].type_key, "b");
  EXPECT_EQ(batch[1].position, (Position{0, 0}));
}

TEST(Committee, SumsDisagreement) {
  Fixture f({"a", "a", "b"}, std::vector<RowVectorXd>(3, dist({{0, 1.0}})));
  const std::vector<std::vector<std::vector<TagId>>> committee = {
      {{1}, {1}, {2}}, {{1}, {3}, {2}}, {{1}, {4}, {2}}};
  const TypeScoreTable t = score_qbc(committee, f.pool);
  EXPECT_EQ(t.scores.at("a"), 2.0);
  EXPECT_EQ(t.scores.at("b"), 0.0);
  const auto batch = select_qbc(committee, f.pool, 1);
  EXPECT_EQ(batch[0].position, (Position{1, 0}));
  EXPECT_THROW(score_qbc({committee[0]}, f.pool), InvalidArgument);
}

TEST(Cral, RunnerUpCountsSumToOccurrences) {
  Fixture f({"a", "a", "a", "b"}, {dist({{0, .6}, {1, .4}}), dist({{0, .6}, {2, .4}}),
                                   dist({{0, .6}, {1, .3}, {2, .1}}), dist({{3, 1.0}})});
  const TypeScoreTable t = score_cral(f.marginals, f.pool);
  for (const auto& type : f.pool.types) {
    const auto& counts = t.confusion_counts.at(type.key);
    int sum = 0;
    for (int c : counts) sum += c;
    EXPECT_EQ(static_cast<std::size_t>(sum), type.occurrences.size());
  }
  EXPECT_EQ(t.confusion_counts.at("a")[1], 2);
  EXPECT_NEAR(t.scores.at("a"), 1.2, 1e-12);
}

TEST(Cral, SingletonTypeRepresentsItself) {
  Fixture f({"a"}, {dist({{0, .6}, {4, .4}})});
  const auto batch = cral_select(f.marginals, f.states, f.pool, 1);
  ASSERT_EQ(batch.size(), 1u);
  EXPECT_EQ(batch[0].position, (Position{0, 0}));
  EXPECT_EQ(batch[0].confusing_tag, 4);
}

Fixture planted() {
  // Four occurrences confused with NOUN in one cluster, two with VERB far away.
  const RowVectorXd noun = dist({{tags::ADJ, .6}, {tags::NOUN, .3}, {tags::VERB, .1}});
  const RowVectorXd verb = dist({{tags::ADJ, .6}, {tags::VERB, .35}, {tags::NOUN, .05}});
  Fixture f({"x", "x", "x", "x", "x", "x", "y"}, {noun, noun, noun, noun, verb, verb, dist({{0, .99}, {1, .01}})});
  const double pts[6][2] = {{1.0, 0}, {1.1, 0}, {0.9, 0}, {1.0, 0.05}, {-5, 5}, {-5, 5}};
  for (int i = 0; i < 6; ++i) f.states[i] << pts[i][0], pts[i][1];
  return f;
}

std::size_t expected_representative(const Fixture& f, TagId j) {
  const auto& occ = f.pool.find("x")->occurrences;
  MatrixXd w(static_cast<Eigen::Index>(occ.size()), 2);
  for (std::size_t k = 0; k < occ.size(); ++k)
    w.row(static_cast<Eigen::Index>(k)) = f.marginals[occ[k].sentence](0, j) * f.states[occ[k].sentence].row(0);
  const RowVectorXd c = w.colwise().mean();
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < w.rows(); ++i)
    if ((w.row(i) - c).norm() < (w.row(static_cast<Eigen::Index>(best)) - c).norm()) best = static_cast<std::size_t>(i);
  return best;
}

TEST(Cral, PlantedClusterPicksMajorityConfusion) {
  const Fixture f = planted();
  const auto batch = cral_select(f.marginals, f.states, f.pool, 1);
  ASSERT_EQ(batch.size(), 1u);
  EXPECT_EQ(batch[0].type_key, "x");
  EXPECT_EQ(batch[0].confusing_tag, tags::NOUN);
  EXPECT_LT(batch[0].position.sentence, 4u);
  EXPECT_EQ(batch[0].position.sentence, expected_representative(f, tags::NOUN));
}

TEST(Cral, RepresentativeInvariantToStateScale) {
  Fixture f = planted();
  const auto before = cral_select(f.marginals, f.states, f.pool, 2);
  for (auto& s : f.states) s *= 37.5;
  const auto after = cral_select(f.marginals, f.states, f.pool, 2);
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i].position, after[i].position);
}

TEST(Oracles, UncertaintyOracleUsesGoldLikelihood) {
  Fixture f({"a", "b"}, {dist({{tags::NOUN, .5}, {tags::VERB, .5}}), dist({{tags::NOUN, .81}, {tags::VERB, .19}})},
            {tags::NOUN, tags::NOUN});
  const GoldOracle gold(f.corpus);
  const auto batch = select_uns_oracle(f.marginals, gold, f.pool, 2);
  ASSERT_EQ(batch.size(), 2u);
  EXPECT_EQ(batch[0].type_key, "a");
  EXPECT_NEAR(batch[0].score, 0.693, 1e-3);
  EXPECT_NEAR(batch[1].score, 0.211, 1e-3);
}

TEST(Oracles, CommitteeOracleCountsErrorsAndSkipsCorrectTypes) {
  Fixture f({"a", "a", "b"}, {dist({{1, 1.0}}), dist({{1, 1.0}}), dist({{2, 1.0}})}, {1, 3, 2});
  const GoldOracle gold(f.corpus);
  const auto batch = select_qbc_oracle(f.argmax(), gold, f.pool, 5);
  ASSERT_EQ(batch.size(), 1u);
  EXPECT_EQ(batch[0].type_key, "a");
  EXPECT_EQ(batch[0].position, (Position{1, 0}));
}

TEST(Oracles, CralOraclePicksMostCommonMissedGoldTag) {
  const RowVectorXd pron = dist({{tags::PRON, .9}, {tags::DET, .1}});
  const RowVectorXd det = dist({{tags::DET, .9}, {tags::PRON, .1}});
  Fixture f({"die", "die", "die", "die", "die", "der"}, {pron, pron, pron, det, pron, det},
            {tags::DET, tags::DET, tags::DET, tags::PRON, tags::PRON, tags::DET});
  f.states[0] << 0, 0;
  f.states[1] << 1, 0;
  f.states[2] << 2, 0;
  const GoldOracle gold(f.corpus);
  const auto batch = select_cral_oracle(f.argmax(), gold, f.states, f.pool, 5);
  ASSERT_EQ(batch.size(), 1u);
  EXPECT_EQ(batch[0].type_key, "die");
  EXPECT_EQ(batch[0].confusing_tag, tags::DET);
  EXPECT_EQ(batch[0].position, (Position{1, 0}));
  EXPECT_EQ(batch[0].score, 4.0);
}

TEST(Oracles, MissingGoldIsAnError) {
  Fixture f({"a"}, {dist({{0, 1.0}})});
  const GoldOracle gold(f.corpus);
  EXPECT_THROW(select_qbc_oracle(f.argmax(), gold, f.pool, 1), InvalidArgument);
  SelectionContext ctx;
  EXPECT_THROW(select(Strategy::CralOracle, f.pool, 1, ctx), InvalidArgument);
}

TEST(Strategies, WireNamesRoundTrip) {
  for (Strategy s : all_strategies()) EXPECT_EQ(parse_strategy(strategy_name(s)), s);
  EXPECT_EQ(all_strategies().size(), 7u);
  EXPECT_TRUE(requires_gold(Strategy::UncertaintyOracle));
  EXPECT_FALSE(requires_gold(Strategy::Cral));
  EXPECT_THROW(parse_strategy("bogus"), InvalidArgument);
}

}  // namespace
}  // namespace cral
