#include <gtest/gtest.h>

#include <cmath>

#include "cral/error.h"
#include "cral/loop.h"
#include "cral/synthetic.h"

namespace cral {
namespace {

TaggerConfig tiny_config() {
  TaggerConfig c;
  c.char_embed_dim = 4;
  c.char_hidden = 3;
  c.modeling_hidden = 4;
  c.token_hidden = 6;
  c.char_buckets = 32;
  c.use_cvt = false;
  return c;
}

Corpus synth(std::uint64_t seed, std::size_t n, const std::string& prefix, int variant = 0) {
  SyntheticOptions o;
  o.seed = seed;
  o.sentences = n;
  o.id_prefix = prefix;
  o.variant = variant;
  return generate_synthetic(o);
}

LoopConfig small_loop(Strategy s) {
  LoopConfig c;
  c.strategy = s;
  c.batch_size = 5;
  c.iterations = 2;
  c.fine_tune_epochs = 2;
  c.fine_tune_lr_coeff = 1e-3;
  return c;
}

TEST(LearningRate, ScalesWithLabeledSentences) {
  Corpus c = synth(1, 60, "p");
  AnnotationStore store(c);
  for (std::size_t i = 0; i < 50; ++i) store.insert({i, 0}, tags::X);
  store.insert({0, 1}, tags::X);
  LoopConfig cfg;
  cfg.fine_tune_lr_coeff = 2.5e-5;
  EXPECT_NEAR(fine_tune_learning_rate(cfg, store), 1.25e-3, 1e-15);
}

TEST(LoopConfig, ValidationAndJson) {
  LoopConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = LoopConfig{};
  c.paired_oracle = Strategy::Cral;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = LoopConfig{};
  c.strategy = Strategy::Committee;
  c.batch_size = 7;
  const LoopConfig back = loop_config_from_json(loop_config_to_json(c));
  EXPECT_EQ(back.strategy, Strategy::Committee);
  EXPECT_EQ(back.batch_size, 7u);
  nlohmann::json j = loop_config_to_json(c);
  j["nope"] = true;
  EXPECT_THROW(loop_config_from_json(j), InvalidArgument);
}

class Simulation : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    pool_ = new Corpus(synth(21, 40, "p"));
    test_ = new Corpus(synth(22, 20, "t"));
    TaggerConfig c = tiny_config();
    model_ = new TaggerParams(TaggerParams::initialize(c));
  }
  static void TearDownTestSuite() {
    delete pool_;
    delete test_;
    delete model_;
  }
  static Corpus* pool_;
  static Corpus* test_;
  static TaggerParams* model_;
};
Corpus* Simulation::pool_ = nullptr;
Corpus* Simulation::test_ = nullptr;
TaggerParams* Simulation::model_ = nullptr;

TEST_F(Simulation, StoreGrowsByBatchEachRound) {
  LoopConfig cfg = small_loop(Strategy::Cral);
  cfg.paired_oracle = Strategy::CralOracle;
  const RunReport r = run_simulation(*model_, *pool_, *test_, cfg);
  ASSERT_EQ(r.rows.size(), 3u);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const IterationRow& row = r.rows[i];
    EXPECT_EQ(row.iteration, static_cast<int>(i));
    EXPECT_EQ(row.annotations, 5 * i);
    EXPECT_LE(row.labeled_sentences, row.annotations);
    EXPECT_NEAR(row.learning_rate, cfg.fine_tune_lr_coeff * static_cast<double>(row.labeled_sentences), 1e-15);
    EXPECT_GE(row.accuracy, 0.0);
    EXPECT_LE(row.accuracy, 1.0);
    EXPECT_FALSE(row.wall_ms.has_value());
    if (i > 0) {
      EXPECT_EQ(row.selection.size(), 5u);
      EXPECT_TRUE(row.oracle_overlap.has_value());
      EXPECT_TRUE(row.confusion.has_value());
      for (const auto& s : row.selection) EXPECT_TRUE(s.confusing_tag.has_value());
    }
  }
}

TEST_F(Simulation, RerunsAreByteIdentical) {
  const LoopConfig cfg = small_loop(Strategy::Uncertainty);
  EXPECT_EQ(report_to_string(run_simulation(*model_, *pool_, *test_, cfg)),
            report_to_string(run_simulation(*model_, *pool_, *test_, cfg)));
}

TEST_F(Simulation, ReportJsonRoundTrip) {
  LoopConfig cfg = small_loop(Strategy::Random);
  cfg.iterations = 1;
  const RunReport r = run_simulation(*model_, *pool_, *test_, cfg);
  const std::string text = report_to_string(r);
  EXPECT_EQ(report_to_string(report_from_json(nlohmann::json::parse(text))), text);
  EXPECT_EQ(text.back(), '\n');
}

TEST_F(Simulation, OracleNeedsGoldPool) {
  Corpus goldless = *pool_;
  for (auto& s : goldless.sentences)
    for (auto& t : s.tokens) t.gold.reset();
  EXPECT_THROW(run_simulation(*model_, goldless, *test_, small_loop(Strategy::CralOracle)), InvalidArgument);
}

TEST_F(Simulation, UniformTagPoolHasNoSyncretismOrDrift) {
  Corpus nouns = *pool_;
  for (auto& s : nouns.sentences)
    for (auto& t : s.tokens) t.gold = tags::NOUN;
  LoopConfig cfg = small_loop(Strategy::Cral);
  cfg.iterations = 1;
  const RunReport r = run_simulation(*model_, nouns, *test_, cfg);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[1].syncretism, 0.0);
  EXPECT_EQ(r.rows[1].wd, 0.0);
}

TEST_F(Simulation, ExhaustedPoolStopsEarlyWithWarning) {
  const Corpus tiny = synth(30, 1, "x");
  LoopConfig cfg = small_loop(Strategy::Random);
  cfg.batch_size = 100;
  cfg.iterations = 3;
  const RunReport r = run_simulation(*model_, tiny, *test_, cfg);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[1].annotations, tiny.token_count());
  // One warning for the short batch, one for stopping.
  EXPECT_EQ(r.rows[1].warnings.size(), 2u);
}

TEST(Pretrain, RejectsUnlabeledCorpus) {
  Corpus src = synth(40, 5, "s", 1);
  const Corpus dev = synth(41, 5, "d", 1);
  src.sentences[0].tokens[0].gold.reset();
  PretrainConfig cfg;
  cfg.tagger = tiny_config();
  cfg.max_epochs = 1;
  EXPECT_THROW(pretrain({{src, "src"}}, {dev, "src"}, cfg), InvalidArgument);
}

TEST(Pretrain, TracksDevAccuracyAndZeroShot) {
  const Corpus src = synth(40, 30, "s", 1);
  const Corpus dev = synth(41, 10, "d", 1);
  const Corpus tgt = synth(42, 10, "e", 0);
  PretrainConfig cfg;
  cfg.tagger = tiny_config();
  cfg.max_epochs = 2;
  const LanguageCorpus eval{tgt, "tgt"};
  const PretrainResult r = pretrain({{src, "src"}}, {dev, "src"}, cfg, &eval);
  EXPECT_EQ(r.dev_accuracy.size(), 3u);
  ASSERT_TRUE(r.zero_shot_accuracy.has_value());
  EXPECT_GE(*r.zero_shot_accuracy, 0.0);
}

RunReport fake_report(const std::string& strategy, std::vector<double> acc) {
  RunReport r;
  r.strategy = strategy;
  r.seed = 1;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    IterationRow row;
    row.iteration = static_cast<int>(i);
    row.accuracy = acc[i];
    r.rows.push_back(row);
  }
  return r;
}

TEST(Compare, MeanDifferenceSkipsStartingRow) {
  const auto t = compare_runs({fake_report("cral", {0.5, 0.7, 0.8}), fake_report("rand", {0.5, 0.6, 0.7})});
  ASSERT_EQ(t.differences.size(), 1u);
  EXPECT_NEAR(t.differences[0].mean, 0.10, 1e-12);
  EXPECT_NEAR(t.differences[0].per_iteration[0], 0.0, 1e-12);
  const std::string csv = comparison_to_csv(t);
  EXPECT_NE(csv.find("cral_s1-rand_s1.accuracy"), std::string::npos);
  EXPECT_NE(csv.find("\nmean,"), std::string::npos);
}

TEST(Compare, IdenticalRunsDifferByZero) {
  const RunReport a = fake_report("cral", {0.5, 0.7});
  const auto t = compare_runs({a, a});
  EXPECT_EQ(t.differences[0].mean, 0.0);
  EXPECT_NE(t.labels[0], t.labels[1]);
}

TEST(Compare, Errors) {
  EXPECT_THROW(compare_runs({fake_report("a", {1, 2}), fake_report("b", {1, 2, 3})}), InvalidArgument);
  EXPECT_THROW(compare_runs({fake_report("a", {1})}, {"bogus"}), InvalidArgument);
  EXPECT_THROW(compare_runs({}), InvalidArgument);
}

TEST(Synthetic, DeterministicAndAmbiguous) {
  const Corpus a = synth(5, 50, "s");
  const Corpus b = synth(5, 50, "s");
  ASSERT_EQ(a.size(), 50u);
  EXPECT_TRUE(a.fully_gold());
  EXPECT_EQ(write_conllu(a, AnnotationStore(a), {true}), write_conllu(b, AnnotationStore(b), {true}));
  // The target variant is the ambiguous one; sources only need to be related.
  EXPECT_GE(synthetic_lexicon_stats(7, 0).syncretic_fraction(), 0.30);
}

}  // namespace
}  // namespace cral
