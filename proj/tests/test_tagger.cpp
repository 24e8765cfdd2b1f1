#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "cral/checkpoint.h"
#include "cral/error.h"
#include "cral/loop.h"
#include "cral/synthetic.h"
#include "cral/tagger.h"
#include "cral/trainer.h"

namespace cral {
namespace {

using Eigen::MatrixXd;

Sentence make_sentence(const std::vector<std::string>& words, const std::vector<TagId>& gold = {}) {
  Sentence s;
  s.id = "t";
  for (std::size_t i = 0; i < words.size(); ++i) {
    Token tok;
    tok.surface = words[i];
    tok.type_key = make_type_key(words[i]);
    if (i < gold.size()) tok.gold = gold[i];
    s.tokens.push_back(tok);
  }
  return s;
}

TaggerConfig tiny_config() {
  TaggerConfig c;
  c.char_embed_dim = 3;
  c.char_hidden = 2;
  c.modeling_hidden = 3;
  c.token_hidden = 3;
  c.char_buckets = 16;
  c.seed = 4;
  return c;
}

TEST(Tagger, ConfigValidation) {
  TaggerConfig c = tiny_config();
  EXPECT_NO_THROW(c.validate());
  c.token_hidden = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = tiny_config();
  c.dropout_outputs = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Tagger, EncoderShapes) {
  const TaggerParams p = TaggerParams::initialize(tiny_config());
  const Sentence s = make_sentence({"der", "Hund", "läuft", "."});
  const EncoderStates st = encode(s, p);
  EXPECT_EQ(st.fwd.rows(), 4);
  EXPECT_EQ(st.fwd.cols(), 3);
  EXPECT_EQ(st.full().cols(), 6);
  const MatrixXd e = emissions(s, p);
  EXPECT_EQ(e.rows(), 4);
  EXPECT_EQ(e.cols(), TagSet::kSize);
}

TEST(Tagger, EvaluationModeIsDeterministic) {
  const TaggerParams p = TaggerParams::initialize(tiny_config());
  const TaggerParams q = TaggerParams::initialize(tiny_config());
  const Sentence s = make_sentence({"a", "bc", "def"});
  EXPECT_EQ(emissions(s, p), emissions(s, q));
  EXPECT_EQ(encode(s, p).full(), encode(s, p).full());
}

TEST(Tagger, DropoutOnlyInTrainingMode) {
  TaggerConfig c = tiny_config();
  c.dropout_outputs = 0.5;
  const TaggerParams p = TaggerParams::initialize(c);
  const Sentence s = make_sentence({"a", "bc", "def", "ghij"});
  nn::Rng rng(1);
  EXPECT_NE(encode(s, p, &rng).full(), encode(s, p).full());
}

TEST(Tagger, ZeroModelIsUniform) {
  const TaggerParams p = TaggerParams::zeros(tiny_config());
  const Sentence s = make_sentence({"x", "y"});
  const CorpusPrediction pred = predict(Corpus{{s}, {}}, p);
  const MatrixXd& m = pred.sentences[0].marginals;
  EXPECT_NEAR(m.maxCoeff(), 1.0 / 17.0, 1e-12);
  EXPECT_NEAR(m.minCoeff(), 1.0 / 17.0, 1e-12);
}

TEST(Tagger, PredictMatchesCrfMarginals) {
  const TaggerParams p = TaggerParams::initialize(tiny_config());
  const Sentence s = make_sentence({"eins", "zwei", "drei"});
  const CorpusPrediction pred = predict(Corpus{{s}, {}}, p);
  const MatrixXd e = emissions(s, p);
  EXPECT_LT((pred.sentences[0].marginals - crf_marginals(e, p.crf)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(pred.sentences[0].viterbi, viterbi(e, p.crf));
  EXPECT_EQ(pred.sentences[0].states.cols(), 6);
}

TEST(Tagger, CrossViewKlForKnownDistributions) {
  TaggerParams p = TaggerParams::zeros(tiny_config());
  for (nn::LinearParams* head : {&p.view_fwd, &p.view_bwd, &p.view_fut, &p.view_pst}) {
    head->b.setConstant(-1e3);
    head->b(0) = std::log(0.25);
    head->b(1) = std::log(0.75);
  }
  MatrixXd teacher = MatrixXd::Zero(1, TagSet::kSize);
  teacher(0, 0) = teacher(0, 1) = 0.5;
  const double per_view = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  EXPECT_NEAR(per_view, 0.14384, 1e-5);
  EXPECT_NEAR(cvt_loss(make_sentence({"a"}), teacher, p, nullptr), 4 * per_view, 1e-9);
}

TEST(Tagger, CrossViewLossIsNonNegative) {
  const TaggerParams p = TaggerParams::initialize(tiny_config());
  EXPECT_GE(cvt_loss(make_sentence({"a", "b", "c"}), p), 0.0);
}

// Central differences against the analytic gradient, a few coordinates of
// every tensor.
void audit(const std::function<double(const TaggerParams&, TaggerParams*)>& loss) {
  TaggerParams p = TaggerParams::initialize(tiny_config());
  for (auto& t : p.tensors()) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] += 0.05 * std::sin(1.7 * i + 0.3);
  }
  TaggerParams grad = p.zeros_like();
  loss(p, &grad);
  auto params = p.tensors();
  auto grads = grad.tensors();
  ASSERT_EQ(params.size(), grads.size());
  nn::Rng rng(99);
  const double h = 1e-4;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& t = params[k];
    for (int draw = 0; draw < 6; ++draw) {
      const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(t.size())));
      const double keep = t.data[i];
      t.data[i] = keep + h;
      const double up = loss(p, nullptr);
      t.data[i] = keep - h;
      const double down = loss(p, nullptr);
      t.data[i] = keep;
      const double numeric = (up - down) / (2 * h);
      EXPECT_NEAR(grads[k].data[i], numeric, 1e-6 + 1e-4 * std::abs(numeric))
          << t.name << "[" << i << "]";
    }
  }
}

TEST(Gradients, SupervisedLoss) {
  const Sentence s = make_sentence({"die", "Katze", "schläft", "zu"});
  const PartialLabeling c{{0, tags::DET}, {2, tags::VERB}};
  audit([&](const TaggerParams& p, TaggerParams* g) { return supervised_loss(s, c, p, g); });
}

TEST(Gradients, SoftmaxDecoder) {
  const Sentence s = make_sentence({"die", "Katze", "schläft"});
  const PartialLabeling c{{1, tags::NOUN}};
  audit([&](const TaggerParams& p, TaggerParams* g) {
    TaggerParams q = p;
    q.config.decoder = Decoder::Softmax;
    return supervised_loss(s, c, q, g);
  });
}

TEST(Gradients, CrossViewLoss) {
  const Sentence s = make_sentence({"ein", "kleines", "Haus"});
  MatrixXd teacher = MatrixXd::Constant(3, TagSet::kSize, 0.01);
  teacher.col(3).array() += 1.0 - 0.01 * TagSet::kSize;
  audit([&](const TaggerParams& p, TaggerParams* g) { return cvt_loss(s, teacher, p, g); });
}

Corpus small_gold(std::uint64_t seed, std::size_t n) {
  SyntheticOptions o;
  o.seed = seed;
  o.sentences = n;
  return generate_synthetic(o);
}

TEST(Training, LossDecreases) {
  const Corpus c = small_gold(3, 40);
  TrainOptions o;
  o.max_epochs = 5;
  o.use_cvt = false;
  o.dropout = false;
  o.lr = 0.05;
  const TrainResult r = train(c, nullptr, Corpus{}, tiny_config(), nullptr, o);
  ASSERT_EQ(r.epoch_loss.size(), 5u);
  EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(Training, NoLabelsIsAnError) {
  const Corpus c = small_gold(3, 5);
  const AnnotationStore empty(c);
  EXPECT_THROW(train(c, &empty, Corpus{}, tiny_config(), nullptr, TrainOptions{}), InvalidArgument);
}

TEST(Training, EmptyStoreFineTuneIsNoOp) {
  const Corpus c = small_gold(3, 5);
  const TaggerParams p = TaggerParams::initialize(tiny_config());
  const TaggerParams q = fine_tune(p, c, AnnotationStore(c), LoopConfig{}, 1);
  EXPECT_EQ(serialize_checkpoint(p), serialize_checkpoint(q));
}

TEST(Checkpoint, RoundTripIsExact) {
  TaggerConfig c = tiny_config();
  c.decoder = Decoder::Softmax;
  c.use_cvt = false;
  const TaggerParams p = TaggerParams::initialize(c);
  const std::string bytes = serialize_checkpoint(p);
  const TaggerParams q = deserialize_checkpoint(bytes);
  EXPECT_EQ(q.config.decoder, Decoder::Softmax);
  EXPECT_EQ(q.config.char_buckets, 16);
  EXPECT_EQ(serialize_checkpoint(q), bytes);
  const Sentence s = make_sentence({"x", "yz"});
  EXPECT_EQ(emissions(s, p), emissions(s, q));
}

TEST(Checkpoint, RejectsCorruption) {
  const std::string bytes = serialize_checkpoint(TaggerParams::initialize(tiny_config()));
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), Error);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 8)), Error);
  EXPECT_THROW(deserialize_checkpoint(bytes + "extra"), Error);
  EXPECT_THROW(deserialize_checkpoint(""), Error);
}

TEST(Checkpoint, ConfigJsonRejectsUnknownFields) {
  nlohmann::json j = config_to_json(tiny_config());
  EXPECT_EQ(config_from_json(j).token_hidden, 3);
  j["bogus"] = 1;
  EXPECT_THROW(config_from_json(j), Error);
}

}  // namespace
}  // namespace cral
