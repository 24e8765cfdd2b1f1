#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "cral/corpus.h"
#include "cral/crf.h"
#include "cral/nn.h"

namespace cral {

enum class Decoder { Crf, Softmax };

struct TaggerConfig {
  int char_embed_dim = 30;
  int char_hidden = 25;
  int modeling_hidden = 100;
  int token_hidden = 200;
  double dropout_char = 0.3;
  double dropout_outputs = 0.5;
  double sgd_lr = 0.015;
  std::uint64_t seed = 1;
  bool use_cvt = true;
  Decoder decoder = Decoder::Crf;
  // Characters are hashed into this many embedding rows.
  int char_buckets = 1024;

  // Throws InvalidArgument when a dimension or rate is out of range.
  void validate() const;
  int attention_dim() const { return 2 * char_hidden; }
  int word_dim() const { return 2 * modeling_hidden; }
  int state_dim() const { return 2 * token_hidden; }
};

enum class View { Full, Fwd, Bwd, Fut, Pst };
const char* view_name(View v);

struct TaggerParams {
  TaggerConfig config;
  Eigen::MatrixXd char_embeddings;  // buckets x char_embed_dim
  nn::BiLstmParams char_lstm;
  nn::AttentionParams attention;
  nn::BiLstmParams modeling_lstm;
  nn::BiLstmParams token_lstm;
  nn::LinearParams emission;  // K x state_dim
  CrfParams crf;
  // Auxiliary per-token softmax heads for the restricted views.
  nn::LinearParams view_fwd, view_bwd, view_fut, view_pst;
  Eigen::VectorXd fut_boundary;  // stands in for h_fwd at t = -1
  Eigen::VectorXd pst_boundary;  // stands in for h_bwd at t = N

  // All-zero parameters of the configured shape.
  static TaggerParams zeros(const TaggerConfig& config);
  // Randomly initialized from config.seed.
  static TaggerParams initialize(const TaggerConfig& config);

  std::vector<nn::TensorRef> tensors();
  std::size_t parameter_count();

  TaggerParams zeros_like() const { return zeros(config); }
};

// this += scale * other, tensor by tensor.
void axpy(TaggerParams& target, double scale, TaggerParams& other);
double squared_norm(TaggerParams& params);

struct EncoderStates {
  Eigen::MatrixXd fwd;  // N x token_hidden
  Eigen::MatrixXd bwd;  // N x token_hidden

  Eigen::MatrixXd full() const;
};

// Training mode draws dropout masks from rng; evaluation mode (rng == nullptr)
// applies none.
EncoderStates encode(const Sentence& sentence, const TaggerParams& params,
                     nn::Rng* rng = nullptr);

// Emission scores for the full view, N x K.
Eigen::MatrixXd emissions(const Sentence& sentence, const TaggerParams& params);

// Softmax outputs of an auxiliary view, N x K.
Eigen::MatrixXd view_distribution(const EncoderStates& states, const TaggerParams& params,
                                  View view);

// Negative constrained log-likelihood of the annotated tokens. Adds its
// gradient into grad when non-null.
double supervised_loss(const Sentence& sentence, const PartialLabeling& constraints,
                       const TaggerParams& params, TaggerParams* grad, nn::Rng* rng = nullptr);

// Sum over tokens and auxiliary views of KL(teacher || view). The teacher
// marginals are constants; pass the full-view marginals computed beforehand.
double cvt_loss(const Sentence& sentence, const Eigen::MatrixXd& teacher,
                const TaggerParams& params, TaggerParams* grad, nn::Rng* rng = nullptr);

// Teacher marginals (evaluation mode) followed by the CVT loss.
double cvt_loss(const Sentence& sentence, const TaggerParams& params);

// Per-sentence tag marginals, each N x K.
using MarginalTable = std::vector<Eigen::MatrixXd>;

struct SentencePrediction {
  Eigen::MatrixXd marginals;   // N x K, full view
  Eigen::MatrixXd states;      // N x state_dim
  std::vector<TagId> viterbi;  // decoded sequence
  std::vector<TagId> argmax;   // per-token argmax of the marginals
  std::vector<TagId> fwd_argmax;
  std::vector<TagId> bwd_argmax;
};

struct CorpusPrediction {
  std::vector<SentencePrediction> sentences;

  MarginalTable marginals() const;
  std::vector<std::vector<TagId>> viterbi() const;
};

// Evaluation-mode inference over a corpus. Character encodings are cached
// per surface form since they do not depend on context.
CorpusPrediction predict(const Corpus& corpus, const TaggerParams& params);
MarginalTable predict_marginals(const Corpus& corpus, const TaggerParams& params);

}  // namespace cral
