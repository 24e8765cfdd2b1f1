#pragma once

#include <cstdint>
#include <vector>

#include "cral/corpus.h"
#include "cral/tagger.h"

namespace cral {

struct LabeledExample {
  const Sentence* sentence = nullptr;
  PartialLabeling constraints;
};

// Every gold-tagged token of every sentence becomes a constraint.
std::vector<LabeledExample> examples_from_gold(const Corpus& corpus);
// Only the stored annotations; sentences without annotations are skipped.
std::vector<LabeledExample> examples_from_store(const Corpus& corpus, const AnnotationStore& store);

struct TrainOptions {
  double lr = 0.015;
  int max_epochs = 50;
  // Epochs without a dev-accuracy improvement before stopping.
  int patience = 5;
  int batch_size = 8;
  // Global gradient-norm clip; <= 0 disables.
  double clip_norm = 5.0;
  bool use_cvt = true;
  std::uint64_t seed = 1;
  // Disable dropout (used by deterministic audits).
  bool dropout = true;
  // With a dev corpus, whether the starting parameters compete with the
  // trained epochs for the best dev accuracy.
  bool keep_initial = true;
};

struct TrainResult {
  TaggerParams params;
  std::vector<double> epoch_loss;    // mean supervised loss per labeled sentence
  std::vector<double> dev_accuracy;  // index 0 is the initial model
  int best_epoch = 0;
  int epochs_run = 0;
};

// Minimizes the constrained negative log-likelihood of the labeled examples
// with plain SGD. With use_cvt, each labeled mini-batch is followed by one
// unlabeled mini-batch minimizing the cross-view loss. With a dev corpus the
// best dev-accuracy parameters (including the initial ones) are returned.
//
// Throws InvalidArgument when no token is labeled and DivergenceError when a
// loss becomes non-finite.
TrainResult train(TaggerParams init, const std::vector<LabeledExample>& labeled,
                  const std::vector<const Sentence*>& unlabeled, const Corpus* dev,
                  const TrainOptions& options);

// Convenience overload: labeled corpus with a store (or full gold when store
// is null) plus an unlabeled corpus for CVT. Starts from a fresh model.
TrainResult train(const Corpus& labeled, const AnnotationStore* store, const Corpus& unlabeled,
                  const TaggerConfig& config, const Corpus* dev, TrainOptions options);

// Viterbi accuracy over non-boundary gold tokens.
double evaluate_accuracy(const Corpus& corpus, const TaggerParams& params);

}  // namespace cral
