#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cral/corpus.h"
#include "cral/strategies.h"
#include "cral/tagger.h"

namespace cral {

using TagSequences = std::vector<std::vector<TagId>>;

// Fraction of correctly predicted non-boundary gold tokens. Throws
// InvalidArgument when predictions and corpus are not aligned.
double token_accuracy(const TagSequences& predictions, const Corpus& gold);

// Distance between the annotated and gold tag distributions of one type:
// sum over tags present in its annotations of |p_AL(j) - p*(j)|.
// Throws InvalidArgument when the type has no annotation.
double wasserstein_type_distance(const std::string& type_key, const AnnotationStore& store,
                                 const Corpus& gold_corpus);

struct WassersteinSummary {
  std::map<std::string, double> per_type;
  double mean = 0.0;  // unweighted over annotated types; 0 when none
};

WassersteinSummary corpus_wasserstein(const AnnotationStore& store, const Corpus& gold_corpus);

struct IterationSnapshot {
  int iteration = 0;
  TagSequences predictions;
  double accuracy = 0.0;
};

// Fraction of tokens that were correct in prev and wrong in curr, among the
// tokens correct in prev. Zero when prev has no correct token.
double confusion_score(const IterationSnapshot& prev, const IterationSnapshot& curr,
                       const Corpus& gold);

// Static calibration error with equal-count bins per tag, count-weighted:
// sum_k sum_b n_kb / (N K) * |mean p_k - freq(gold == k)|.
double static_calibration_error(const MarginalTable& marginals, const Corpus& gold,
                                int num_bins = 10);
// Same, over flat token rows and labels.
double static_calibration_error(const Eigen::MatrixXd& probs, const std::vector<TagId>& labels,
                                int num_bins = 10);

// Misclassified fraction among the min(b, n) occurrences of a type nearest
// (unweighted Euclidean) to the representative's representation.
double neighborhood_purity(const std::vector<Position>& occurrences, Position representative,
                           const std::vector<Eigen::MatrixXd>& states,
                           const TagSequences& predictions, const Corpus& gold,
                           std::size_t b = 100);

struct PuritySummary {
  std::vector<double> values;
  double mean = 0.0;
  double median = 0.0;
};

// Purity of every batch entry against all non-boundary occurrences of its type.
PuritySummary batch_purity(const SelectionBatch& batch, const TypeIndex& index,
                           const Corpus& gold, const std::vector<Eigen::MatrixXd>& states,
                           const TagSequences& predictions, std::size_t b = 100);

// Shared (type, confusing tag) pairs divided by the size of batch_a.
double oracle_overlap(const SelectionBatch& batch_a, const SelectionBatch& batch_b);

// Fraction of batch types carrying at least two distinct gold tags in the corpus.
double syncretism_rate(const SelectionBatch& batch, const Corpus& gold_corpus);
double syncretism_rate(const SelectionBatch& batch, const Corpus& gold_corpus,
                       const TypeIndex& index);

}  // namespace cral
