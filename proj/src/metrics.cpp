#include "cral/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "cral/error.h"

namespace cral {

namespace {

void check_aligned(const TagSequences& predictions, const Corpus& gold) {
  if (predictions.size() != gold.sentences.size()) {
    throw InvalidArgument("predictions cover " + std::to_string(predictions.size()) +
                          " sentences, corpus has " + std::to_string(gold.sentences.size()));
  }
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].size() != gold.sentences[i].tokens.size()) {
      throw InvalidArgument("prediction length mismatch in sentence " + gold.sentences[i].id);
    }
  }
}

bool scored(const Token& t) { return !t.boundary && t.gold.has_value(); }

}  // namespace

double token_accuracy(const TagSequences& predictions, const Corpus& gold) {
  check_aligned(predictions, gold);
  std::size_t total = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& tokens = gold.sentences[i].tokens;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (!scored(tokens[t])) continue;
      ++total;
      correct += predictions[i][t] == *tokens[t].gold;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

double wd_from_index(const std::string& key, const AnnotationStore& store, const Corpus& gold,
                     const TypeIndex& index) {
  std::map<TagId, std::size_t> counts;
  std::size_t total = 0;
  for (const auto& pos : index.postings(key)) {
    if (auto tag = store.tag(pos)) {
      ++counts[*tag];
      ++total;
    }
  }
  if (total == 0) throw InvalidArgument("type '" + key + "' has no annotation");
  const auto reference = gold_tag_distribution(key, gold, index);
  double d = 0.0;
  for (const auto& [tag, n] : counts) {
    const double p_al = static_cast<double>(n) / static_cast<double>(total);
    auto it = reference.find(tag);
    d += std::abs(p_al - (it == reference.end() ? 0.0 : it->second));
  }
  return d;
}

}  // namespace

double wasserstein_type_distance(const std::string& type_key, const AnnotationStore& store,
                                 const Corpus& gold_corpus) {
  return wd_from_index(type_key, store, gold_corpus, TypeIndex(gold_corpus));
}

WassersteinSummary corpus_wasserstein(const AnnotationStore& store, const Corpus& gold_corpus) {
  const TypeIndex index(gold_corpus);
  std::set<std::string> keys;
  for (const auto& [pos, entry] : store.entries()) {
    keys.insert(gold_corpus.sentences.at(pos.sentence).tokens.at(pos.token).type_key);
  }
  WassersteinSummary out;
  for (const auto& key : keys) out.per_type[key] = wd_from_index(key, store, gold_corpus, index);
  if (!out.per_type.empty()) {
    double s = 0.0;
    for (const auto& [key, v] : out.per_type) s += v;
    out.mean = s / static_cast<double>(out.per_type.size());
  }
  return out;
}

double confusion_score(const IterationSnapshot& prev, const IterationSnapshot& curr,
                       const Corpus& gold) {
  check_aligned(prev.predictions, gold);
  check_aligned(curr.predictions, gold);
  std::size_t was_correct = 0;
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < gold.sentences.size(); ++i) {
    const auto& tokens = gold.sentences[i].tokens;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (!scored(tokens[t])) continue;
      if (prev.predictions[i][t] != *tokens[t].gold) continue;
      ++was_correct;
      flipped += curr.predictions[i][t] != *tokens[t].gold;
    }
  }
  return was_correct == 0 ? 0.0 : static_cast<double>(flipped) / static_cast<double>(was_correct);
}

double static_calibration_error(const Eigen::MatrixXd& probs, const std::vector<TagId>& labels,
                                int num_bins) {
  if (num_bins < 1) throw InvalidArgument("num_bins must be >= 1");
  const auto n = static_cast<std::size_t>(probs.rows());
  if (labels.size() != n) throw InvalidArgument("labels do not match predictions");
  if (n == 0) return 0.0;
  const auto k = static_cast<std::size_t>(probs.cols());
  const std::size_t bins = std::min(static_cast<std::size_t>(num_bins), n);

  std::vector<std::pair<double, int>> column(n);
  double total = 0.0;
  for (std::size_t tag = 0; tag < k; ++tag) {
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = {probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(tag)),
                   labels[i] == static_cast<TagId>(tag) ? 1 : 0};
    }
    // Sorting on (probability, outcome) makes the bins independent of token order.
    std::sort(column.begin(), column.end());
    std::size_t start = 0;
    for (std::size_t b = 0; b < bins; ++b) {
      const std::size_t size = n / bins + (b < n % bins ? 1 : 0);
      double conf = 0.0;
      double hits = 0.0;
      for (std::size_t i = start; i < start + size; ++i) {
        conf += column[i].first;
        hits += column[i].second;
      }
      total += std::abs(conf - hits);  // = size * |mean conf - accuracy|
      start += size;
    }
  }
  return total / static_cast<double>(n * k);
}

double static_calibration_error(const MarginalTable& marginals, const Corpus& gold,
                                int num_bins) {
  if (marginals.size() != gold.sentences.size()) {
    throw InvalidArgument("marginals do not cover the corpus");
  }
  std::size_t rows = 0;
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < marginals.size(); ++i) {
    if (static_cast<std::size_t>(marginals[i].rows()) != gold.sentences[i].tokens.size()) {
      throw InvalidArgument("marginal length mismatch in sentence " + gold.sentences[i].id);
    }
    k = std::max(k, marginals[i].cols());
    for (const auto& t : gold.sentences[i].tokens) rows += scored(t);
  }
  Eigen::MatrixXd probs(static_cast<Eigen::Index>(rows), k);
  std::vector<TagId> labels;
  labels.reserve(rows);
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < marginals.size(); ++i) {
    const auto& tokens = gold.sentences[i].tokens;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      if (!scored(tokens[t])) continue;
      probs.row(r++) = marginals[i].row(static_cast<Eigen::Index>(t));
      labels.push_back(*tokens[t].gold);
    }
  }
  return static_calibration_error(probs, labels, num_bins);
}

double neighborhood_purity(const std::vector<Position>& occurrences, Position representative,
                           const std::vector<Eigen::MatrixXd>& states,
                           const TagSequences& predictions, const Corpus& gold, std::size_t b) {
  if (occurrences.empty()) throw InvalidArgument("type has no occurrences");
  auto rep_of = [&](Position p) {
    return states.at(p.sentence).row(static_cast<Eigen::Index>(p.token));
  };
  const Eigen::RowVectorXd center = rep_of(representative);
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(occurrences.size());
  for (std::size_t i = 0; i < occurrences.size(); ++i) {
    dist.emplace_back((rep_of(occurrences[i]) - center).squaredNorm(), i);
  }
  const std::size_t keep = std::min(b, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(keep), dist.end());
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < keep; ++i) {
    const Position p = occurrences[dist[i].second];
    const auto& token = gold.sentences.at(p.sentence).tokens.at(p.token);
    if (!token.gold) throw InvalidArgument("purity needs gold tags");
    wrong += predictions.at(p.sentence).at(p.token) != *token.gold;
  }
  return static_cast<double>(wrong) / static_cast<double>(keep);
}

PuritySummary batch_purity(const SelectionBatch& batch, const TypeIndex& index,
                           const Corpus& gold, const std::vector<Eigen::MatrixXd>& states,
                           const TagSequences& predictions, std::size_t b) {
  PuritySummary out;
  for (const auto& entry : batch) {
    std::vector<Position> occ;
    for (const auto& pos : index.postings(entry.type_key)) {
      if (!gold.sentences[pos.sentence].tokens[pos.token].boundary) occ.push_back(pos);
    }
    out.values.push_back(neighborhood_purity(occ, entry.position, states, predictions, gold, b));
  }
  if (!out.values.empty()) {
    out.mean = std::accumulate(out.values.begin(), out.values.end(), 0.0) /
               static_cast<double>(out.values.size());
    std::vector<double> sorted = out.values;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    out.median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
  }
  return out;
}

double oracle_overlap(const SelectionBatch& batch_a, const SelectionBatch& batch_b) {
  if (batch_a.empty()) return 0.0;
  std::set<std::pair<std::string, int>> b_pairs;
  for (const auto& e : batch_b) b_pairs.emplace(e.type_key, e.confusing_tag.value_or(-1));
  std::size_t shared = 0;
  std::set<std::pair<std::string, int>> counted;
  for (const auto& e : batch_a) {
    std::pair<std::string, int> key{e.type_key, e.confusing_tag.value_or(-1)};
    if (b_pairs.count(key) && counted.insert(key).second) ++shared;
  }
  return static_cast<double>(shared) / static_cast<double>(batch_a.size());
}

double syncretism_rate(const SelectionBatch& batch, const Corpus& gold_corpus,
                       const TypeIndex& index) {
  if (batch.empty()) return 0.0;
  std::size_t syncretic = 0;
  for (const auto& e : batch) {
    syncretic += gold_tag_distribution(e.type_key, gold_corpus, index).size() >= 2;
  }
  return static_cast<double>(syncretic) / static_cast<double>(batch.size());
}

double syncretism_rate(const SelectionBatch& batch, const Corpus& gold_corpus) {
  return syncretism_rate(batch, gold_corpus, TypeIndex(gold_corpus));
}

}  // namespace cral
