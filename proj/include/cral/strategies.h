#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "cral/corpus.h"
#include "cral/tagger.h"

namespace cral {

enum class Strategy {
  Random,
  Uncertainty,
  Committee,
  Cral,
  UncertaintyOracle,
  CommitteeOracle,
  CralOracle,
};

// Wire names: rand, uns, qbc, cral, uns-oracle, qbc-oracle, cral-oracle.
std::string_view strategy_name(Strategy s);
// Throws InvalidArgument listing the valid names.
Strategy parse_strategy(std::string_view name);
bool requires_gold(Strategy s);
const std::vector<Strategy>& all_strategies();

// Pool occurrences of one type, in position order.
struct PoolType {
  std::string key;
  std::vector<Position> occurrences;
};

// Unannotated, non-boundary occurrences grouped by type (lexicographic key order).
struct CandidatePool {
  std::vector<PoolType> types;

  bool empty() const { return types.empty(); }
  std::size_t occurrence_count() const;
  const PoolType* find(const std::string& key) const;
};

CandidatePool build_candidate_pool(const Corpus& corpus, const TypeIndex& index,
                                   const AnnotationStore& store);

struct TypeScoreTable {
  std::map<std::string, double> scores;
  // Runner-up tag counts per type; filled by the confusion scorer only.
  std::map<std::string, std::vector<int>> confusion_counts;
};

struct SelectionEntry {
  std::string type_key;
  std::optional<TagId> confusing_tag;
  Position position;
  Strategy strategy = Strategy::Random;
  int iteration = 0;
  double score = 0.0;
};

using SelectionBatch = std::vector<SelectionEntry>;

// Gold tags for oracle strategies and the simulated annotator. Nothing else
// reads gold labels during selection.
class GoldOracle {
 public:
  explicit GoldOracle(const Corpus& corpus) : corpus_(&corpus) {}
  // Throws InvalidArgument when the token has no gold tag.
  TagId tag(Position pos) const;

 private:
  const Corpus* corpus_;
};

// Per-token scores.
double token_entropy(const Eigen::Ref<const Eigen::RowVectorXd>& p);
int committee_disagreement(const std::vector<TagId>& votes);
struct TokenConfusion {
  TagId predicted;
  TagId runner_up;
  double score;  // 1 - p(predicted)
};
// Requires at least two tags.
TokenConfusion token_confusion(const Eigen::Ref<const Eigen::RowVectorXd>& p);

// Sum of token entropies (nats) over pool occurrences.
TypeScoreTable score_uns(const MarginalTable& marginals, const CandidatePool& pool);

// committee[m][sentence][token] is member m's prediction. Throws for fewer
// than two members.
TypeScoreTable score_qbc(const std::vector<std::vector<std::vector<TagId>>>& committee,
                         const CandidatePool& pool);

// S_CRAL and runner-up counts O_CRAL.
TypeScoreTable score_cral(const MarginalTable& marginals, const CandidatePool& pool);

// Types by (score desc, pool frequency desc, key asc), truncated to b.
std::vector<std::string> top_b(const TypeScoreTable& table, const CandidatePool& pool,
                               std::size_t b);

// Index of the row nearest (Euclidean) to the mean of all rows; ties go to
// the lower index.
std::size_t nearest_to_centroid(const Eigen::MatrixXd& points);

SelectionBatch select_random(const CandidatePool& pool, std::size_t b, std::uint64_t seed);

SelectionBatch select_uns(const MarginalTable& marginals, const CandidatePool& pool,
                          std::size_t b);

SelectionBatch select_qbc(const std::vector<std::vector<std::vector<TagId>>>& committee,
                          const CandidatePool& pool, std::size_t b);

// states[sentence] holds the full representations c_{i,t} row by row.
SelectionBatch cral_select(const MarginalTable& marginals, const std::vector<Eigen::MatrixXd>& states,
                           const CandidatePool& pool, std::size_t b);

SelectionBatch select_uns_oracle(const MarginalTable& marginals, const GoldOracle& gold,
                                 const CandidatePool& pool, std::size_t b);

SelectionBatch select_qbc_oracle(const std::vector<std::vector<TagId>>& predictions,
                                 const GoldOracle& gold, const CandidatePool& pool,
                                 std::size_t b);

SelectionBatch select_cral_oracle(const std::vector<std::vector<TagId>>& predictions,
                                  const GoldOracle& gold, const std::vector<Eigen::MatrixXd>& states,
                                  const CandidatePool& pool, std::size_t b);

// Everything a strategy may look at for one selection round.
struct SelectionContext {
  const CorpusPrediction* prediction = nullptr;
  const GoldOracle* gold = nullptr;  // only for oracle strategies
  std::uint64_t seed = 0;
  int iteration = 0;
};

// Dispatches on the strategy and stamps strategy/iteration on every entry.
// Throws InvalidArgument when an oracle strategy is given no gold.
SelectionBatch select(Strategy strategy, const CandidatePool& pool, std::size_t b,
                      const SelectionContext& context);

}  // namespace cral
