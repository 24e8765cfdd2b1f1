#include "cral/strategies.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "cral/error.h"
#include "cral/nn.h"

namespace cral {

namespace {

constexpr double kLogFloor = 1e-12;

const Eigen::MatrixXd& rows_of(const MarginalTable& table, Position pos) {
  if (pos.sentence >= table.size() ||
      static_cast<Eigen::Index>(pos.token) >= table[pos.sentence].rows()) {
    throw InvalidArgument("marginal table does not cover pool position");
  }
  return table[pos.sentence];
}

Eigen::RowVectorXd row_at(const MarginalTable& table, Position pos) {
  return rows_of(table, pos).row(static_cast<Eigen::Index>(pos.token));
}

TagId at(const std::vector<std::vector<TagId>>& seqs, Position pos) {
  if (pos.sentence >= seqs.size() || pos.token >= seqs[pos.sentence].size()) {
    throw InvalidArgument("predictions do not cover pool position");
  }
  return seqs[pos.sentence][pos.token];
}

// Position of the first maximum of f over the occurrences.
template <class F>
Position argmax_occurrence(const PoolType& type, F&& f) {
  Position best = type.occurrences.front();
  double best_value = -std::numeric_limits<double>::infinity();
  for (const auto& pos : type.occurrences) {
    const double v = f(pos);
    if (v > best_value) {
      best_value = v;
      best = pos;
    }
  }
  return best;
}

SelectionBatch assemble(const TypeScoreTable& table, const CandidatePool& pool, std::size_t b,
                        const std::function<SelectionEntry(const PoolType&)>& pick) {
  SelectionBatch batch;
  for (const auto& key : top_b(table, pool, b)) {
    SelectionEntry entry = pick(*pool.find(key));
    entry.type_key = key;
    entry.score = table.scores.at(key);
    batch.push_back(std::move(entry));
  }
  return batch;
}

}  // namespace

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Random: return "rand";
    case Strategy::Uncertainty: return "uns";
    case Strategy::Committee: return "qbc";
    case Strategy::Cral: return "cral";
    case Strategy::UncertaintyOracle: return "uns-oracle";
    case Strategy::CommitteeOracle: return "qbc-oracle";
    case Strategy::CralOracle: return "cral-oracle";
  }
  return "?";
}

const std::vector<Strategy>& all_strategies() {
  static const std::vector<Strategy> kAll = {
      Strategy::Random,           Strategy::Uncertainty,     Strategy::Committee,
      Strategy::Cral,             Strategy::UncertaintyOracle, Strategy::CommitteeOracle,
      Strategy::CralOracle};
  return kAll;
}

Strategy parse_strategy(std::string_view name) {
  std::string valid;
  for (Strategy s : all_strategies()) {
    if (strategy_name(s) == name) return s;
    if (!valid.empty()) valid += ", ";
    valid += strategy_name(s);
  }
  throw InvalidArgument("unknown strategy '" + std::string(name) + "' (valid: " + valid + ")");
}

bool requires_gold(Strategy s) {
  return s == Strategy::UncertaintyOracle || s == Strategy::CommitteeOracle ||
         s == Strategy::CralOracle;
}

std::size_t CandidatePool::occurrence_count() const {
  std::size_t n = 0;
  for (const auto& t : types) n += t.occurrences.size();
  return n;
}

const PoolType* CandidatePool::find(const std::string& key) const {
  auto it = std::lower_bound(types.begin(), types.end(), key,
                             [](const PoolType& t, const std::string& k) { return t.key < k; });
  return it != types.end() && it->key == key ? &*it : nullptr;
}

CandidatePool build_candidate_pool(const Corpus& corpus, const TypeIndex& index,
                                   const AnnotationStore& store) {
  CandidatePool pool;
  for (const auto& [key, postings] : index.entries()) {
    PoolType type{key, {}};
    for (const auto& pos : postings) {
      if (corpus.sentences[pos.sentence].tokens[pos.token].boundary) continue;
      if (store.contains(pos)) continue;
      type.occurrences.push_back(pos);
    }
    if (!type.occurrences.empty()) pool.types.push_back(std::move(type));
  }
  return pool;
}

TagId GoldOracle::tag(Position pos) const {
  const auto& token = corpus_->sentences.at(pos.sentence).tokens.at(pos.token);
  if (!token.gold) {
    throw InvalidArgument("oracle needs a gold tag for sentence " +
                          corpus_->sentences[pos.sentence].id + ", token " +
                          std::to_string(pos.token));
  }
  return *token.gold;
}

double token_entropy(const Eigen::Ref<const Eigen::RowVectorXd>& p) {
  double h = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (p(j) > 0.0) h -= p(j) * std::log(p(j));
  }
  return h;
}

int committee_disagreement(const std::vector<TagId>& votes) {
  std::map<TagId, int> counts;
  int plurality = 0;
  for (TagId v : votes) plurality = std::max(plurality, ++counts[v]);
  return static_cast<int>(votes.size()) - plurality;
}

TokenConfusion token_confusion(const Eigen::Ref<const Eigen::RowVectorXd>& p) {
  if (p.size() < 2) throw InvalidArgument("confusion needs at least two tags");
  TokenConfusion c{0, -1, 0.0};
  for (Eigen::Index j = 1; j < p.size(); ++j) {
    if (p(j) > p(c.predicted)) c.predicted = static_cast<TagId>(j);
  }
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (j == c.predicted) continue;
    if (c.runner_up < 0 || p(j) > p(c.runner_up)) c.runner_up = static_cast<TagId>(j);
  }
  c.score = 1.0 - p(c.predicted);
  return c;
}

TypeScoreTable score_uns(const MarginalTable& marginals, const CandidatePool& pool) {
  TypeScoreTable table;
  for (const auto& type : pool.types) {
    double s = 0.0;
    for (const auto& pos : type.occurrences) s += token_entropy(row_at(marginals, pos));
    table.scores[type.key] = s;
  }
  return table;
}

TypeScoreTable score_qbc(const std::vector<std::vector<std::vector<TagId>>>& committee,
                         const CandidatePool& pool) {
  if (committee.size() < 2) throw InvalidArgument("a committee needs at least two members");
  TypeScoreTable table;
  std::vector<TagId> votes(committee.size());
  for (const auto& type : pool.types) {
    double s = 0.0;
    for (const auto& pos : type.occurrences) {
      for (std::size_t m = 0; m < committee.size(); ++m) votes[m] = at(committee[m], pos);
      s += committee_disagreement(votes);
    }
    table.scores[type.key] = s;
  }
  return table;
}

TypeScoreTable score_cral(const MarginalTable& marginals, const CandidatePool& pool) {
  TypeScoreTable table;
  for (const auto& type : pool.types) {
    double s = 0.0;
    std::vector<int> counts;
    for (const auto& pos : type.occurrences) {
      const Eigen::RowVectorXd p = row_at(marginals, pos);
      if (counts.empty()) counts.assign(static_cast<std::size_t>(p.size()), 0);
      const TokenConfusion c = token_confusion(p);
      s += c.score;
      ++counts[static_cast<std::size_t>(c.runner_up)];
    }
    table.scores[type.key] = s;
    table.confusion_counts[type.key] = std::move(counts);
  }
  return table;
}

std::vector<std::string> top_b(const TypeScoreTable& table, const CandidatePool& pool,
                               std::size_t b) {
  struct Ranked {
    const std::string* key;
    double score;
    std::size_t frequency;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(table.scores.size());
  for (const auto& [key, score] : table.scores) {
    const PoolType* type = pool.find(key);
    ranked.push_back({&key, score, type ? type->occurrences.size() : 0});
  }
  const std::size_t keep = std::min(b, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep),
                    ranked.end(), [](const Ranked& a, const Ranked& c) {
                      if (a.score != c.score) return a.score > c.score;
                      if (a.frequency != c.frequency) return a.frequency > c.frequency;
                      return *a.key < *c.key;
                    });
  std::vector<std::string> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(*ranked[i].key);
  return out;
}

std::size_t nearest_to_centroid(const Eigen::MatrixXd& points) {
  if (points.rows() == 0) throw InvalidArgument("centroid of an empty set");
  const Eigen::RowVectorXd centroid = points.colwise().mean();
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double d = (points.row(i) - centroid).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::size_t>(i);
    }
  }
  return best;
}

SelectionBatch select_random(const CandidatePool& pool, std::size_t b, std::uint64_t seed) {
  nn::Rng rng(seed);
  std::vector<std::size_t> idx(pool.types.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const std::size_t keep = std::min(b, idx.size());
  SelectionBatch batch;
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
    const PoolType& type = pool.types[idx[i]];
    SelectionEntry entry;
    entry.type_key = type.key;
    entry.position = type.occurrences[static_cast<std::size_t>(rng.below(type.occurrences.size()))];
    batch.push_back(std::move(entry));
  }
  return batch;
}

SelectionBatch select_uns(const MarginalTable& marginals, const CandidatePool& pool,
                          std::size_t b) {
  return assemble(score_uns(marginals, pool), pool, b, [&](const PoolType& type) {
    SelectionEntry e;
    e.position = argmax_occurrence(type, [&](Position p) { return token_entropy(row_at(marginals, p)); });
    return e;
  });
}

SelectionBatch select_qbc(const std::vector<std::vector<std::vector<TagId>>>& committee,
                          const CandidatePool& pool, std::size_t b) {
  const TypeScoreTable table = score_qbc(committee, pool);
  std::vector<TagId> votes(committee.size());
  return assemble(table, pool, b, [&](const PoolType& type) {
    SelectionEntry e;
    e.position = argmax_occurrence(type, [&](Position p) {
      for (std::size_t m = 0; m < committee.size(); ++m) votes[m] = at(committee[m], p);
      return static_cast<double>(committee_disagreement(votes));
    });
    return e;
  });
}

SelectionBatch cral_select(const MarginalTable& marginals, const std::vector<Eigen::MatrixXd>& states,
                           const CandidatePool& pool, std::size_t b) {
  const TypeScoreTable table = score_cral(marginals, pool);
  return assemble(table, pool, b, [&](const PoolType& type) {
    const auto& counts = table.confusion_counts.at(type.key);
    const auto j = static_cast<TagId>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    const auto& occ = type.occurrences;
    const Eigen::Index dim = states.at(occ.front().sentence).cols();
    Eigen::MatrixXd weighted(static_cast<Eigen::Index>(occ.size()), dim);
    for (std::size_t k = 0; k < occ.size(); ++k) {
      const auto& rep = states.at(occ[k].sentence);
      if (static_cast<Eigen::Index>(occ[k].token) >= rep.rows()) {
        throw InvalidArgument("representations do not cover pool position");
      }
      weighted.row(static_cast<Eigen::Index>(k)) =
          row_at(marginals, occ[k])(j) * rep.row(static_cast<Eigen::Index>(occ[k].token));
    }
    SelectionEntry e;
    e.confusing_tag = j;
    e.position = occ[nearest_to_centroid(weighted)];
    return e;
  });
}

SelectionBatch select_uns_oracle(const MarginalTable& marginals, const GoldOracle& gold,
                                 const CandidatePool& pool, std::size_t b) {
  auto nll = [&](Position p) {
    return -std::log(std::max(row_at(marginals, p)(gold.tag(p)), kLogFloor));
  };
  TypeScoreTable table;
  for (const auto& type : pool.types) {
    double s = 0.0;
    for (const auto& pos : type.occurrences) s += nll(pos);
    table.scores[type.key] = s;
  }
  return assemble(table, pool, b, [&](const PoolType& type) {
    SelectionEntry e;
    e.position = argmax_occurrence(type, nll);
    return e;
  });
}

SelectionBatch select_qbc_oracle(const std::vector<std::vector<TagId>>& predictions,
                                 const GoldOracle& gold, const CandidatePool& pool,
                                 std::size_t b) {
  TypeScoreTable table;
  for (const auto& type : pool.types) {
    int errors = 0;
    for (const auto& pos : type.occurrences) errors += at(predictions, pos) != gold.tag(pos);
    if (errors > 0) table.scores[type.key] = errors;
  }
  return assemble(table, pool, b, [&](const PoolType& type) {
    SelectionEntry e;
    for (const auto& pos : type.occurrences) {
      if (at(predictions, pos) != gold.tag(pos)) {
        e.position = pos;
        break;
      }
    }
    return e;
  });
}

SelectionBatch select_cral_oracle(const std::vector<std::vector<TagId>>& predictions,
                                  const GoldOracle& gold, const std::vector<Eigen::MatrixXd>& states,
                                  const CandidatePool& pool, std::size_t b) {
  TypeScoreTable table;
  for (const auto& type : pool.types) {
    int errors = 0;
    for (const auto& pos : type.occurrences) errors += at(predictions, pos) != gold.tag(pos);
    if (errors > 0) table.scores[type.key] = errors;
  }
  return assemble(table, pool, b, [&](const PoolType& type) {
    std::map<TagId, int> by_gold;
    for (const auto& pos : type.occurrences) {
      const TagId y = gold.tag(pos);
      if (at(predictions, pos) != y) ++by_gold[y];
    }
    TagId j = by_gold.begin()->first;
    for (const auto& [tag, n] : by_gold) {
      if (n > by_gold[j]) j = tag;
    }
    std::vector<Position> subset;
    for (const auto& pos : type.occurrences) {
      if (gold.tag(pos) == j && at(predictions, pos) != j) subset.push_back(pos);
    }
    const Eigen::Index dim = states.at(subset.front().sentence).cols();
    Eigen::MatrixXd points(static_cast<Eigen::Index>(subset.size()), dim);
    for (std::size_t k = 0; k < subset.size(); ++k) {
      points.row(static_cast<Eigen::Index>(k)) =
          states.at(subset[k].sentence).row(static_cast<Eigen::Index>(subset[k].token));
    }
    SelectionEntry e;
    e.confusing_tag = j;
    e.position = subset[nearest_to_centroid(points)];
    return e;
  });
}

SelectionBatch select(Strategy strategy, const CandidatePool& pool, std::size_t b,
                      const SelectionContext& ctx) {
  if (b == 0) throw InvalidArgument("batch size must be >= 1");
  if (requires_gold(strategy) && !ctx.gold) {
    throw InvalidArgument("strategy '" + std::string(strategy_name(strategy)) +
                          "' needs gold labels");
  }
  if (strategy != Strategy::Random && !ctx.prediction) {
    throw InvalidArgument("strategy '" + std::string(strategy_name(strategy)) +
                          "' needs model predictions");
  }
  SelectionBatch batch;
  if (strategy == Strategy::Random) {
    batch = select_random(pool, b, ctx.seed);
  } else {
    const auto& pred = *ctx.prediction;
    const MarginalTable marginals = pred.marginals();
    std::vector<Eigen::MatrixXd> states;
    std::vector<std::vector<TagId>> full, fwd, bwd, decoded;
    for (const auto& s : pred.sentences) {
      states.push_back(s.states);
      full.push_back(s.argmax);
      fwd.push_back(s.fwd_argmax);
      bwd.push_back(s.bwd_argmax);
      decoded.push_back(s.viterbi);
    }
    switch (strategy) {
      case Strategy::Uncertainty:
        batch = select_uns(marginals, pool, b);
        break;
      case Strategy::Committee:
        batch = select_qbc({fwd, bwd, full}, pool, b);
        break;
      case Strategy::Cral:
        batch = cral_select(marginals, states, pool, b);
        break;
      case Strategy::UncertaintyOracle:
        batch = select_uns_oracle(marginals, *ctx.gold, pool, b);
        break;
      case Strategy::CommitteeOracle:
        batch = select_qbc_oracle(decoded, *ctx.gold, pool, b);
        break;
      case Strategy::CralOracle:
        batch = select_cral_oracle(decoded, *ctx.gold, states, pool, b);
        break;
      case Strategy::Random:
        break;
    }
  }
  for (auto& e : batch) {
    e.strategy = strategy;
    e.iteration = ctx.iteration;
  }
  return batch;
}

}  // namespace cral
