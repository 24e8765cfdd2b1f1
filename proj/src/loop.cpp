#include "cral/loop.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "cral/checkpoint.h"
#include "cral/error.h"

namespace cral {

namespace {

using nlohmann::json;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t selection_seed(const LoopConfig& config, int iteration) {
  return mix_seed(config.seed, static_cast<std::uint64_t>(iteration));
}

std::uint64_t fine_tune_seed(const LoopConfig& config, int iteration) {
  return mix_seed(config.seed ^ 0x5A5A5A5AULL, static_cast<std::uint64_t>(iteration));
}

std::vector<Eigen::MatrixXd> states_of(const CorpusPrediction& pred) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(pred.sentences.size());
  for (const auto& s : pred.sentences) out.push_back(s.states);
  return out;
}

namespace {

json optional_double(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional_double(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

PretrainResult pretrain(const std::vector<LanguageCorpus>& corpora, const LanguageCorpus& dev,
                        const PretrainConfig& config, const LanguageCorpus* eval) {
  if (corpora.empty()) throw InvalidArgument("pretraining needs at least one corpus");
  for (const auto& [corpus, code] : corpora) {
    if (corpus.sentences.empty() || !corpus.fully_gold()) {
      throw InvalidArgument("pretraining corpus '" + code + "' is not fully gold-tagged");
    }
  }
  if (!dev.first.fully_gold()) throw InvalidArgument("dev corpus is not fully gold-tagged");
  const Corpus tagged = concat_with_language_tags(corpora);
  const Corpus tagged_dev = add_language_tags(dev.first, dev.second);

  TrainOptions options;
  options.lr = config.tagger.sgd_lr;
  options.max_epochs = config.max_epochs;
  options.patience = config.patience;
  options.batch_size = config.batch_size;
  options.use_cvt = config.tagger.use_cvt;
  options.seed = config.tagger.seed;
  std::vector<const Sentence*> unlabeled;
  if (options.use_cvt) {
    for (const auto& s : tagged.sentences) unlabeled.push_back(&s);
  }
  auto trained = train(TaggerParams::initialize(config.tagger), examples_from_gold(tagged),
                       unlabeled, &tagged_dev, options);

  PretrainResult out{std::move(trained.params), std::move(trained.dev_accuracy),
                     trained.best_epoch, std::nullopt};
  if (eval) {
    out.zero_shot_accuracy =
        evaluate_accuracy(add_language_tags(eval->first, eval->second), out.params);
  }
  return out;
}

void LoopConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
  if (!(fine_tune_lr_coeff > 0.0)) throw InvalidArgument("fine-tune lr coefficient must be > 0");
  if (fine_tune_epochs < 1) throw InvalidArgument("fine-tune epochs must be >= 1");
  if (fine_tune_patience < 1) throw InvalidArgument("fine-tune patience must be >= 1");
  if (fine_tune_batch_size < 1) throw InvalidArgument("fine-tune batch size must be >= 1");
  if (purity_neighbors < 1) throw InvalidArgument("purity neighbours must be >= 1");
  if (sce_bins < 1) throw InvalidArgument("calibration bins must be >= 1");
  if (language.empty()) throw InvalidArgument("language code must not be empty");
  if (paired_oracle && !requires_gold(*paired_oracle)) {
    throw InvalidArgument("paired strategy must be an oracle");
  }
}

json loop_config_to_json(const LoopConfig& c) {
  return {
      {"strategy", strategy_name(c.strategy)},
      {"batch_size", c.batch_size},
      {"iterations", c.iterations},
      {"fine_tune_lr_coeff", c.fine_tune_lr_coeff},
      {"seed", c.seed},
      {"language", c.language},
      {"fine_tune_epochs", c.fine_tune_epochs},
      {"fine_tune_patience", c.fine_tune_patience},
      {"fine_tune_keep_start", c.fine_tune_keep_start},
      {"fine_tune_batch_size", c.fine_tune_batch_size},
      {"clip_norm", c.clip_norm},
      {"fine_tune_cvt", c.fine_tune_cvt},
      {"warm_start", c.warm_start},
      {"paired_oracle", c.paired_oracle ? json(strategy_name(*c.paired_oracle)) : json(nullptr)},
      {"purity_neighbors", c.purity_neighbors},
      {"sce_bins", c.sce_bins},
      {"record_timing", c.record_timing},
      {"pool_path", c.pool_path},
      {"test_path", c.test_path},
      {"dev_path", c.dev_path},
      {"model_path", c.model_path},
      {"cvt_normalizer", "mini-batch"},
  };
}

LoopConfig loop_config_from_json(const json& j, LoopConfig c) {
  if (!j.is_object()) throw InvalidArgument("loop config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "strategy") c.strategy = parse_strategy(v.get<std::string>());
    else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
    else if (key == "iterations") c.iterations = v.get<int>();
    else if (key == "fine_tune_lr_coeff") c.fine_tune_lr_coeff = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "language") c.language = v.get<std::string>();
    else if (key == "fine_tune_epochs") c.fine_tune_epochs = v.get<int>();
    else if (key == "fine_tune_patience") c.fine_tune_patience = v.get<int>();
    else if (key == "fine_tune_keep_start") c.fine_tune_keep_start = v.get<bool>();
    else if (key == "fine_tune_batch_size") c.fine_tune_batch_size = v.get<int>();
    else if (key == "clip_norm") c.clip_norm = v.get<double>();
    else if (key == "fine_tune_cvt") c.fine_tune_cvt = v.get<bool>();
    else if (key == "warm_start") c.warm_start = v.get<bool>();
    else if (key == "paired_oracle") {
      if (v.is_null()) c.paired_oracle.reset();
      else c.paired_oracle = parse_strategy(v.get<std::string>());
    } else if (key == "purity_neighbors") c.purity_neighbors = v.get<std::size_t>();
    else if (key == "sce_bins") c.sce_bins = v.get<int>();
    else if (key == "record_timing") c.record_timing = v.get<bool>();
    else if (key == "pool_path") c.pool_path = v.get<std::string>();
    else if (key == "test_path") c.test_path = v.get<std::string>();
    else if (key == "dev_path") c.dev_path = v.get<std::string>();
    else if (key == "model_path") c.model_path = v.get<std::string>();
    else if (key == "cvt_normalizer") continue;  // informational
    else throw InvalidArgument("unknown loop config field '" + key + "'");
  }
  c.validate();
  return c;
}

namespace {

json row_to_json(const IterationRow& r) {
  json sel = json::array();
  for (const auto& s : r.selection) {
    sel.push_back({{"type_key", s.type_key},
                   {"confusing_tag", s.confusing_tag ? json(*s.confusing_tag) : json(nullptr)},
                   {"sentence_id", s.sentence_id},
                   {"token", s.token},
                   {"surface", s.surface},
                   {"gold_tag", s.gold_tag},
                   {"score", s.score}});
  }
  json out = {{"iteration", r.iteration},
              {"accuracy", r.accuracy},
              {"annotations", r.annotations},
              {"labeled_sentences", r.labeled_sentences},
              {"learning_rate", r.learning_rate},
              {"selection", sel},
              {"wd", r.wd},
              {"confusion", optional_double(r.confusion)},
              {"sce", r.sce},
              {"oracle_overlap", optional_double(r.oracle_overlap)},
              {"syncretism", optional_double(r.syncretism)},
              {"warnings", r.warnings}};
  if (r.purity) {
    out["purity"] = {{"values", r.purity->values},
                     {"mean", r.purity->mean},
                     {"median", r.purity->median}};
  } else {
    out["purity"] = nullptr;
  }
  if (r.wall_ms) out["wall_ms"] = *r.wall_ms;
  return out;
}

IterationRow row_from_json(const json& j) {
  IterationRow r;
  r.iteration = j.at("iteration").get<int>();
  r.accuracy = j.at("accuracy").get<double>();
  r.annotations = j.value("annotations", std::size_t{0});
  r.labeled_sentences = j.value("labeled_sentences", std::size_t{0});
  r.learning_rate = j.value("learning_rate", 0.0);
  if (j.contains("selection")) {
    for (const auto& s : j.at("selection")) {
      SelectionRecord rec;
      rec.type_key = s.at("type_key").get<std::string>();
      if (!s.at("confusing_tag").is_null()) rec.confusing_tag = s.at("confusing_tag").get<std::string>();
      rec.sentence_id = s.at("sentence_id").get<std::string>();
      rec.token = s.at("token").get<std::size_t>();
      rec.surface = s.value("surface", "");
      rec.gold_tag = s.value("gold_tag", "");
      rec.score = s.at("score").get<double>();
      r.selection.push_back(std::move(rec));
    }
  }
  r.wd = j.value("wd", 0.0);
  r.confusion = read_optional_double(j, "confusion");
  r.sce = j.value("sce", 0.0);
  r.oracle_overlap = read_optional_double(j, "oracle_overlap");
  r.syncretism = read_optional_double(j, "syncretism");
  if (j.contains("purity") && !j.at("purity").is_null()) {
    const auto& p = j.at("purity");
    r.purity = PuritySummary{p.at("values").get<std::vector<double>>(), p.at("mean").get<double>(),
                             p.at("median").get<double>()};
  }
  r.wall_ms = read_optional_double(j, "wall_ms");
  if (j.contains("warnings")) r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

}  // namespace

json report_to_json(const RunReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) rows.push_back(row_to_json(r));
  return {{"schema_version", kReportSchemaVersion},
          {"strategy", report.strategy},
          {"seed", report.seed},
          {"config", report.config},
          {"iterations", rows}};
}

RunReport report_from_json(const json& j) {
  if (j.value("schema_version", -1) != kReportSchemaVersion) {
    throw InvalidArgument("unsupported report schema version");
  }
  RunReport r;
  r.strategy = j.at("strategy").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config = j.value("config", json::object());
  int prev = -1;
  for (const auto& row : j.at("iterations")) {
    r.rows.push_back(row_from_json(row));
    if (r.rows.back().iteration <= prev) throw InvalidArgument("report iterations out of order");
    prev = r.rows.back().iteration;
  }
  return r;
}

std::string report_to_string(const RunReport& report) {
  return report_to_json(report).dump(2) + "\n";
}

RunReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open report " + path);
  try {
    return report_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw InvalidArgument("malformed report " + path + ": " + e.what());
  }
}

LoopData::LoopData(const Corpus& raw_pool, const Corpus& raw_test, const std::string& language,
                   const Corpus* raw_dev)
    : pool(add_language_tags(raw_pool, language)),
      test(add_language_tags(raw_test, language)),
      pool_index(pool) {
  if (raw_dev) dev = add_language_tags(*raw_dev, language);
}

double fine_tune_learning_rate(const LoopConfig& config, const AnnotationStore& store) {
  return config.fine_tune_lr_coeff * static_cast<double>(store.labeled_sentences().size());
}

TaggerParams fine_tune(const TaggerParams& start, const Corpus& pool, const AnnotationStore& store,
                       const LoopConfig& config, std::uint64_t seed, const Corpus* dev) {
  if (store.empty()) return start;
  TrainOptions options;
  options.lr = fine_tune_learning_rate(config, store);
  options.max_epochs = config.fine_tune_epochs;
  options.patience = config.fine_tune_patience;
  options.keep_initial = config.fine_tune_keep_start;
  options.batch_size = config.fine_tune_batch_size;
  options.clip_norm = config.clip_norm;
  options.use_cvt = config.fine_tune_cvt;
  options.seed = seed;
  std::vector<const Sentence*> unlabeled;
  if (config.fine_tune_cvt) {
    for (const auto& s : pool.sentences) unlabeled.push_back(&s);
  }
  return train(start, examples_from_store(pool, store), unlabeled, dev, options).params;
}

namespace {

void evaluate_into(IterationRow& row, LoopState& state, const LoopData& data,
                   const LoopConfig& config) {
  const auto pred = predict(data.test, state.params);
  IterationSnapshot snap{state.iteration, pred.viterbi(), 0.0};
  snap.accuracy = token_accuracy(snap.predictions, data.test);
  row.accuracy = snap.accuracy;
  row.sce = static_calibration_error(pred.marginals(), data.test, config.sce_bins);
  if (state.iteration > 0) row.confusion = confusion_score(state.last, snap, data.test);
  row.wd = corpus_wasserstein(state.store, data.pool).mean;
  row.annotations = state.store.size();
  row.labeled_sentences = state.store.labeled_sentences().size();
  state.last = std::move(snap);
}

}  // namespace

IterationRow evaluate_start(LoopState& state, const LoopData& data, const LoopConfig& config) {
  IterationRow row;
  row.iteration = state.iteration;
  evaluate_into(row, state, data, config);
  return row;
}

IterationRow run_iteration(LoopState& state, const LoopData& data, const LoopConfig& config) {
  const auto clock_start = std::chrono::steady_clock::now();
  const CandidatePool pool = build_candidate_pool(data.pool, data.pool_index, state.store);
  if (pool.empty()) throw InvalidArgument("candidate pool is exhausted");
  const int next = state.iteration + 1;
  IterationRow row;
  row.iteration = next;

  const CorpusPrediction pred = predict(data.pool, state.params);
  const GoldOracle gold(data.pool);
  const bool needs_gold = requires_gold(config.strategy) || config.paired_oracle.has_value();
  if (needs_gold && !data.pool.fully_gold()) {
    throw InvalidArgument("oracle strategies need a fully gold-tagged pool");
  }
  SelectionContext ctx;
  ctx.prediction = &pred;
  ctx.gold = requires_gold(config.strategy) ? &gold : nullptr;
  ctx.seed = selection_seed(config, next);
  ctx.iteration = next;
  const SelectionBatch batch = select(config.strategy, pool, config.batch_size, ctx);
  if (batch.size() < config.batch_size) {
    row.warnings.push_back("pool supplied " + std::to_string(batch.size()) + " of " +
                           std::to_string(config.batch_size) + " requested items");
  }

  if (config.paired_oracle) {
    SelectionContext octx = ctx;
    octx.gold = &gold;
    row.oracle_overlap = oracle_overlap(batch, select(*config.paired_oracle, pool,
                                                      config.batch_size, octx));
  }
  if (data.pool.fully_gold()) {
    row.syncretism = syncretism_rate(batch, data.pool, data.pool_index);
    row.purity = batch_purity(batch, data.pool_index, data.pool, states_of(pred), pred.viterbi(),
                              config.purity_neighbors);
  }

  for (const auto& e : batch) {
    const auto& sentence = data.pool.sentences[e.position.sentence];
    const auto& token = sentence.tokens[e.position.token];
    const TagId tag = gold.tag(e.position);
    state.store.insert(e.position, tag, AnnotationMeta{next, "simulated", 0});
    SelectionRecord rec;
    rec.type_key = e.type_key;
    if (e.confusing_tag) rec.confusing_tag = std::string(TagSet::symbol(*e.confusing_tag));
    rec.sentence_id = sentence.id;
    rec.token = e.position.token;
    rec.surface = token.surface;
    rec.gold_tag = std::string(TagSet::symbol(tag));
    rec.score = e.score;
    row.selection.push_back(std::move(rec));
  }

  row.learning_rate = fine_tune_learning_rate(config, state.store);
  const TaggerParams& start = config.warm_start ? state.params : state.pretrained;
  state.params = fine_tune(start, data.pool, state.store, config,
                           fine_tune_seed(config, next),
                           data.dev ? &*data.dev : nullptr);
  state.iteration = next;
  evaluate_into(row, state, data, config);
  if (config.record_timing) {
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            clock_start)
                      .count();
  }
  return row;
}

RunReport run_simulation(const TaggerParams& pretrained, const Corpus& pool, const Corpus& test,
                         const LoopConfig& config, const Corpus* dev) {
  config.validate();
  if ((requires_gold(config.strategy) || config.paired_oracle) && !pool.fully_gold()) {
    throw InvalidArgument("strategy '" + std::string(strategy_name(config.strategy)) +
                          "' needs a gold-tagged pool");
  }
  if (!test.fully_gold()) throw InvalidArgument("test corpus is not fully gold-tagged");
  if (dev && !dev->fully_gold()) throw InvalidArgument("dev corpus is not fully gold-tagged");
  const LoopData data(pool, test, config.language, dev);
  LoopState state{pretrained, pretrained, AnnotationStore(data.pool), 0, {}};

  RunReport report;
  report.strategy = std::string(strategy_name(config.strategy));
  report.seed = config.seed;
  report.config = loop_config_to_json(config);
  report.config["tagger"] = config_to_json(pretrained.config);
  report.rows.push_back(evaluate_start(state, data, config));
  for (int i = 0; i < config.iterations; ++i) {
    if (build_candidate_pool(data.pool, data.pool_index, state.store).empty()) {
      report.rows.back().warnings.push_back("pool exhausted; stopping early");
      break;
    }
    report.rows.push_back(run_iteration(state, data, config));
  }
  return report;
}

const std::vector<std::string>& report_metric_names() {
  static const std::vector<std::string> names = {"accuracy",       "wd",         "confusion",
                                                 "sce",            "oracle_overlap",
                                                 "syncretism",     "purity_mean", "purity_median"};
  return names;
}

namespace {

double metric_value(const IterationRow& r, const std::string& m) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  if (m == "accuracy") return r.accuracy;
  if (m == "wd") return r.wd;
  if (m == "confusion") return r.confusion.value_or(nan);
  if (m == "sce") return r.sce;
  if (m == "oracle_overlap") return r.oracle_overlap.value_or(nan);
  if (m == "syncretism") return r.syncretism.value_or(nan);
  if (m == "purity_mean") return r.purity ? r.purity->mean : nan;
  if (m == "purity_median") return r.purity ? r.purity->median : nan;
  return nan;
}

std::string format_value(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Mean over iterations after the starting row when there are any, otherwise
// over all rows; NaN entries are skipped.
double mean_over(const std::vector<double>& values, const std::vector<int>& iterations) {
  const bool has_later = std::any_of(iterations.begin(), iterations.end(),
                                     [](int it) { return it > 0; });
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (has_later && iterations[i] == 0) continue;
    if (std::isnan(values[i])) continue;
    sum += values[i];
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

}  // namespace

ComparisonTable compare_runs(const std::vector<RunReport>& reports,
                             const std::vector<std::string>& metrics,
                             std::vector<std::string> labels) {
  if (reports.empty()) throw InvalidArgument("no reports to compare");
  const auto& valid = report_metric_names();
  for (const auto& m : metrics) {
    if (std::find(valid.begin(), valid.end(), m) == valid.end()) {
      std::string list;
      for (const auto& v : valid) list += (list.empty() ? "" : ", ") + v;
      throw InvalidArgument("unknown metric '" + m + "'; valid metrics: " + list);
    }
  }
  for (const auto& r : reports) {
    if (r.rows.size() != reports.front().rows.size()) {
      throw InvalidArgument("reports have different iteration counts");
    }
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
      if (r.rows[i].iteration != reports.front().rows[i].iteration) {
        throw InvalidArgument("reports cover different iterations");
      }
    }
  }
  if (labels.empty()) {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < reports.size(); ++i) {
      std::string l = reports[i].strategy + "_s" + std::to_string(reports[i].seed);
      if (!seen.insert(l).second) l += "_" + std::to_string(i);
      labels.push_back(l);
    }
  }
  if (labels.size() != reports.size()) throw InvalidArgument("one label per report required");

  ComparisonTable t;
  t.labels = std::move(labels);
  t.metrics = metrics;
  for (const auto& row : reports.front().rows) t.iterations.push_back(row.iteration);
  for (const auto& r : reports) {
    std::vector<std::vector<double>> per_metric;
    for (const auto& m : metrics) {
      std::vector<double> curve;
      for (const auto& row : r.rows) curve.push_back(metric_value(row, m));
      per_metric.push_back(std::move(curve));
    }
    t.values.push_back(std::move(per_metric));
  }
  for (std::size_t a = 0; a < reports.size(); ++a) {
    for (std::size_t b = a + 1; b < reports.size(); ++b) {
      for (std::size_t m = 0; m < metrics.size(); ++m) {
        ComparisonTable::Difference d;
        d.a = a;
        d.b = b;
        d.metric = metrics[m];
        for (std::size_t i = 0; i < t.iterations.size(); ++i) {
          d.per_iteration.push_back(t.values[a][m][i] - t.values[b][m][i]);
        }
        d.mean = mean_over(d.per_iteration, t.iterations);
        t.differences.push_back(std::move(d));
      }
    }
  }
  return t;
}

std::string comparison_to_csv(const ComparisonTable& t) {
  std::ostringstream out;
  out << "iteration";
  for (const auto& l : t.labels) {
    for (const auto& m : t.metrics) out << ',' << l << '.' << m;
  }
  for (const auto& d : t.differences) {
    out << ',' << t.labels[d.a] << '-' << t.labels[d.b] << '.' << d.metric;
  }
  out << '\n';
  for (std::size_t i = 0; i < t.iterations.size(); ++i) {
    out << t.iterations[i];
    for (const auto& per_metric : t.values) {
      for (const auto& curve : per_metric) out << ',' << format_value(curve[i]);
    }
    for (const auto& d : t.differences) out << ',' << format_value(d.per_iteration[i]);
    out << '\n';
  }
  out << "mean";
  for (const auto& per_metric : t.values) {
    for (const auto& curve : per_metric) out << ',' << format_value(mean_over(curve, t.iterations));
  }
  for (const auto& d : t.differences) out << ',' << format_value(d.mean);
  out << '\n';
  return out.str();
}

}  // namespace cral
