#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cral/corpus.h"
#include "cral/metrics.h"
#include "cral/strategies.h"
#include "cral/tagger.h"
#include "cral/trainer.h"

namespace cral {

inline constexpr int kReportSchemaVersion = 1;

// A corpus together with the language code used for its boundary tokens.
using LanguageCorpus = std::pair<Corpus, std::string>;

struct PretrainConfig {
  TaggerConfig tagger;
  int max_epochs = 50;
  int patience = 5;
  int batch_size = 8;
};

struct PretrainResult {
  TaggerParams params;
  std::vector<double> dev_accuracy;
  int best_epoch = 0;
  // Accuracy on the evaluation corpus, when one was given.
  std::optional<double> zero_shot_accuracy;
};

// Trains from scratch on the concatenated, language-tagged corpora with full
// supervision (and cross-view training over the same sentences when enabled).
// Throws InvalidArgument when a corpus is not fully gold-tagged.
PretrainResult pretrain(const std::vector<LanguageCorpus>& train, const LanguageCorpus& dev,
                        const PretrainConfig& config, const LanguageCorpus* eval = nullptr);

struct LoopConfig {
  Strategy strategy = Strategy::Cral;
  std::size_t batch_size = 50;
  int iterations = 20;
  double fine_tune_lr_coeff = 2.5e-5;
  std::uint64_t seed = 1;
  // Code for the boundary tokens wrapped around pool and test sentences.
  std::string language = "tgt";
  // Epoch cap for fine-tuning. With a dev corpus, fine-tuning stops early on
  // dev accuracy and keeps the best weights (possibly the starting ones);
  // without one it runs exactly this many epochs.
  int fine_tune_epochs = 50;
  int fine_tune_patience = 5;
  // Let the starting weights compete in dev selection. Off by default: the
  // round then always keeps a trained epoch.
  bool fine_tune_keep_start = false;
  int fine_tune_batch_size = 1;
  double clip_norm = 5.0;
  // Cross-view loss over the pool during fine-tuning.
  bool fine_tune_cvt = false;
  // Continue from the previous iteration's weights; otherwise restart from
  // the pretrained weights every iteration.
  bool warm_start = true;
  // Run this oracle on the same model state each round and report overlap.
  std::optional<Strategy> paired_oracle;
  std::size_t purity_neighbors = 100;
  int sce_bins = 10;
  // Wall-clock is left out of reports unless requested so reruns are
  // byte-identical.
  bool record_timing = false;
  // Echoed into the report only.
  std::string pool_path, test_path, dev_path, model_path;

  void validate() const;
};

nlohmann::json loop_config_to_json(const LoopConfig& config);
LoopConfig loop_config_from_json(const nlohmann::json& j, LoopConfig base = {});

struct SelectionRecord {
  std::string type_key;
  std::optional<std::string> confusing_tag;
  std::string sentence_id;
  std::size_t token = 0;  // index within the tagged sentence
  std::string surface;
  std::string gold_tag;
  double score = 0.0;
};

struct IterationRow {
  int iteration = 0;
  double accuracy = 0.0;
  std::size_t annotations = 0;
  std::size_t labeled_sentences = 0;
  double learning_rate = 0.0;
  std::vector<SelectionRecord> selection;
  double wd = 0.0;
  std::optional<double> confusion;
  double sce = 0.0;
  std::optional<double> oracle_overlap;
  std::optional<double> syncretism;
  std::optional<PuritySummary> purity;
  std::optional<double> wall_ms;
  std::vector<std::string> warnings;
};

struct RunReport {
  std::string strategy;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::vector<IterationRow> rows;
};

nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& j);
// Pretty-printed JSON with a trailing newline.
std::string report_to_string(const RunReport& report);
RunReport read_report(const std::string& path);

// Pool and test are wrapped with the configured language code on entry.
struct LoopState {
  TaggerParams pretrained;
  TaggerParams params;
  AnnotationStore store;
  int iteration = 0;
  IterationSnapshot last;
};

struct LoopData {
  Corpus pool;  // tagged
  Corpus test;  // tagged
  std::optional<Corpus> dev;  // tagged; drives fine-tuning early stopping
  TypeIndex pool_index;

  LoopData(const Corpus& raw_pool, const Corpus& raw_test, const std::string& language,
           const Corpus* raw_dev = nullptr);
};

// Row for the starting model, without any selection.
IterationRow evaluate_start(LoopState& state, const LoopData& data, const LoopConfig& config);

// One select, annotate, fine-tune, evaluate round. Labels come from the
// pool's gold tags. Throws InvalidArgument when the pool is exhausted.
IterationRow run_iteration(LoopState& state, const LoopData& data, const LoopConfig& config);

// Learning rate for fine-tuning on the current store.
double fine_tune_learning_rate(const LoopConfig& config, const AnnotationStore& store);

// Seeds for the selection and fine-tuning of round `iteration` (1-based).
std::uint64_t selection_seed(const LoopConfig& config, int iteration);
std::uint64_t fine_tune_seed(const LoopConfig& config, int iteration);

// Per-sentence token representations, in corpus order.
std::vector<Eigen::MatrixXd> states_of(const CorpusPrediction& prediction);

// Fine-tunes on everything in the store. Returns the input unchanged when the
// store is empty.
TaggerParams fine_tune(const TaggerParams& start, const Corpus& pool, const AnnotationStore& store,
                       const LoopConfig& config, std::uint64_t seed, const Corpus* dev = nullptr);

// Zero-shot row followed by config.iterations rounds from the given model.
// Throws InvalidArgument when an oracle is requested and the pool lacks gold.
RunReport run_simulation(const TaggerParams& pretrained, const Corpus& pool, const Corpus& test,
                         const LoopConfig& config, const Corpus* dev = nullptr);

struct ComparisonTable {
  std::vector<std::string> labels;   // one per report
  std::vector<std::string> metrics;  // requested metric names
  std::vector<int> iterations;
  // values[r][m][i]; NaN where a report has no value.
  std::vector<std::vector<std::vector<double>>> values;
  struct Difference {
    std::size_t a = 0, b = 0;
    std::string metric;
    std::vector<double> per_iteration;  // a - b
    double mean = 0.0;                  // over iterations with both values
  };
  std::vector<Difference> differences;
};

const std::vector<std::string>& report_metric_names();

// Per-iteration curves plus pairwise differences for every ordered pair
// (earlier report minus later). Throws InvalidArgument when iteration counts
// differ or a metric name is unknown.
ComparisonTable compare_runs(const std::vector<RunReport>& reports,
                             const std::vector<std::string>& metrics = {"accuracy"},
                             std::vector<std::string> labels = {});

// One row per iteration and a final "mean" row.
std::string comparison_to_csv(const ComparisonTable& table);

}  // namespace cral
