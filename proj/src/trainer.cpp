#include "cral/trainer.h"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cral/error.h"
#include "cral/metrics.h"

namespace cral {

namespace {

void zero(TaggerParams& p) {
  for (auto& t : p.tensors()) Eigen::Map<Eigen::VectorXd>(t.data, t.size()).setZero();
}

// Averages the accumulated gradient, clips it and applies one SGD step.
void sgd_step(TaggerParams& params, TaggerParams& grad, std::size_t batch,
              const TrainOptions& options) {
  double scale = 1.0 / static_cast<double>(batch);
  if (options.clip_norm > 0.0) {
    const double norm = std::sqrt(squared_norm(grad)) * scale;
    if (norm > options.clip_norm) scale *= options.clip_norm / norm;
  }
  axpy(params, -options.lr * scale, grad);
}

}  // namespace

std::vector<LabeledExample> examples_from_gold(const Corpus& corpus) {
  std::vector<LabeledExample> out;
  for (const auto& s : corpus.sentences) {
    LabeledExample ex{&s, {}};
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      if (s.tokens[t].gold) ex.constraints.emplace(t, *s.tokens[t].gold);
    }
    if (!ex.constraints.empty()) out.push_back(std::move(ex));
  }
  return out;
}

std::vector<LabeledExample> examples_from_store(const Corpus& corpus,
                                                const AnnotationStore& store) {
  std::vector<LabeledExample> out;
  for (std::size_t i : store.labeled_sentences()) {
    out.push_back({&corpus.sentences[i], store.constraints(i)});
  }
  return out;
}

double evaluate_accuracy(const Corpus& corpus, const TaggerParams& params) {
  const auto pred = predict(corpus, params);
  return token_accuracy(pred.viterbi(), corpus);
}

TrainResult train(TaggerParams init, const std::vector<LabeledExample>& labeled,
                  const std::vector<const Sentence*>& unlabeled, const Corpus* dev,
                  const TrainOptions& options) {
  std::size_t labeled_tokens = 0;
  for (const auto& ex : labeled) labeled_tokens += ex.constraints.size();
  if (labeled_tokens == 0) throw InvalidArgument("training requires at least one labeled token");
  if (options.batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (options.max_epochs < 0) throw InvalidArgument("max_epochs must be >= 0");

  nn::Rng rng(options.seed);
  nn::Rng* noise = options.dropout ? &rng : nullptr;
  TrainResult result;
  TaggerParams params = std::move(init);
  TaggerParams grad = params.zeros_like();

  double best_acc = -std::numeric_limits<double>::infinity();
  if (dev) {
    const double initial = evaluate_accuracy(*dev, params);
    result.dev_accuracy.push_back(initial);
    if (options.keep_initial || options.max_epochs == 0) {
      best_acc = initial;
      result.params = params;
    }
  }

  std::vector<std::size_t> order(labeled.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> u_order(unlabeled.size());
  std::iota(u_order.begin(), u_order.end(), 0);
  std::size_t u_cursor = u_order.size();
  const bool cvt = options.use_cvt && !unlabeled.empty();
  const auto batch = static_cast<std::size_t>(options.batch_size);

  int since_best = 0;
  std::size_t step = 0;
  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      zero(grad);
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = labeled[order[i]];
        epoch_loss += supervised_loss(*ex.sentence, ex.constraints, params, &grad, noise);
      }
      ++step;
      if (!std::isfinite(epoch_loss)) {
        throw DivergenceError("supervised loss diverged at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(step));
      }
      sgd_step(params, grad, end - start, options);

      if (!cvt) continue;
      zero(grad);
      double u_loss = 0.0;
      for (std::size_t i = 0; i < end - start; ++i) {
        if (u_cursor >= u_order.size()) {
          rng.shuffle(u_order.begin(), u_order.end());
          u_cursor = 0;
        }
        const Sentence& s = *unlabeled[u_order[u_cursor++]];
        const Eigen::MatrixXd teacher = view_distribution(encode(s, params), params, View::Full);
        u_loss += cvt_loss(s, teacher, params, &grad, noise);
      }
      if (!std::isfinite(u_loss)) {
        throw DivergenceError("cross-view loss diverged at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(step));
      }
      sgd_step(params, grad, end - start, options);
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(labeled.size()));
    result.epochs_run = epoch;

    if (!dev) continue;
    const double acc = evaluate_accuracy(*dev, params);
    result.dev_accuracy.push_back(acc);
    if (acc > best_acc) {
      best_acc = acc;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= options.patience) {
      break;
    }
  }
  if (!dev) {
    result.params = std::move(params);
    result.best_epoch = result.epochs_run;
  }
  return result;
}

TrainResult train(const Corpus& labeled, const AnnotationStore* store, const Corpus& unlabeled,
                  const TaggerConfig& config, const Corpus* dev, TrainOptions options) {
  auto examples = store ? examples_from_store(labeled, *store) : examples_from_gold(labeled);
  std::vector<const Sentence*> pool;
  for (const auto& s : unlabeled.sentences) pool.push_back(&s);
  options.use_cvt = config.use_cvt;
  options.seed = config.seed;
  options.lr = config.sgd_lr;
  return train(TaggerParams::initialize(config), examples, pool, dev, options);
}

}  // namespace cral
