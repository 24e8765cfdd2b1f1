#include <algorithm>
#include <cmath>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "cral/checkpoint.h"
#include "cral/corpus.h"
#include "cral/loop.h"
#include "cral/service.h"
#include "cral/synthetic.h"

// After the Eigen-using headers; see http_api.cpp.
#include "CLI11.hpp"
#include "cral/http_api.h"
#include "httplib.h"
#include "json.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

const std::vector<std::string> kSubcommands = {"pretrain", "simulate", "serve", "report", "synth"};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string config_value(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_array()) {
    std::string out;
    for (const auto& e : v) out += (out.empty() ? "" : ",") + config_value(e);
    return out;
  }
  return v.dump();
}

// Turns the keys of a --config JSON file into flags, skipping any flag that
// is already on the command line so explicit flags win. Keys may use '_' or
// '-'; an object under the subcommand's own name overrides top-level keys.
std::vector<std::string> merge_config_file(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.empty()) return args;
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  json merged = json::object();
  for (const auto& [k, v] : j.items()) {
    if (std::find(kSubcommands.begin(), kSubcommands.end(), k) == kSubcommands.end()) merged[k] = v;
  }
  if (j.contains(args[0]) && j.at(args[0]).is_object()) {
    for (const auto& [k, v] : j.at(args[0]).items()) merged[k] = v;
  }
  std::vector<std::string> out = args;
  for (const auto& [key, value] : merged.items()) {
    if (value.is_null()) continue;
    std::string flag = "--" + key;
    std::replace(flag.begin() + 2, flag.end(), '_', '-');
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (!given) out.push_back(flag + "=" + config_value(value));
  }
  return out;
}

// The merged value of every option of a subcommand, as given or defaulted.
json effective_flags(const CLI::App* app) {
  json out = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
    if (name == "help" || name == "config") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      out[name] = r.size() == 1 ? json(r.front()) : json(r);
    } else if (!opt->get_default_str().empty()) {
      out[name] = opt->get_default_str();
    }
  }
  return out;
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw cral::Error("cannot write " + tmp);
    out << text;
    if (!out) throw cral::Error("failed writing " + tmp);
  }
  fs::rename(tmp, path);
}

struct TaggerFlags {
  cral::TaggerConfig config;
  std::string decoder = "crf";
  std::string cvt = "on";

  void add(CLI::App* sub) {
    sub->add_option("--char-embed", config.char_embed_dim, "character embedding size")
        ->capture_default_str();
    sub->add_option("--char-hidden", config.char_hidden, "character LSTM size")->capture_default_str();
    sub->add_option("--modeling-hidden", config.modeling_hidden, "modelling LSTM size")
        ->capture_default_str();
    sub->add_option("--token-hidden", config.token_hidden, "token LSTM size")->capture_default_str();
    sub->add_option("--char-buckets", config.char_buckets, "character hash buckets")
        ->capture_default_str();
    sub->add_option("--dropout-char", config.dropout_char)->capture_default_str();
    sub->add_option("--dropout-outputs", config.dropout_outputs)->capture_default_str();
    sub->add_option("--lr", config.sgd_lr, "SGD learning rate")->capture_default_str();
    sub->add_option("--decoder", decoder)->check(CLI::IsMember({"crf", "softmax"}))->capture_default_str();
    sub->add_option("--cvt", cvt, "cross-view training")->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
  }

  cral::TaggerConfig resolve(std::uint64_t seed) const {
    cral::TaggerConfig c = config;
    c.seed = seed;
    c.use_cvt = cvt == "on";
    c.decoder = decoder == "crf" ? cral::Decoder::Crf : cral::Decoder::Softmax;
    c.validate();
    return c;
  }
};

struct LoopFlags {
  cral::LoopConfig config;
  std::string strategy = "cral";
  std::string paired_oracle;

  void add(CLI::App* sub, bool live) {
    sub->add_option("--strategy", strategy, "rand|uns|qbc|cral|uns-oracle|qbc-oracle|cral-oracle")
        ->capture_default_str();
    sub->add_option("--batch", config.batch_size, "tokens per iteration")->capture_default_str();
    sub->add_option("--lr-coeff", config.fine_tune_lr_coeff,
                    "fine-tune learning rate per labelled sentence")
        ->capture_default_str();
    sub->add_option("--ft-epochs", config.fine_tune_epochs)->capture_default_str();
    sub->add_option("--ft-patience", config.fine_tune_patience)->capture_default_str();
    sub->add_option("--ft-batch", config.fine_tune_batch_size)->capture_default_str();
    sub->add_flag("--keep-start", config.fine_tune_keep_start,
                  "let the starting weights win dev selection")
        ->capture_default_str();
    sub->add_flag("--ft-cvt", config.fine_tune_cvt, "cross-view loss over the pool when fine-tuning")
        ->capture_default_str();
    sub->add_flag("--warm-start,!--cold-start", config.warm_start,
                  "continue from the previous round's weights")
        ->capture_default_str();
    sub->add_option("--clip-norm", config.clip_norm)->capture_default_str();
    sub->add_option("--language", config.language, "boundary-token language code")
        ->capture_default_str();
    if (!live) {
      sub->add_option("--iterations", config.iterations)->capture_default_str();
      sub->add_option("--paired-oracle", paired_oracle, "oracle run on the same state for overlap");
      sub->add_option("--purity-neighbors", config.purity_neighbors)->capture_default_str();
      sub->add_option("--sce-bins", config.sce_bins)->capture_default_str();
      sub->add_flag("--timing", config.record_timing, "record wall-clock per iteration")
          ->capture_default_str();
    }
  }

  cral::LoopConfig resolve(std::uint64_t seed) const {
    cral::LoopConfig c = config;
    c.seed = seed;
    try {
      c.strategy = cral::parse_strategy(strategy);
      if (!paired_oracle.empty()) c.paired_oracle = cral::parse_strategy(paired_oracle);
      c.validate();
    } catch (const cral::InvalidArgument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

std::atomic<httplib::Server*> g_server{nullptr};

void stop_server(int) {
  if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = merge_config_file(args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  CLI::App app{"Active learning for part-of-speech tagging"};
  app.name("cral");
  app.require_subcommand(1);
  const auto add_config = [](CLI::App* sub) {
    sub->add_option("--config", "JSON file of flag values; explicit flags win");
  };

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "train the cross-lingual model on source corpora");
  std::vector<std::string> pre_train, pre_langs;
  std::string pre_dev, pre_dev_lang, pre_eval, pre_eval_lang = "tgt", pre_out;
  std::uint64_t pre_seed = 1;
  cral::PretrainConfig pre_config;
  TaggerFlags pre_tagger;
  pre->add_option("--train", pre_train, "source CoNLL-U files")->required()->delimiter(',')
      ->check(CLI::ExistingFile);
  pre->add_option("--langs", pre_langs, "one language code per training file")->required()
      ->delimiter(',');
  pre->add_option("--dev", pre_dev, "development CoNLL-U file")->required()->check(CLI::ExistingFile);
  pre->add_option("--dev-lang", pre_dev_lang, "language code of the dev file (default: first)");
  pre->add_option("--eval", pre_eval, "target test file for the zero-shot score")
      ->check(CLI::ExistingFile);
  pre->add_option("--eval-lang", pre_eval_lang)->capture_default_str();
  pre->add_option("--out", pre_out, "checkpoint path")->required();
  pre->add_option("--seed", pre_seed)->capture_default_str();
  pre->add_option("--epochs", pre_config.max_epochs)->capture_default_str();
  pre->add_option("--patience", pre_config.patience)->capture_default_str();
  pre->add_option("--train-batch", pre_config.batch_size)->capture_default_str();
  pre_tagger.add(pre);
  add_config(pre);

  // simulate
  auto* sim = app.add_subcommand("simulate", "run a simulated active-learning experiment");
  std::string sim_pool, sim_test, sim_dev, sim_model, sim_report = "report.json";
  std::uint64_t sim_seed = 0;
  LoopFlags sim_loop;
  sim->add_option("--pool", sim_pool, "gold CoNLL-U pool")->required()->check(CLI::ExistingFile);
  sim->add_option("--test", sim_test, "gold CoNLL-U test set")->required()->check(CLI::ExistingFile);
  sim->add_option("--dev", sim_dev, "target dev set for fine-tuning early stopping")
      ->check(CLI::ExistingFile);
  sim->add_option("--model", sim_model, "pretrained checkpoint")->required()->check(CLI::ExistingFile);
  sim->add_option("--seed", sim_seed, "run seed (required)")->required();
  sim->add_option("--report", sim_report, "output JSON report")->capture_default_str();
  sim_loop.config.iterations = 20;
  sim_loop.add(sim, false);
  add_config(sim);

  // serve
  auto* srv = app.add_subcommand("serve", "run the annotation service");
  std::string srv_pool, srv_model, srv_test, srv_dev, srv_log = "sessions", srv_host = "127.0.0.1";
  int srv_port = 8080;
  std::uint64_t srv_seed = 1;
  LoopFlags srv_loop;
  srv->add_option("--pool", srv_pool, "unlabelled CoNLL-U pool")->required()->check(CLI::ExistingFile);
  srv->add_option("--model", srv_model, "pretrained checkpoint")->required()->check(CLI::ExistingFile);
  srv->add_option("--test", srv_test, "held-out gold set for per-iteration accuracy")
      ->check(CLI::ExistingFile);
  srv->add_option("--dev", srv_dev, "target dev set for fine-tuning early stopping")
      ->check(CLI::ExistingFile);
  srv->add_option("--log", srv_log, "session log directory")->capture_default_str();
  srv->add_option("--host", srv_host)->capture_default_str();
  srv->add_option("--port", srv_port, "0 picks a free port")->check(CLI::Range(0, 65535))
      ->capture_default_str();
  srv->add_option("--seed", srv_seed, "default session seed")->capture_default_str();
  srv_loop.add(srv, true);
  add_config(srv);

  // report
  auto* rep = app.add_subcommand("report", "tabulate one or more run reports");
  std::vector<std::string> rep_in, rep_metrics = {"accuracy"}, rep_labels;
  std::string rep_csv;
  rep->add_option("--in", rep_in, "report files")->required()->delimiter(',')->check(CLI::ExistingFile);
  rep->add_option("--metrics", rep_metrics, "metric names")->delimiter(',');
  rep->add_option("--labels", rep_labels, "one label per report")->delimiter(',');
  rep->add_option("--csv", rep_csv, "CSV output path (stdout when omitted)");
  add_config(rep);

  // synth
  auto* syn = app.add_subcommand("synth", "write a synthetic gold corpus");
  cral::SyntheticOptions syn_opt;
  std::string syn_out;
  syn->add_option("--out", syn_out, "CoNLL-U output path")->required();
  syn->add_option("--variant", syn_opt.variant, "0 = target, 1 and 2 = related sources")
      ->check(CLI::Range(0, cral::kSyntheticVariants - 1))->capture_default_str();
  syn->add_option("--sentences", syn_opt.sentences)->capture_default_str();
  syn->add_option("--seed", syn_opt.seed)->capture_default_str();
  syn->add_option("--family-seed", syn_opt.family_seed)->capture_default_str();
  syn->add_option("--prefix", syn_opt.id_prefix, "sentence id prefix")->capture_default_str();
  syn->add_option("--zipf", syn_opt.zipf_exponent)->capture_default_str();
  add_config(syn);

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*pre) {
      if (pre_train.size() != pre_langs.size()) {
        throw UsageError("--train and --langs need the same number of entries");
      }
      pre_config.tagger = pre_tagger.resolve(pre_seed);
      std::vector<cral::LanguageCorpus> corpora;
      for (std::size_t i = 0; i < pre_train.size(); ++i) {
        corpora.emplace_back(cral::read_conllu_file(pre_train[i]), pre_langs[i]);
      }
      const cral::LanguageCorpus dev{cral::read_conllu_file(pre_dev),
                                     pre_dev_lang.empty() ? pre_langs.front() : pre_dev_lang};
      std::optional<cral::LanguageCorpus> eval;
      if (!pre_eval.empty()) eval.emplace(cral::read_conllu_file(pre_eval), pre_eval_lang);
      const auto result = cral::pretrain(corpora, dev, pre_config, eval ? &*eval : nullptr);
      cral::save_checkpoint(result.params, pre_out);
      json meta = {{"schema_version", cral::kReportSchemaVersion},
                   {"kind", "pretrain"},
                   {"checkpoint", pre_out},
                   {"flags", effective_flags(pre)},
                   {"tagger", cral::config_to_json(result.params.config)},
                   {"dev_accuracy", result.dev_accuracy},
                   {"best_epoch", result.best_epoch},
                   {"zero_shot_accuracy", result.zero_shot_accuracy
                                              ? json(*result.zero_shot_accuracy)
                                              : json(nullptr)}};
      write_text_atomic(pre_out + ".json", meta.dump(2) + "\n");
      std::printf("checkpoint written to %s (best epoch %d, dev accuracy %.4f)\n", pre_out.c_str(),
                  result.best_epoch,
                  result.dev_accuracy.empty() ? 0.0
                                              : *std::max_element(result.dev_accuracy.begin(),
                                                                  result.dev_accuracy.end()));
      if (result.zero_shot_accuracy) {
        std::printf("zero-shot accuracy (iteration 0): %.4f\n", *result.zero_shot_accuracy);
      }
      return kExitOk;
    }

    if (*sim) {
      cral::LoopConfig config = sim_loop.resolve(sim_seed);
      config.pool_path = sim_pool;
      config.test_path = sim_test;
      config.dev_path = sim_dev;
      config.model_path = sim_model;
      const cral::Corpus pool = cral::read_conllu_file(sim_pool);
      const cral::Corpus test = cral::read_conllu_file(sim_test);
      std::optional<cral::Corpus> dev;
      if (!sim_dev.empty()) dev = cral::read_conllu_file(sim_dev);
      const cral::TaggerParams model = cral::load_checkpoint(sim_model);
      cral::RunReport report = cral::run_simulation(model, pool, test, config, dev ? &*dev : nullptr);
      report.config["flags"] = effective_flags(sim);
      write_text_atomic(sim_report, cral::report_to_string(report));
      for (const auto& row : report.rows) {
        std::printf("iteration %2d  accuracy %.4f  annotations %zu\n", row.iteration, row.accuracy,
                    row.annotations);
      }
      std::printf("report written to %s\n", sim_report.c_str());
      return kExitOk;
    }

    if (*srv) {
      cral::ServiceConfig config;
      config.log_dir = srv_log;
      config.pool_path = srv_pool;
      config.model_path = srv_model;
      config.test_path = srv_test;
      config.dev_path = srv_dev;
      config.loop = srv_loop.resolve(srv_seed);
      if (cral::requires_gold(config.loop.strategy)) {
        throw UsageError("oracle strategies need gold labels and cannot serve live sessions");
      }
      cral::SessionManager sessions(config);
      std::vector<std::string> failures;
      const auto restored = sessions.restore(&failures);
      for (const auto& id : restored) std::printf("restored session %s\n", id.c_str());
      for (const auto& f : failures) std::fprintf(stderr, "could not restore %s\n", f.c_str());

      httplib::Server server;
      // No SO_REUSEPORT, so a second server cannot share a port that is in use.
      server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
      });
      cral::register_routes(server, sessions);
      int port = srv_port;
      if (port == 0) {
        port = server.bind_to_any_port(srv_host);
        if (port < 0) throw cral::Error("cannot bind to " + srv_host);
      } else if (!server.bind_to_port(srv_host, port)) {
        std::fprintf(stderr, "error: cannot listen on %s:%d (port in use?)\n", srv_host.c_str(), port);
        return kExitFailure;
      }
      g_server = &server;
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      std::printf("listening on http://%s:%d\n", srv_host.c_str(), port);
      std::printf("create a session: POST %s\n", cral::session_create_url(srv_host, port).c_str());
      std::fflush(stdout);
      server.listen_after_bind();
      g_server = nullptr;
      return kExitOk;
    }

    if (*rep) {
      const auto& valid = cral::report_metric_names();
      for (const auto& m : rep_metrics) {
        if (std::find(valid.begin(), valid.end(), m) == valid.end()) {
          std::string list;
          for (const auto& v : valid) list += (list.empty() ? "" : ", ") + v;
          throw UsageError("unknown metric '" + m + "'; valid metrics: " + list);
        }
      }
      std::vector<cral::RunReport> reports;
      for (const auto& path : rep_in) reports.push_back(cral::read_report(path));
      const auto table = cral::compare_runs(reports, rep_metrics, rep_labels);
      const std::string csv = cral::comparison_to_csv(table);
      if (rep_csv.empty()) {
        std::cout << csv;
      } else {
        write_text_atomic(rep_csv, csv);
        json meta = {{"schema_version", cral::kReportSchemaVersion},
                     {"kind", "comparison"},
                     {"flags", effective_flags(rep)},
                     {"labels", table.labels},
                     {"metrics", table.metrics}};
        json diffs = json::array();
        for (const auto& d : table.differences) {
          diffs.push_back({{"a", table.labels[d.a]},
                           {"b", table.labels[d.b]},
                           {"metric", d.metric},
                           {"mean", std::isnan(d.mean) ? json(nullptr) : json(d.mean)}});
        }
        meta["differences"] = diffs;
        write_text_atomic(rep_csv + ".json", meta.dump(2) + "\n");
        std::printf("wrote %s\n", rep_csv.c_str());
      }
      return kExitOk;
    }

    if (*syn) {
      const cral::Corpus corpus = cral::generate_synthetic(syn_opt);
      cral::WriteOptions w;
      w.include_gold = true;
      write_text_atomic(syn_out, cral::write_conllu(corpus, cral::AnnotationStore(corpus), w));
      std::printf("wrote %zu sentences to %s\n", corpus.size(), syn_out.c_str());
      return kExitOk;
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
