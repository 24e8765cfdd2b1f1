#include "cral/service.h"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include "cral/checkpoint.h"

namespace cral {

namespace fs = std::filesystem;
using nlohmann::json;

json ServiceError::body() const {
  return {{"code", code_}, {"message", what()}, {"details", details_}};
}

namespace {

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

Corpus strip_gold(Corpus c) {
  for (auto& s : c.sentences) {
    for (auto& t : s.tokens) t.gold.reset();
  }
  return c;
}

ServiceError bad_request(const std::string& code, const std::string& message,
                         json details = json::object()) {
  return ServiceError(400, code, message, std::move(details));
}

std::string tag_name(TagId t) { return std::string(TagSet::symbol(t)); }

json allowed_tags() {
  json out = json::array();
  for (TagId t = 0; t < TagSet::kSize; ++t) out.push_back(tag_name(t));
  return out;
}

const std::vector<std::string> kCreateFields = {"pool",       "model",            "test",
                                                "dev",        "strategy",         "batch_size",
                                                "seed",       "show_suggestions", "practice"};

}  // namespace

json item_to_json(const AnnotationItem& item, bool with_suggestion) {
  json out = {{"item_id", item.item_id},
              {"sentence_id", item.sentence_id},
              {"surfaces", item.surfaces},
              {"highlight_index", item.highlight_index},
              {"type_key", item.type_key},
              {"allowed_tags", allowed_tags()}};
  if (with_suggestion) out["suggestion"] = item.suggestion;
  return out;
}

struct SessionManager::Session {
  std::mutex mutex;
  std::string id;
  fs::path dir;
  json manifest;
  LoopConfig loop;
  bool show_suggestions = false;

  Corpus pool;  // language-tagged, no gold
  TypeIndex index;
  std::optional<Corpus> test, dev;  // language-tagged, gold
  TaggerParams pretrained, params;
  AnnotationStore store;
  int iteration = 0;

  std::vector<AnnotationItem> batch;
  std::map<std::string, SubmittedLabel> labels;
  std::vector<json> rows;
  std::optional<IterationSnapshot> last;
  std::int64_t last_timestamp = 0;

  fs::path log_path() const { return dir / "log.ndjson"; }
  fs::path checkpoint_path(int k) const { return dir / ("iter-" + std::to_string(k) + ".ckpt"); }

  const AnnotationItem* item(const std::string& item_id) const {
    for (const auto& it : batch) {
      if (it.item_id == item_id) return &it;
    }
    return nullptr;
  }

  std::vector<std::string> pending() const {
    std::vector<std::string> out;
    for (const auto& it : batch) {
      if (!labels.count(it.item_id)) out.push_back(it.item_id);
    }
    return out;
  }

  void select_batch() {
    batch.clear();
    labels.clear();
    const CandidatePool candidates = build_candidate_pool(pool, index, store);
    if (candidates.empty()) return;
    const CorpusPrediction pred = predict(pool, params);
    SelectionContext ctx;
    ctx.prediction = &pred;
    ctx.seed = selection_seed(loop, iteration + 1);
    ctx.iteration = iteration + 1;
    const SelectionBatch chosen = select(loop.strategy, candidates, loop.batch_size, ctx);
    for (std::size_t n = 0; n < chosen.size(); ++n) {
      const Position pos = chosen[n].position;
      const Sentence& sentence = pool.sentences[pos.sentence];
      AnnotationItem item;
      item.item_id = "it" + std::to_string(iteration + 1) + "-" + std::to_string(n + 1);
      item.position = pos;
      item.sentence_id = sentence.id;
      item.type_key = chosen[n].type_key;
      for (std::size_t t = 0; t < sentence.tokens.size(); ++t) {
        if (sentence.tokens[t].boundary) continue;
        if (t == pos.token) item.highlight_index = item.surfaces.size();
        item.surfaces.push_back(sentence.tokens[t].surface);
      }
      const Eigen::RowVectorXd probs = pred.sentences[pos.sentence].marginals.row(pos.token);
      std::vector<TagId> order(TagSet::kSize);
      for (TagId t = 0; t < TagSet::kSize; ++t) order[t] = t;
      std::stable_sort(order.begin(), order.end(),
                       [&](TagId a, TagId b) { return probs(a) > probs(b); });
      item.suggestion = {tag_name(order[0]), tag_name(order[1])};
      batch.push_back(std::move(item));
    }
  }

  json evaluate(double learning_rate, std::int64_t annotation_ms) {
    json row = {{"iteration", iteration},
                {"annotations", store.size()},
                {"labeled_sentences", store.labeled_sentences().size()},
                {"learning_rate", learning_rate},
                {"annotation_ms", annotation_ms},
                {"accuracy", nullptr},
                {"sce", nullptr},
                {"confusion", nullptr}};
    if (test) {
      const CorpusPrediction pred = predict(*test, params);
      IterationSnapshot snap{iteration, pred.viterbi(), 0.0};
      snap.accuracy = token_accuracy(snap.predictions, *test);
      row["accuracy"] = snap.accuracy;
      row["sce"] = static_calibration_error(pred.marginals(), *test, loop.sce_bins);
      if (last) row["confusion"] = confusion_score(*last, snap, *test);
      last = std::move(snap);
    }
    return row;
  }

  // The store already holds every label of the open batch.
  TaggerParams fine_tuned(bool use_checkpoint) const {
    const int next = iteration + 1;
    if (use_checkpoint && fs::exists(checkpoint_path(next))) {
      try {
        return load_checkpoint(checkpoint_path(next).string());
      } catch (const Error&) {
        // fall through and recompute
      }
    }
    const TaggerParams& start = loop.warm_start ? params : pretrained;
    return fine_tune(start, pool, store, loop, fine_tune_seed(loop, next), dev ? &*dev : nullptr);
  }

  void commit_advance(TaggerParams next_params) {
    std::int64_t annotation_ms = 0;
    for (const auto& [id, l] : labels) annotation_ms += l.elapsed_ms;
    const double lr = fine_tune_learning_rate(loop, store);
    params = std::move(next_params);
    ++iteration;
    rows.push_back(evaluate(lr, annotation_ms));
    select_batch();
  }

  void apply_label(const std::string& item_id, const SubmittedLabel& label) {
    const AnnotationItem* it = item(item_id);
    store.assign(it->position, label.tag,
                 AnnotationMeta{iteration + 1, label.annotator_id, label.elapsed_ms});
    labels[item_id] = label;
  }

  std::int64_t next_timestamp() {
    last_timestamp = std::max(last_timestamp, now_ms());
    return last_timestamp;
  }

  void append_log(const json& entry) {
    std::ofstream out(log_path(), std::ios::app | std::ios::binary);
    if (!out) throw Error("cannot append to " + log_path().string());
    out << entry.dump() << '\n';
    out.flush();
    if (!out) throw Error("failed writing " + log_path().string());
  }

  json batch_json() const {
    json items = json::array();
    for (const auto& it : batch) items.push_back(item_to_json(it, show_suggestions));
    json submitted = json::object();
    for (const auto& [id, l] : labels) submitted[id] = tag_name(l.tag);
    const auto p = pending();
    return {{"session_id", id},
            {"iteration", iteration},
            {"status", batch.empty() ? "exhausted" : "open"},
            {"items", items},
            {"submitted", submitted},
            {"pending", p.size()},
            {"pending_item_ids", p},
            {"complete", p.empty()}};
  }
};

SessionManager::SessionManager(ServiceConfig config) : config_(std::move(config)) {
  fs::create_directories(config_.log_dir);
}

SessionManager::~SessionManager() = default;

std::unique_ptr<SessionManager::Session> SessionManager::open_session(const std::string& id,
                                                                      const json& manifest) {
  auto s = std::make_unique<Session>();
  s->id = id;
  s->dir = config_.log_dir / id;
  s->manifest = manifest;
  s->loop = loop_config_from_json(manifest.at("loop"));
  s->show_suggestions = manifest.value("show_suggestions", false);

  const std::string pool_path = manifest.at("pool_path").get<std::string>();
  const std::string model_path = manifest.at("model_path").get<std::string>();
  const std::string pool_text = read_file(pool_path);
  const std::string model_bytes = read_file(model_path);
  if (manifest.contains("digests")) {
    const auto& d = manifest.at("digests");
    if (d.value("pool", "") != hex(fnv1a(pool_text))) {
      throw Error("pool file " + pool_path + " changed since the session was created");
    }
    if (d.value("model", "") != hex(fnv1a(model_bytes))) {
      throw Error("model file " + model_path + " changed since the session was created");
    }
  }
  s->pool = add_language_tags(strip_gold(parse_conllu(pool_text)), s->loop.language);
  s->index = TypeIndex(s->pool);
  s->pretrained = deserialize_checkpoint(model_bytes);
  s->params = s->pretrained;
  s->store = AnnotationStore(s->pool);
  const auto load_gold = [&](const char* key) -> std::optional<Corpus> {
    const std::string path = manifest.value(key, "");
    if (path.empty()) return std::nullopt;
    Corpus c = read_conllu_file(path);
    if (!c.fully_gold()) throw InvalidArgument(std::string(key) + " corpus is not fully gold-tagged");
    return add_language_tags(c, s->loop.language);
  };
  s->test = load_gold("test_path");
  s->dev = load_gold("dev_path");
  s->rows.push_back(s->evaluate(0.0, 0));
  s->select_batch();
  return s;
}

void SessionManager::replay(Session& s) {
  const fs::path path = s.log_path();
  if (!fs::exists(path)) return;
  const std::string text = read_file(path);
  std::size_t offset = 0;
  std::size_t line_no = 0;
  while (offset < text.size()) {
    const std::size_t end = text.find('\n', offset);
    ++line_no;
    if (end == std::string::npos) {
      // A write torn by a crash; drop it so the log stays well formed.
      fs::resize_file(path, offset);
      break;
    }
    const json entry = json::parse(text.substr(offset, end - offset));
    offset = end + 1;
    const std::string event = entry.at("event").get<std::string>();
    s.last_timestamp = std::max(s.last_timestamp, entry.at("timestamp").get<std::int64_t>());
    if (event == "annotation") {
      const std::string item_id = entry.at("item_id").get<std::string>();
      const AnnotationItem* it = s.item(item_id);
      if (!it || it->position.token != entry.at("token_index").get<std::size_t>() ||
          it->sentence_id != entry.at("sentence_id").get<std::string>()) {
        throw Error("log line " + std::to_string(line_no) + ": item " + item_id +
                    " is not in the replayed batch");
      }
      const auto tag = TagSet::find(entry.at("tag").get<std::string>());
      if (!tag) throw Error("log line " + std::to_string(line_no) + ": unknown tag");
      s.apply_label(item_id, SubmittedLabel{*tag, entry.at("elapsed_ms").get<std::int64_t>(),
                                            entry.at("annotator_id").get<std::string>()});
    } else if (event == "advance") {
      if (entry.at("iteration").get<int>() != s.iteration + 1 || !s.pending().empty()) {
        throw Error("log line " + std::to_string(line_no) + ": advance out of sequence");
      }
      s.commit_advance(s.fine_tuned(true));
    } else {
      throw Error("log line " + std::to_string(line_no) + ": unknown event '" + event + "'");
    }
  }
}

std::vector<std::string> SessionManager::restore(std::vector<std::string>* failures) {
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(config_.log_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<std::string> restored;
  for (const auto& dir : dirs) {
    const std::string id = dir.filename().string();
    try {
      const json manifest = json::parse(read_file(dir / "manifest.json"));
      if (manifest.value("schema_version", -1) != kSessionSchemaVersion) {
        throw Error("unsupported session schema version");
      }
      auto s = open_session(id, manifest);
      replay(*s);
      std::lock_guard lock(mutex_);
      sessions_[id] = std::move(s);
      restored.push_back(id);
    } catch (const std::exception& e) {
      if (failures) failures->push_back(id + ": " + e.what());
    }
    const auto dash = id.rfind('-');
    if (dash != std::string::npos) {
      try {
        next_id_ = std::max(next_id_, std::stoi(id.substr(dash + 1)) + 1);
      } catch (const std::exception&) {
      }
    }
  }
  return restored;
}

json SessionManager::create_session(const json& request) {
  if (!request.is_object()) throw bad_request("invalid_request", "request body must be a JSON object");
  for (const auto& [key, value] : request.items()) {
    if (std::find(kCreateFields.begin(), kCreateFields.end(), key) == kCreateFields.end()) {
      throw bad_request("invalid_request", "unknown field '" + key + "'",
                        {{"allowed_fields", kCreateFields}});
    }
  }
  LoopConfig loop = config_.loop;
  std::string pool_path = config_.pool_path, model_path = config_.model_path,
              test_path = config_.test_path, dev_path = config_.dev_path;
  bool show_suggestions = false, practice = false;
  try {
    if (request.contains("strategy")) {
      const std::string name = request.at("strategy").get<std::string>();
      try {
        loop.strategy = parse_strategy(name);
      } catch (const InvalidArgument& e) {
        throw bad_request("unknown_strategy", e.what(), {{"strategy", name}});
      }
    }
    if (request.contains("batch_size")) {
      const auto b = request.at("batch_size").get<std::int64_t>();
      if (b < 1) throw bad_request("invalid_request", "batch_size must be >= 1");
      loop.batch_size = static_cast<std::size_t>(b);
    }
    if (request.contains("seed")) loop.seed = request.at("seed").get<std::uint64_t>();
    if (request.contains("pool")) pool_path = request.at("pool").get<std::string>();
    if (request.contains("model")) model_path = request.at("model").get<std::string>();
    if (request.contains("test")) test_path = request.at("test").get<std::string>();
    if (request.contains("dev")) dev_path = request.at("dev").get<std::string>();
    show_suggestions = request.value("show_suggestions", false);
    practice = request.value("practice", false);
  } catch (const json::exception& e) {
    throw bad_request("invalid_request", std::string("malformed field: ") + e.what());
  }
  if (requires_gold(loop.strategy)) {
    throw bad_request("oracle_strategy",
                      "strategy '" + std::string(strategy_name(loop.strategy)) +
                          "' reads gold labels, which live sessions do not have",
                      {{"strategy", strategy_name(loop.strategy)}});
  }
  loop.paired_oracle.reset();
  if (pool_path.empty()) throw bad_request("invalid_request", "no pool given");
  if (model_path.empty()) throw bad_request("invalid_request", "no model given");

  const auto absolute = [](const std::string& p) {
    return p.empty() ? p : fs::absolute(p).lexically_normal().string();
  };
  json manifest = {{"schema_version", kSessionSchemaVersion},
                   {"pool_path", absolute(pool_path)},
                   {"model_path", absolute(model_path)},
                   {"test_path", absolute(test_path)},
                   {"dev_path", absolute(dev_path)},
                   {"show_suggestions", show_suggestions},
                   {"practice", practice},
                   {"created_ms", now_ms()},
                   {"loop", loop_config_to_json(loop)}};
  try {
    manifest["digests"] = {{"pool", hex(fnv1a(read_file(manifest["pool_path"])))},
                           {"model", hex(fnv1a(read_file(manifest["model_path"])))}};
  } catch (const Error& e) {
    throw bad_request("invalid_input", e.what());
  }

  std::unique_lock lock(mutex_);
  char buf[32];
  std::snprintf(buf, sizeof buf, "session-%04d", next_id_++);
  const std::string id = buf;
  manifest["session_id"] = id;
  lock.unlock();

  std::unique_ptr<Session> s;
  try {
    s = open_session(id, manifest);
  } catch (const ServiceError&) {
    throw;
  } catch (const std::exception& e) {
    throw bad_request("invalid_input", e.what());
  }
  manifest["tagger"] = config_to_json(s->pretrained.config);
  s->manifest = manifest;
  fs::create_directories(s->dir);
  write_file_atomic(s->dir / "manifest.json", manifest.dump(2) + "\n");
  { std::ofstream touch(s->log_path(), std::ios::app); }

  json out = {{"session_id", id}, {"iteration", 0}, {"batch", s->batch_json()}};
  lock.lock();
  sessions_[id] = std::move(s);
  return out;
}

SessionManager::Session& SessionManager::find(const std::string& id) {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) {
    throw ServiceError(404, "session_not_found", "no session '" + id + "'", {{"session_id", id}});
  }
  return *it->second;
}

json SessionManager::batch(const std::string& id) {
  Session& s = find(id);
  std::lock_guard lock(s.mutex);
  return s.batch_json();
}

json SessionManager::submit(const std::string& id, const json& request) {
  Session& s = find(id);
  std::lock_guard lock(s.mutex);
  if (!request.is_object() || !request.contains("labels") || !request.at("labels").is_array()) {
    throw bad_request("invalid_request", "body must be {\"labels\": [{item_id, tag, elapsed_ms}]}");
  }
  const std::string default_annotator = request.value("annotator_id", std::string("anonymous"));

  struct Pending {
    std::string item_id;
    SubmittedLabel label;
  };
  std::vector<Pending> accepted;
  json unknown_items = json::array(), unknown_tags = json::array(), warnings = json::array();
  std::map<std::string, int> seen;
  try {
    for (const auto& l : request.at("labels")) {
      const std::string item_id = l.at("item_id").get<std::string>();
      const std::string tag = l.at("tag").get<std::string>();
      const std::int64_t elapsed = l.value("elapsed_ms", std::int64_t{0});
      if (elapsed < 0) throw bad_request("invalid_request", "elapsed_ms must be >= 0");
      const auto parsed = TagSet::find(tag);
      if (!s.item(item_id)) unknown_items.push_back(item_id);
      if (!parsed) unknown_tags.push_back(tag);
      if (!parsed || !s.item(item_id)) continue;
      if (seen[item_id]++ == 1) {
        warnings.push_back("item " + item_id + " appears more than once; the last label wins");
      }
      accepted.push_back(
          {item_id, {*parsed, elapsed, l.value("annotator_id", default_annotator)}});
    }
  } catch (const json::exception& e) {
    throw bad_request("invalid_request", std::string("malformed label: ") + e.what());
  }
  if (!unknown_items.empty()) {
    throw bad_request("unknown_item", "item ids not in the open batch: " + unknown_items.dump(),
                      {{"unknown_item_ids", unknown_items}});
  }
  if (!unknown_tags.empty()) {
    throw bad_request("unknown_tag", "unknown tag symbols: " + unknown_tags.dump(),
                      {{"unknown_tags", unknown_tags}, {"allowed_tags", allowed_tags()}});
  }

  for (const auto& p : accepted) {
    const AnnotationItem& it = *s.item(p.item_id);
    const json entry = {{"event", "annotation"},
                        {"timestamp", s.next_timestamp()},
                        {"session_id", s.id},
                        {"item_id", p.item_id},
                        {"sentence_id", it.sentence_id},
                        {"token_index", it.position.token},
                        {"type_key", it.type_key},
                        {"tag", tag_name(p.label.tag)},
                        {"annotator_id", p.label.annotator_id},
                        {"elapsed_ms", p.label.elapsed_ms}};
    s.append_log(entry);
    s.apply_label(p.item_id, p.label);
  }
  const auto pending = s.pending();
  return {{"session_id", s.id},
          {"accepted", accepted.size()},
          {"pending", pending.size()},
          {"pending_item_ids", pending},
          {"complete", pending.empty()},
          {"warnings", warnings}};
}

json SessionManager::advance(const std::string& id) {
  Session& s = find(id);
  std::lock_guard lock(s.mutex);
  if (s.batch.empty()) {
    throw ServiceError(409, "pool_exhausted", "no unlabeled tokens remain in the pool");
  }
  const auto pending = s.pending();
  if (!pending.empty()) {
    throw ServiceError(409, "batch_incomplete",
                       std::to_string(pending.size()) + " item(s) of the open batch are unlabeled",
                       {{"pending", pending.size()}, {"pending_item_ids", pending}});
  }
  TaggerParams next = s.fine_tuned(false);
  const int k = s.iteration + 1;
  save_checkpoint(next, s.checkpoint_path(k).string());
  s.append_log({{"event", "advance"},
                {"timestamp", s.next_timestamp()},
                {"session_id", s.id},
                {"iteration", k}});
  s.commit_advance(std::move(next));
  return {{"session_id", s.id},
          {"iteration", s.iteration},
          {"status", "complete"},
          {"metrics", s.rows.back()},
          {"batch", s.batch_json()}};
}

json SessionManager::metrics(const std::string& id) {
  Session& s = find(id);
  std::lock_guard lock(s.mutex);
  return {{"session_id", s.id}, {"iteration", s.iteration}, {"rows", s.rows}};
}

std::string SessionManager::export_conllu(const std::string& id) {
  Session& s = find(id);
  std::lock_guard lock(s.mutex);
  return write_conllu(s.pool, s.store);
}

json SessionManager::snapshot(const std::string& id) {
  Session& s = find(id);
  std::lock_guard lock(s.mutex);
  json store = json::array();
  for (const auto& [pos, a] : s.store.entries()) {
    store.push_back({{"sentence", pos.sentence},
                     {"token", pos.token},
                     {"tag", tag_name(a.tag)},
                     {"annotator_id", a.meta.annotator},
                     {"elapsed_ms", a.meta.elapsed_ms},
                     {"iteration", a.meta.iteration}});
  }
  json batch = json::array();
  for (const auto& it : s.batch) {
    json j = item_to_json(it, true);
    j["sentence"] = it.position.sentence;
    j["token"] = it.position.token;
    batch.push_back(std::move(j));
  }
  json labels = json::object();
  for (const auto& [item_id, l] : s.labels) labels[item_id] = tag_name(l.tag);
  return {{"session_id", s.id},
          {"iteration", s.iteration},
          {"store", store},
          {"batch", batch},
          {"submitted", labels},
          {"rows", s.rows},
          {"model_digest", hex(fnv1a(serialize_checkpoint(s.params)))}};
}

std::vector<std::string> SessionManager::session_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

}  // namespace cral
