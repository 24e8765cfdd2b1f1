#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cral/error.h"
#include "cral/loop.h"

namespace cral {

inline constexpr int kSessionSchemaVersion = 1;

// A request-level failure with an HTTP status and a machine-readable code.
class ServiceError : public Error {
 public:
  ServiceError(int status, std::string code, const std::string& message,
               nlohmann::json details = nlohmann::json::object())
      : Error(message), status_(status), code_(std::move(code)), details_(std::move(details)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }
  const nlohmann::json& details() const { return details_; }
  nlohmann::json body() const;

 private:
  int status_;
  std::string code_;
  nlohmann::json details_;
};

struct ServiceConfig {
  std::filesystem::path log_dir;
  // Defaults for create requests that leave them out.
  std::string pool_path, model_path, test_path, dev_path;
  // Strategy, batch size, seed and fine-tuning settings for new sessions.
  LoopConfig loop;
};

struct AnnotationItem {
  std::string item_id;
  Position position;  // in the language-tagged pool
  std::string sentence_id;
  std::vector<std::string> surfaces;  // boundary tokens left out
  std::size_t highlight_index = 0;    // into surfaces
  std::string type_key;
  std::vector<std::string> suggestion;  // top-2 model tags
};

struct SubmittedLabel {
  TagId tag = 0;
  std::int64_t elapsed_ms = 0;
  std::string annotator_id;
};

// Live annotation sessions persisted as <log_dir>/<id>/manifest.json plus an
// append-only log.ndjson. A session's state is a fold over those two files;
// per-advance checkpoints only save recomputation during replay. Pools are
// stripped of gold tags on load.
class SessionManager {
 public:
  explicit SessionManager(ServiceConfig config);
  ~SessionManager();

  // Replays every session found under the log directory. Returns the ids
  // restored; sessions that fail to replay are reported in `failures`.
  std::vector<std::string> restore(std::vector<std::string>* failures = nullptr);

  nlohmann::json create_session(const nlohmann::json& request);
  nlohmann::json batch(const std::string& id);
  nlohmann::json submit(const std::string& id, const nlohmann::json& request);
  nlohmann::json advance(const std::string& id);
  nlohmann::json metrics(const std::string& id);
  std::string export_conllu(const std::string& id);

  // Store, iteration, open batch, submitted labels and a model digest; equal
  // snapshots mean equal session state.
  nlohmann::json snapshot(const std::string& id);
  std::vector<std::string> session_ids() const;

  const ServiceConfig& config() const { return config_; }

 private:
  struct Session;
  Session& find(const std::string& id);
  std::unique_ptr<Session> open_session(const std::string& id, const nlohmann::json& manifest);
  void replay(Session& s);

  ServiceConfig config_;
  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  int next_id_ = 1;
};

nlohmann::json item_to_json(const AnnotationItem& item, bool with_suggestion);

}  // namespace cral
