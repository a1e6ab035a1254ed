#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <string>
#include <tuple>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "scl/dataset.hpp"
#include "scl/model.hpp"

namespace scl {

// Append-only JSON-Lines annotation log with a single serialized writer.
// Every append is written and fsync'ed before append() returns, so a record
// that was acknowledged survives a crash. A torn final line (an append that
// never completed) is cut off when the log is reopened.
class AnnotationLog {
 public:
  explicit AnnotationLog(std::filesystem::path path);
  ~AnnotationLog();
  AnnotationLog(const AnnotationLog&) = delete;
  AnnotationLog& operator=(const AnnotationLog&) = delete;

  struct AppendResult {
    std::string record_id;
    bool duplicate = false;
  };
  // `record` must carry a string "record_id". Duplicate ids are not written.
  // `on_commit` runs under the writer lock after a successful write.
  AppendResult append(const nlohmann::json& record,
                      const std::function<void(const nlohmann::json&)>& on_commit = {});

  std::vector<nlohmann::json> records() const;
  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  mutable std::mutex mutex_;
  std::unordered_set<std::string> ids_;
  std::vector<nlohmann::json> records_;
};

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 binds any free port
  std::filesystem::path models_dir;
  std::filesystem::path stimuli_dir;
  std::filesystem::path log_path = "annotations.jsonl";
  std::string cors_origin = "*";
};

struct HttpResult {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

// Elicitation backend: stimuli, models, sessions, annotations and live
// interventions. Handlers are transport-independent; serve() exposes them
// over HTTP.
//
//   POST /api/sessions               create a session with a fixed schedule
//   GET  /api/session/{sid}/next     next unannotated (stimulus, group) pair
//   POST /api/annotations            record one soft group annotation
//   POST /api/intervene              before/after prediction for given masses
//   GET  /api/stimuli                stimulus ids
//   GET  /api/stimuli/{id}/image     PNG rendering of a stimulus
//   GET  /api/models                 model ids and training provenance
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();

  HttpResult create_session(const std::string& body);
  HttpResult next_stimulus(const std::string& session_id) const;
  HttpResult post_annotation(const std::string& body);
  HttpResult intervene(const std::string& body) const;
  HttpResult stimulus_image(const std::string& stimulus_id) const;
  HttpResult list_stimuli() const;
  HttpResult list_models() const;

  // Binds the listening socket and returns the port.
  int bind();
  // Serves until stop(); bind() must have succeeded.
  void listen();
  void stop();

  const ConceptDataset& stimuli() const { return stimuli_; }
  const ConceptModel& model(const std::string& id) const;
  const AnnotationLog& log() const { return *log_; }

 private:
  struct Session {
    std::string id;
    std::string annotator_id;
    std::vector<std::pair<std::string, std::string>> schedule;  // (stimulus, group)
  };
  struct LoadedModel {
    ConceptModel model;
    ConceptGroupSchema schema;
  };

  std::size_t stimulus_index(const std::string& id) const;
  void load_sessions();

  ServiceOptions options_;
  ConceptDataset stimuli_;
  std::map<std::string, LoadedModel> models_;
  std::unique_ptr<AnnotationLog> log_;

  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, Session> sessions_;
  std::set<std::tuple<std::string, std::string, std::string>> done_;  // (session, stimulus, group)
  std::mutex session_file_mutex_;

  struct Http;
  std::unique_ptr<Http> http_;
};

}  // namespace scl
