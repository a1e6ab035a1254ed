#include "scl/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include <httplib.h>

#include "scl/errors.hpp"
#include "scl/png.hpp"
#include "scl/soft_labels.hpp"

namespace scl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
  return out;
}

HttpResult json_result(int status, const json& body) {
  return {status, "application/json", body.dump()};
}

HttpResult error_result(int status, const std::string& kind, const std::string& message,
                        const std::string& field = {}) {
  json body = {{"error", kind}, {"message", message}};
  if (!field.empty()) body["field"] = field;
  return json_result(status, body);
}

// The field named in a validation message such as "field 'mass.x' must ...".
std::string field_of(const std::string& message) {
  static const std::regex quoted("field '([^']+)'");
  std::smatch m;
  if (std::regex_search(message, m, quoted)) return m[1];
  return {};
}

std::string id_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return std::to_string(v.get<long long>());
  throw DataError("field must be a string or integer id");
}

void write_all(int fd, const std::string& data, const fs::path& path) {
  std::size_t done = 0;
  while (done < data.size()) {
    const auto n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw StateError("write to " + path.string() + " failed");
    }
    done += static_cast<std::size_t>(n);
  }
}

}  // namespace

// ---- AnnotationLog -----------------------------------------------------------

AnnotationLog::AnnotationLog(fs::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  std::string content;
  if (fs::exists(path_)) {
    std::ifstream in(path_, std::ios::binary);
    content.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto last_newline = content.rfind('\n');
  const std::size_t complete = last_newline == std::string::npos ? 0 : last_newline + 1;
  if (complete != content.size()) {
    // An append that never finished: it was never acknowledged.
    fs::resize_file(path_, complete);
    content.resize(complete);
  }
  std::istringstream lines(content);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw FormatError(path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    ids_.insert(rec.value("record_id", std::string()));
    records_.push_back(std::move(rec));
  }
  fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw NotFoundError("cannot open annotation log " + path_.string());
}

AnnotationLog::~AnnotationLog() {
  if (fd_ >= 0) ::close(fd_);
}

AnnotationLog::AppendResult AnnotationLog::append(const json& record,
                                                  const std::function<void(const json&)>& on_commit) {
  if (!record.contains("record_id") || !record["record_id"].is_string()) {
    throw DataError("log record needs a string 'record_id'");
  }
  const auto id = record["record_id"].get<std::string>();
  std::lock_guard lock(mutex_);
  if (ids_.contains(id)) return {id, true};
  write_all(fd_, record.dump() + "\n", path_);
  if (::fsync(fd_) != 0) throw StateError("fsync of " + path_.string() + " failed");
  ids_.insert(id);
  records_.push_back(record);
  if (on_commit) on_commit(record);
  return {id, false};
}

std::vector<json> AnnotationLog::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t AnnotationLog::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

// ---- Service -----------------------------------------------------------------

struct Service::Http {
  httplib::Server server;
};

Service::Service(ServiceOptions options) : options_(std::move(options)) {
  if (options_.stimuli_dir.empty()) throw ConfigError("service needs a stimuli directory");
  stimuli_ = load_dataset(options_.stimuli_dir);

  if (!options_.models_dir.empty()) {
    if (!fs::is_directory(options_.models_dir)) {
      throw NotFoundError("models directory " + options_.models_dir.string() + " does not exist");
    }
    for (const auto& entry : fs::directory_iterator(options_.models_dir)) {
      if (entry.path().extension() != ".scl") continue;
      LoadedModel lm{ConceptModel::load(entry.path()), {}};
      if (lm.model.provenance.contains("schema")) {
        lm.schema = ConceptGroupSchema::from_json(lm.model.provenance["schema"]);
      } else if (stimuli_.concept_count() == lm.model.k()) {
        lm.schema = stimuli_.schema;
      } else {
        lm.schema = ConceptGroupSchema::binary(lm.model.k());
      }
      models_.emplace(entry.path().stem().string(), std::move(lm));
    }
  }

  log_ = std::make_unique<AnnotationLog>(options_.log_path);
  for (const auto& rec : log_->records()) {
    if (rec.contains("session_id") && rec["session_id"].is_string()) {
      const auto& a = rec["annotation"];
      done_.insert({rec["session_id"].get<std::string>(), a.value("stimulus_id", std::string()),
                    a.value("group_id", std::string())});
    }
  }
  load_sessions();
}

Service::~Service() { stop(); }

const ConceptModel& Service::model(const std::string& id) const {
  auto it = models_.find(id);
  if (it == models_.end()) throw NotFoundError("unknown model '" + id + "'");
  return it->second.model;
}

std::size_t Service::stimulus_index(const std::string& id) const {
  std::size_t pos = 0;
  std::size_t idx = 0;
  try {
    idx = std::stoul(id, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != id.size() || id.empty() || idx >= stimuli_.size()) {
    throw NotFoundError("unknown stimulus '" + id + "'");
  }
  return idx;
}

void Service::load_sessions() {
  const fs::path path = options_.log_path.string() + ".sessions.jsonl";
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      continue;  // torn final line of an unacknowledged creation
    }
    Session s{j.at("session_id"), j.value("annotator_id", std::string()), {}};
    for (const auto& item : j.at("schedule")) s.schedule.emplace_back(item.at(0), item.at(1));
    sessions_[s.id] = std::move(s);
  }
}

HttpResult Service::create_session(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    return error_result(400, "malformed_json", e.what());
  }
  if (!j.is_object()) return error_result(422, "validation", "payload must be an object");
  if (!j.contains("annotator_id") || !j["annotator_id"].is_string()) {
    return error_result(422, "validation", "field 'annotator_id' must be a string", "annotator_id");
  }
  std::vector<std::string> stimuli, groups;
  try {
    if (j.contains("stimuli")) {
      for (const auto& s : j["stimuli"]) {
        const auto id = id_string(s);
        stimulus_index(id);
        stimuli.push_back(id);
      }
    } else {
      for (std::size_t i = 0; i < stimuli_.size(); ++i) stimuli.push_back(std::to_string(i));
    }
    if (j.contains("groups")) {
      for (const auto& g : j["groups"]) {
        const auto name = g.get<std::string>();
        stimuli_.schema.group_index(name);
        groups.push_back(name);
      }
    } else {
      for (const auto& g : stimuli_.schema.groups()) groups.push_back(g.name);
    }
  } catch (const Error& e) {
    return error_result(422, "validation", e.what(), "stimuli");
  } catch (const json::exception& e) {
    return error_result(422, "validation", e.what(), "groups");
  }

  std::random_device rd;
  std::ostringstream sid;
  sid << "s" << std::hex << ((static_cast<std::uint64_t>(rd()) << 32) | rd());
  Session s{sid.str(), j["annotator_id"].get<std::string>(), {}};
  json schedule = json::array();
  for (const auto& st : stimuli) {
    for (const auto& g : groups) {
      s.schedule.emplace_back(st, g);
      schedule.push_back(json::array({st, g}));
    }
  }
  json record = {{"session_id", s.id}, {"annotator_id", s.annotator_id},
                 {"schedule", schedule}, {"created_at", utc_now()}};
  {
    std::lock_guard file_lock(session_file_mutex_);
    const fs::path path = options_.log_path.string() + ".sessions.jsonl";
    const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) return error_result(500, "state", "cannot open session store");
    write_all(fd, record.dump() + "\n", path);
    ::fsync(fd);
    ::close(fd);
  }
  const auto total = s.schedule.size();
  {
    std::unique_lock lock(sessions_mutex_);
    sessions_[s.id] = std::move(s);
  }
  return json_result(200, {{"session_id", record["session_id"]}, {"total", total}});
}

HttpResult Service::next_stimulus(const std::string& session_id) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return error_result(404, "not_found", "unknown session '" + session_id + "'");
  const auto& s = it->second;
  for (std::size_t i = 0; i < s.schedule.size(); ++i) {
    const auto& [stim, group] = s.schedule[i];
    if (done_.contains({s.id, stim, group})) continue;
    const auto g = stimuli_.schema.group_index(group);
    json default_mass = json::object();
    for (const auto& a : stimuli_.schema.groups()[g].attributes) default_mass[a] = 50;
    return json_result(200, {{"done", false},
                             {"session_id", s.id},
                             {"index", i},
                             {"total", s.schedule.size()},
                             {"stimulus_id", stim},
                             {"image_url", "/api/stimuli/" + stim + "/image"},
                             {"group_id", group},
                             {"attributes", stimuli_.schema.groups()[g].attributes},
                             {"default_mass", default_mass}});
  }
  return json_result(200, {{"done", true}, {"session_id", s.id}, {"total", s.schedule.size()}});
}

HttpResult Service::post_annotation(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    return error_result(400, "malformed_json", e.what());
  }
  if (!j.is_object()) return error_result(422, "validation", "payload must be an object");
  if (!j.contains("uuid") || !j["uuid"].is_string() || j["uuid"].get<std::string>().empty()) {
    return error_result(422, "validation", "field 'uuid' must be a non-empty string", "uuid");
  }
  SoftGroupAnnotation a;
  try {
    a = SoftGroupAnnotation::from_json(j);
  } catch (const DataError& e) {
    return error_result(422, "validation", e.what(), field_of(e.what()));
  }
  try {
    stimulus_index(a.stimulus_id);
  } catch (const NotFoundError& e) {
    return error_result(422, "validation", e.what(), "stimulus_id");
  }
  std::size_t group = 0;
  try {
    group = stimuli_.schema.group_index(a.group_id);
  } catch (const NotFoundError& e) {
    return error_result(422, "validation", e.what(), "group_id");
  }
  const auto& attrs = stimuli_.schema.groups()[group].attributes;
  for (const auto& [attr, _] : a.mass) {
    if (std::find(attrs.begin(), attrs.end(), attr) == attrs.end()) {
      return error_result(422, "validation", "unknown attribute '" + attr + "' in group '" + a.group_id + "'",
                          "mass." + attr);
    }
  }
  std::string session_id;
  if (j.contains("session_id")) {
    if (!j["session_id"].is_string()) {
      return error_result(422, "validation", "field 'session_id' must be a string", "session_id");
    }
    session_id = j["session_id"].get<std::string>();
    std::shared_lock lock(sessions_mutex_);
    if (!sessions_.contains(session_id)) {
      return error_result(422, "validation", "unknown session '" + session_id + "'", "session_id");
    }
  }

  json record = {{"record_id", j["uuid"]}, {"received_at", utc_now()}, {"annotation", a.to_json()}};
  if (!session_id.empty()) record["session_id"] = session_id;
  auto result = log_->append(record, [&](const json& rec) {
    if (!rec.contains("session_id")) return;
    std::unique_lock lock(sessions_mutex_);
    done_.insert({session_id, a.stimulus_id, a.group_id});
  });
  const int total = a.total_mass();
  json response = {{"record_id", result.record_id},
                   {"duplicate", result.duplicate},
                   {"total_mass", total},
                   {"over_assigned", total > 100}};
  if (total > 100) response["warning"] = "total mass " + std::to_string(total) + " exceeds 100";
  return json_result(200, response);
}

HttpResult Service::intervene(const std::string& body) const {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    return error_result(400, "malformed_json", e.what());
  }
  if (!j.is_object()) return error_result(422, "validation", "payload must be an object");
  std::string model_id, sample_id;
  try {
    model_id = id_string(j.at("model_id"));
  } catch (const std::exception&) {
    return error_result(422, "validation", "field 'model_id' is required", "model_id");
  }
  try {
    sample_id = id_string(j.at("sample_id"));
  } catch (const std::exception&) {
    return error_result(422, "validation", "field 'sample_id' is required", "sample_id");
  }
  auto mit = models_.find(model_id);
  if (mit == models_.end()) return error_result(404, "not_found", "unknown model '" + model_id + "'");
  std::size_t row = 0;
  try {
    row = stimulus_index(sample_id);
  } catch (const NotFoundError& e) {
    return error_result(404, "not_found", e.what());
  }
  const auto& model = mit->second.model;
  const auto& schema = mit->second.schema;
  if (stimuli_.sample_shape != model.config().input_shape) {
    return error_result(422, "validation", "sample '" + sample_id + "' does not fit model '" + model_id + "'",
                        "sample_id");
  }

  std::map<std::size_t, double> interventions;
  json applied = json::object();
  const std::string group = j.contains("group") && j["group"].is_string() ? j["group"].get<std::string>() : "";
  if (j.contains("masses")) {
    if (!j["masses"].is_object()) return error_result(422, "validation", "field 'masses' must be an object", "masses");
    for (const auto& [key, v] : j["masses"].items()) {
      const std::string field = "masses." + key;
      if (!v.is_number_integer() && !v.is_number_unsigned()) {
        return error_result(422, "validation", "field '" + field + "' must be an integer in [0, 100]", field);
      }
      const auto m = v.get<long long>();
      if (m < 0 || m > 100) {
        return error_result(422, "validation", "field '" + field + "' must be an integer in [0, 100]", field);
      }
      std::size_t concept_index = 0;
      try {
        concept_index = group.empty() ? schema.concept_index(key) : schema.concept_index(group, key);
      } catch (const Error& e) {
        return error_result(422, "validation", e.what(), field);
      }
      interventions[concept_index] = static_cast<double>(m) / 100.0;
      applied[schema.concept_name(concept_index)] = interventions[concept_index];
    }
  }

  const auto before = model.predict_one(stimuli_.input(row));
  const auto after = model.predict_one(stimuli_.input(row), interventions);
  auto side = [](const Prediction& p) {
    return json{{"class_probs", p.class_probs}, {"predicted", p.predicted[0]}, {"concept_probs", p.concept_probs}};
  };
  return json_result(200, {{"model_id", model_id},
                           {"sample_id", sample_id},
                           {"applied", applied},
                           {"before", side(before)},
                           {"after", side(after)}});
}

HttpResult Service::stimulus_image(const std::string& stimulus_id) const {
  std::size_t row = 0;
  try {
    row = stimulus_index(stimulus_id);
  } catch (const NotFoundError& e) {
    return error_result(404, "not_found", e.what());
  }
  const auto img = render_sample(stimuli_.sample_shape, stimuli_.input(row));
  return {200, "image/png", encode_png_gray(img.width, img.height, img.pixels)};
}

HttpResult Service::list_stimuli() const {
  json ids = json::array();
  for (std::size_t i = 0; i < stimuli_.size(); ++i) ids.push_back(std::to_string(i));
  return json_result(200, {{"stimuli", ids}, {"schema", stimuli_.schema.to_json()}});
}

HttpResult Service::list_models() const {
  json list = json::array();
  for (const auto& [id, lm] : models_) {
    const auto& prov = lm.model.provenance;
    list.push_back({{"id", id},
                    {"variant", to_string(lm.model.config().variant)},
                    {"k", lm.model.k()},
                    {"n_classes", lm.model.n_classes()},
                    {"delta", prov.value("delta", json(nullptr))},
                    {"rho", prov.value("rho", json(nullptr))},
                    {"provenance", prov}});
  }
  return json_result(200, {{"models", list}});
}

int Service::bind() {
  if (!http_) http_ = std::make_unique<Http>();
  auto& srv = http_->server;
  const auto origin = options_.cors_origin;
  srv.set_default_headers({{"Access-Control-Allow-Origin", origin},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
  auto reply = [](httplib::Response& res, const HttpResult& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  srv.Post("/api/sessions", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, create_session(req.body));
  });
  srv.Get(R"(/api/session/([^/]+)/next)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, next_stimulus(req.matches[1]));
  });
  srv.Post("/api/annotations", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, post_annotation(req.body));
  });
  srv.Post("/api/intervene", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, intervene(req.body));
  });
  srv.Get("/api/stimuli", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, list_stimuli());
  });
  srv.Get(R"(/api/stimuli/([^/]+)/image)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, stimulus_image(req.matches[1]));
  });
  srv.Get("/api/models", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, list_models());
  });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(json{{"error", "internal"}, {"message", msg}}.dump(), "application/json");
  });

  int port = options_.port;
  if (port == 0) {
    port = srv.bind_to_any_port(options_.host);
  } else if (!srv.bind_to_port(options_.host, port)) {
    port = -1;
  }
  if (port < 0) throw StateError("cannot bind " + options_.host + ":" + std::to_string(options_.port));
  return port;
}

void Service::listen() {
  if (!http_) throw StateError("bind() must precede listen()");
  http_->server.listen_after_bind();
}

void Service::stop() {
  if (http_) http_->server.stop();
}

}  // namespace scl
