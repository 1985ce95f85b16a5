// SPDX-License-Identifier: Apache-2.0
#include "hmt/service.hpp"

#include <sqlite3.h>

#include <chrono>
#include <cstdlib>
#include <ctime>

#include "hmt/error.hpp"
#include "hmt/utf8.hpp"

namespace hmt {

namespace fs = std::filesystem;
using nlohmann::json;

json to_json(const ServeConfig& c) {
  return {{"host", c.host}, {"port", c.port},           {"checkpoint", c.checkpoint}, {"store", c.store},
          {"k", c.k},       {"decode", to_json(c.decode)}, {"page_size", c.page_size},  {"threads", c.threads}};
}

ServeConfig serve_config_from_json(const json& j) {
  if (!j.is_object()) throw ValueError("serve config must be an object");
  ServeConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "host") c.host = v.get<std::string>();
      else if (key == "port") c.port = v.get<int>();
      else if (key == "checkpoint") c.checkpoint = v.get<std::string>();
      else if (key == "store") c.store = v.get<std::string>();
      else if (key == "k") c.k = v.get<std::size_t>();
      else if (key == "decode") c.decode = decode_options_from_json(v);
      else if (key == "page_size") c.page_size = v.get<std::size_t>();
      else if (key == "threads") c.threads = v.get<std::size_t>();
      else throw ValueError("unknown serve key '" + key + "'");
    } catch (const json::exception& e) {
      throw ValueError("serve." + key + ": " + e.what());
    }
  }
  if (c.port < 0 || c.port > 65535) throw ValueError("serve.port out of range");
  if (c.k == 0) throw ValueError("serve.k must be positive");
  if (c.page_size == 0) throw ValueError("serve.page_size must be positive");
  if (c.threads == 0) throw ValueError("serve.threads must be positive");
  return c;
}

ServeConfig apply_env_overrides(ServeConfig c) {
  if (const char* v = std::getenv("HMT_SERVE_HOST")) c.host = v;
  if (const char* v = std::getenv("HMT_SERVE_PORT")) {
    try {
      c.port = std::stoi(v);
    } catch (const std::exception&) {
      throw ValueError(std::string("HMT_SERVE_PORT is not a number: ") + v);
    }
  }
  if (const char* v = std::getenv("HMT_SERVE_CHECKPOINT")) c.checkpoint = v;
  if (const char* v = std::getenv("HMT_SERVE_STORE")) c.store = v;
  return c;
}

std::shared_ptr<const ModelSnapshot> ModelSnapshot::load(const fs::path& checkpoint) {
  auto loaded = load_checkpoint(checkpoint);
  if (!loaded.hanja_vocab || !loaded.korean_vocab) {
    throw FormatError("checkpoint " + checkpoint.string() + " does not carry both vocabularies");
  }
  return std::make_shared<const ModelSnapshot>(ModelSnapshot{loaded.manifest.id, checkpoint, std::move(loaded.model),
                                                             Tokenizer(std::move(*loaded.hanja_vocab)),
                                                             Tokenizer(std::move(*loaded.korean_vocab))});
}

// ---------------------------------------------------------------- store

namespace {

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) fail("prepare");
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement& bind(int i, const std::string& s) {
    sqlite3_bind_text(stmt_, i, s.data(), static_cast<int>(s.size()), SQLITE_TRANSIENT);
    return *this;
  }
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc != SQLITE_DONE) fail("step");
    return false;
  }
  std::string text(int col) const {
    const auto* p = sqlite3_column_text(stmt_, col);
    return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
             : std::string();
  }
  long long integer(int col) const { return sqlite3_column_int64(stmt_, col); }

 private:
  [[noreturn]] void fail(const char* what) const {
    throw Error(std::string("session store ") + what + ": " + sqlite3_errmsg(db_));
  }
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw Error(std::string("session store: ") + msg);
  }
}

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

SessionStore::SessionStore(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (sqlite3_open(path.c_str(), &db_) != SQLITE_OK) {
    const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw Error("cannot open session store " + path.string() + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  exec(db_, "PRAGMA journal_mode=WAL; PRAGMA synchronous=FULL;");
  exec(db_,
       "CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value INTEGER NOT NULL);"
       "CREATE TABLE IF NOT EXISTS sessions (seq INTEGER PRIMARY KEY AUTOINCREMENT, id TEXT UNIQUE NOT NULL,"
       " status TEXT NOT NULL, doc TEXT NOT NULL);"
       "INSERT OR IGNORE INTO meta (key, value) VALUES ('next_session', 1);");
}

SessionStore::~SessionStore() { sqlite3_close(db_); }

std::string SessionStore::next_id() {
  std::lock_guard lock(mu_);
  exec(db_, "BEGIN IMMEDIATE");
  try {
    Statement sel(db_, "SELECT value FROM meta WHERE key = 'next_session'");
    sel.step();
    const long long n = sel.integer(0);
    Statement upd(db_, "UPDATE meta SET value = value + 1 WHERE key = 'next_session'");
    upd.step();
    exec(db_, "COMMIT");
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06lld", n);
    return buf;
  } catch (...) {
    exec(db_, "ROLLBACK");
    throw;
  }
}

void SessionStore::put(const std::string& id, const json& doc) {
  std::lock_guard lock(mu_);
  Statement st(db_,
               "INSERT INTO sessions (id, status, doc) VALUES (?1, ?2, ?3)"
               " ON CONFLICT(id) DO UPDATE SET status = excluded.status, doc = excluded.doc");
  st.bind(1, id).bind(2, doc.value("status", "")).bind(3, doc.dump());
  st.step();
}

std::optional<json> SessionStore::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  Statement st(db_, "SELECT doc FROM sessions WHERE id = ?1");
  st.bind(1, id);
  if (!st.step()) return std::nullopt;
  return json::parse(st.text(0));
}

std::vector<std::string> SessionStore::ids(const std::optional<std::string>& status) const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  if (status) {
    Statement st(db_, "SELECT id FROM sessions WHERE status = ?1 ORDER BY seq");
    st.bind(1, *status);
    while (st.step()) out.push_back(st.text(0));
  } else {
    Statement st(db_, "SELECT id FROM sessions ORDER BY seq");
    while (st.step()) out.push_back(st.text(0));
  }
  return out;
}

// ---------------------------------------------------------------- service

namespace {

ServiceResponse error(int status, const std::string& message) { return {status, {{"error", message}}}; }

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ValueError("request body must be a JSON object");
  return j;
}

template <typename T>
T field(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception&) {
    throw ValueError(std::string("field '") + key + "' has the wrong type");
  }
}

json summary(const json& doc) {
  std::size_t confirmed = 0;
  for (const auto& p : doc["positions"]) confirmed += !p["confirmed"].is_null();
  return {{"id", doc["id"]},
          {"status", doc["status"]},
          {"created", doc["created"]},
          {"positions", doc["positions"].size()},
          {"confirmed", confirmed}};
}

}  // namespace

std::string restored_text(const json& session) {
  std::vector<std::string> chars = session.at("chars").get<std::vector<std::string>>();
  for (const auto& p : session.at("positions")) {
    if (!p["confirmed"].is_null()) chars[p["position"].get<std::size_t>()] = p["confirmed"]["token"].get<std::string>();
  }
  std::string out;
  for (const auto& c : chars) out += c;
  return out;
}

ReviewService::ReviewService(ServeConfig config, std::shared_ptr<SessionStore> store)
    : config_(std::move(config)), store_(std::move(store)) {}

void ReviewService::set_snapshot(std::shared_ptr<const ModelSnapshot> snapshot) {
  std::unique_lock lock(snapshot_mu_);
  if (snapshot) loaded_[snapshot->id] = snapshot;
  current_ = std::move(snapshot);
}

std::shared_ptr<const ModelSnapshot> ReviewService::snapshot() const {
  std::shared_lock lock(snapshot_mu_);
  return current_;
}

std::shared_ptr<const ModelSnapshot> ReviewService::snapshot_for(const std::string& id) const {
  std::shared_lock lock(snapshot_mu_);
  auto it = loaded_.find(id);
  return it == loaded_.end() ? nullptr : it->second;
}

ServiceResponse ReviewService::create_session(const json& req) {
  const auto snap = snapshot();
  if (!snap) return error(503, "no model loaded");
  const std::string text = field<std::string>(req, "text", "");
  if (text.empty()) return error(422, "field 'text' is required");
  const std::size_t k = field<std::size_t>(req, "k", config_.k);
  const std::string mode_name = field<std::string>(req, "mode", "joint");
  if (mode_name != "joint" && mode_name != "refill") return error(422, "mode must be 'joint' or 'refill'");
  const RestoreMode mode = mode_name == "joint" ? RestoreMode::kJoint : RestoreMode::kRefill;

  DamagedText damaged;
  std::vector<TokenId> ids;
  try {
    damaged = parse_damaged_text(text);
    mark_damaged(damaged, field<std::vector<std::size_t>>(req, "offsets", {}));
    if (damaged.positions.empty()) return error(422, "text has no damage marks or offsets");
    if (damaged.chars.size() > snap->model.config().max_len_hanja) {
      return error(422, "text has " + std::to_string(damaged.chars.size()) + " characters; the model accepts " +
                            std::to_string(snap->model.config().max_len_hanja));
    }
    ids = encode_damaged(damaged, snap->hanja);
  } catch (const Error& e) {
    return error(422, e.what());
  }
  if (k == 0 || k > snap->hanja.vocab().size() - special::kCount) {
    return error(422, "k must lie in [1, " + std::to_string(snap->hanja.vocab().size() - special::kCount) + "]");
  }
  const auto ranked = restore_topk(snap->model, ids, k, mode);

  std::lock_guard lock(session_mu_);
  json positions = json::array();
  for (const auto& pc : ranked) {
    json cands = json::array();
    for (const auto& c : pc.candidates) {
      cands.push_back({{"token", snap->hanja.vocab().token(c.token)},
                       {"id", c.token},
                       {"logprob", c.logprob},
                       {"rank", c.rank}});
    }
    positions.push_back({{"position", pc.position}, {"candidates", cands}, {"confirmed", nullptr}});
  }
  const std::string stamp = now_iso();
  json doc = {{"id", store_->next_id()},
              {"status", "open"},
              {"created", stamp},
              {"updated", stamp},
              {"checkpoint", snap->id},
              {"text", text},
              {"chars", damaged.chars},
              {"k", k},
              {"mode", mode_name},
              {"positions", positions},
              {"restored", nullptr}};
  store_->put(doc["id"], doc);
  return {201, doc};
}

ServiceResponse ReviewService::get_session(const std::string& id) const {
  auto doc = store_->get(id);
  if (!doc) return error(404, "unknown session '" + id + "'");
  return {200, *doc};
}

ServiceResponse ReviewService::confirm(const std::string& id, const json& req) {
  std::lock_guard lock(session_mu_);
  auto found = store_->get(id);
  if (!found) return error(404, "unknown session '" + id + "'");
  json doc = std::move(*found);
  if (!req.contains("position") || !req["position"].is_number_unsigned()) {
    return error(422, "field 'position' must be a non-negative integer");
  }
  const std::size_t position = req["position"].get<std::size_t>();
  const std::string token = field<std::string>(req, "token", "");
  const bool override_token = field<bool>(req, "override", false);
  if (token.empty()) return error(422, "field 'token' is required");

  json* slot = nullptr;
  for (auto& p : doc["positions"]) {
    if (p["position"].get<std::size_t>() == position) slot = &p;
  }
  if (!slot) return error(404, "position " + std::to_string(position) + " is not a damaged position of " + id);

  std::optional<std::size_t> rank;
  for (const auto& c : (*slot)["candidates"]) {
    if (c["token"].get<std::string>() == token) rank = c["rank"].get<std::size_t>();
  }
  if (!rank && !override_token) {
    return error(409, "token '" + token + "' is not an offered candidate; set override to use it");
  }
  if (!rank) {
    try {
      if (utf8::split_chars(token).size() != 1) return error(422, "override token must be a single character");
    } catch (const Error& e) {
      return error(422, e.what());
    }
  }
  (*slot)["confirmed"] = {{"token", token}, {"override", !rank.has_value()},
                          {"rank", rank ? json(*rank) : json(nullptr)}};
  bool complete = true;
  for (const auto& p : doc["positions"]) complete = complete && !p["confirmed"].is_null();
  doc["status"] = complete ? "completed" : "open";
  doc["restored"] = complete ? json(restored_text(doc)) : json(nullptr);
  doc["updated"] = now_iso();
  store_->put(id, doc);
  return {200, doc};
}

ServiceResponse ReviewService::translate(const json& req) const {
  std::shared_ptr<const ModelSnapshot> snap;
  std::string text, source_id = "request";
  if (req.contains("session")) {
    const std::string sid = field<std::string>(req, "session", "");
    auto doc = store_->get(sid);
    if (!doc) return error(404, "unknown session '" + sid + "'");
    if ((*doc)["status"] != "completed") return error(409, "session " + sid + " still has unconfirmed positions");
    snap = snapshot_for((*doc)["checkpoint"].get<std::string>());
    if (!snap) return error(503, "checkpoint " + (*doc)["checkpoint"].get<std::string>() + " is not loaded");
    text = (*doc)["restored"].get<std::string>();
    source_id = sid;
  } else {
    snap = snapshot();
    if (!snap) return error(503, "no model loaded");
    text = field<std::string>(req, "text", "");
    if (text.empty()) return error(422, "field 'text' is required");
  }
  DecodeOptions opts = config_.decode;
  opts.beam_size = field<std::size_t>(req, "beam_size", opts.beam_size);
  opts.alpha = field<double>(req, "alpha", opts.alpha);
  opts.max_len = field<std::size_t>(req, "max_len", opts.max_len);
  TranslationRecord rec;
  try {
    opts.validate();
    if (parse_damaged_text(text).positions.size() > 0) return error(422, "text still contains damage marks");
    rec = translate_text(snap->model, snap->hanja, snap->korean, source_id, text, opts);
  } catch (const Error& e) {
    return error(422, e.what());
  }
  return {200,
          {{"source", text},
           {"hypothesis", rec.hypothesis},
           {"raw_logprob", rec.raw_logprob},
           {"score", rec.score},
           {"checkpoint", snap->id},
           {"decode", to_json(opts)}}};
}

ServiceResponse ReviewService::list_sessions(const std::map<std::string, std::string>& query) const {
  std::optional<std::string> status;
  if (auto it = query.find("status"); it != query.end() && !it->second.empty()) {
    if (it->second != "open" && it->second != "completed") return error(422, "status must be 'open' or 'completed'");
    status = it->second;
  }
  std::size_t page = 1, page_size = config_.page_size;
  try {
    if (auto it = query.find("page"); it != query.end()) page = std::stoul(it->second);
    if (auto it = query.find("page_size"); it != query.end()) page_size = std::stoul(it->second);
  } catch (const std::exception&) {
    return error(422, "page and page_size must be positive integers");
  }
  if (page == 0 || page_size == 0 || page_size > 1000) return error(422, "page and page_size must lie in [1, 1000]");
  const auto ids = store_->ids(status);
  json sessions = json::array();
  for (std::size_t i = (page - 1) * page_size; i < std::min(ids.size(), page * page_size); ++i) {
    sessions.push_back(summary(*store_->get(ids[i])));
  }
  return {200,
          {{"sessions", sessions},
           {"page", page},
           {"page_size", page_size},
           {"total", ids.size()},
           {"pages", (ids.size() + page_size - 1) / page_size}}};
}

ServiceResponse ReviewService::export_confirmed() const {
  std::string out;
  for (const auto& id : store_->ids(std::string("completed"))) {
    const auto doc = *store_->get(id);
    out += format_corpus_line({id, Side::kHanja, doc["restored"].get<std::string>(), std::nullopt, std::nullopt});
    out += '\n';
  }
  ServiceResponse r;
  r.content_type = "application/x-ndjson";
  r.text = std::move(out);
  return r;
}

ServiceResponse ReviewService::reload(const json& req) {
  const std::string path = field<std::string>(req, "checkpoint", config_.checkpoint);
  if (path.empty()) return error(422, "field 'checkpoint' is required");
  std::shared_ptr<const ModelSnapshot> snap;
  try {
    snap = ModelSnapshot::load(path);
  } catch (const NotFoundError& e) {
    return error(404, e.what());
  } catch (const Error& e) {
    return error(422, e.what());
  }
  set_snapshot(snap);
  return {200, {{"checkpoint", snap->id}, {"path", path}}};
}

ServiceResponse ReviewService::handle(const std::string& method, const std::string& path,
                                      const std::map<std::string, std::string>& query, const std::string& body) {
  try {
    std::vector<std::string> parts;
    for (std::size_t i = 0; i < path.size();) {
      const std::size_t j = path.find('/', i);
      const std::string part = path.substr(i, j == std::string::npos ? std::string::npos : j - i);
      if (!part.empty()) parts.push_back(part);
      if (j == std::string::npos) break;
      i = j + 1;
    }
    if (parts.size() == 1 && parts[0] == "health" && method == "GET") {
      const auto snap = snapshot();
      return {200, {{"status", "ok"}, {"checkpoint", snap ? json(snap->id) : json(nullptr)}}};
    }
    if (parts.size() == 1 && parts[0] == "sessions") {
      if (method == "POST") return create_session(parse_body(body));
      if (method == "GET") return list_sessions(query);
    }
    if (parts.size() == 2 && parts[0] == "sessions" && method == "GET") {
      if (parts[1] == "export") return export_confirmed();
      return get_session(parts[1]);
    }
    if (parts.size() == 3 && parts[0] == "sessions" && parts[2] == "confirm" && method == "POST") {
      return confirm(parts[1], parse_body(body));
    }
    if (parts.size() == 1 && parts[0] == "translate" && method == "POST") return translate(parse_body(body));
    if (parts.size() == 2 && parts[0] == "admin" && parts[1] == "reload" && method == "POST") {
      return reload(parse_body(body));
    }
    return error(404, "no route for " + method + " " + path);
  } catch (const ValueError& e) {
    return error(422, e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

}  // namespace hmt
