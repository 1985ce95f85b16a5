// SPDX-License-Identifier: Apache-2.0
//
// Restoration review service: sessions with ranked candidates for damaged
// positions, human confirmations, translation, persisted in SQLite.
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "hmt/checkpoint.hpp"
#include "hmt/inference.hpp"

struct sqlite3;

namespace hmt {

struct ServeConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string checkpoint;           // directory with both vocabularies
  std::string store = "sessions.db";
  std::size_t k = 10;
  DecodeOptions decode;
  std::size_t page_size = 20;
  std::size_t threads = 4;

  bool operator==(const ServeConfig&) const = default;
};

nlohmann::json to_json(const ServeConfig& config);
ServeConfig serve_config_from_json(const nlohmann::json& j);
/// HMT_SERVE_HOST, HMT_SERVE_PORT, HMT_SERVE_CHECKPOINT and HMT_SERVE_STORE
/// override the corresponding fields when set.
ServeConfig apply_env_overrides(ServeConfig config);

/// A loaded checkpoint with its tokenizers. Immutable once built.
struct ModelSnapshot {
  std::string id;
  std::filesystem::path path;
  Model model;
  Tokenizer hanja;
  Tokenizer korean;

  static std::shared_ptr<const ModelSnapshot> load(const std::filesystem::path& checkpoint);
};

/// id -> canonical JSON document. Every write is its own transaction.
class SessionStore {
 public:
  explicit SessionStore(const std::filesystem::path& path);
  ~SessionStore();
  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  /// Allocates the next sequential id ("s000001", ...).
  std::string next_id();
  void put(const std::string& id, const nlohmann::json& doc);
  std::optional<nlohmann::json> get(const std::string& id) const;
  /// Ids in creation order, optionally filtered by status.
  std::vector<std::string> ids(const std::optional<std::string>& status) const;

 private:
  sqlite3* db_ = nullptr;
  mutable std::mutex mu_;
};

struct ServiceResponse {
  ServiceResponse() = default;
  ServiceResponse(int s, nlohmann::json b) : status(s), body(std::move(b)) {}

  int status = 200;
  nlohmann::json body;
  std::string content_type = "application/json";
  std::string text;  // non-JSON payloads (exports)
};

/// Transport-independent request handling; the HTTP server and the tests
/// both go through handle().
class ReviewService {
 public:
  ReviewService(ServeConfig config, std::shared_ptr<SessionStore> store);

  /// Makes `snapshot` current for new sessions and translations. Sessions
  /// keep the checkpoint they were created with.
  void set_snapshot(std::shared_ptr<const ModelSnapshot> snapshot);
  std::shared_ptr<const ModelSnapshot> snapshot() const;

  ServiceResponse handle(const std::string& method, const std::string& path,
                         const std::map<std::string, std::string>& query, const std::string& body);

  ServiceResponse create_session(const nlohmann::json& request);
  ServiceResponse get_session(const std::string& id) const;
  ServiceResponse confirm(const std::string& id, const nlohmann::json& request);
  ServiceResponse translate(const nlohmann::json& request) const;
  ServiceResponse list_sessions(const std::map<std::string, std::string>& query) const;
  ServiceResponse export_confirmed() const;
  ServiceResponse reload(const nlohmann::json& request);

 private:
  std::shared_ptr<const ModelSnapshot> snapshot_for(const std::string& checkpoint_id) const;

  ServeConfig config_;
  std::shared_ptr<SessionStore> store_;
  mutable std::shared_mutex snapshot_mu_;
  std::shared_ptr<const ModelSnapshot> current_;
  std::map<std::string, std::shared_ptr<const ModelSnapshot>> loaded_;
  std::mutex session_mu_;
};

/// Restored text of a session document: damaged slots replaced by their
/// confirmed tokens (unconfirmed slots keep the damage mark).
std::string restored_text(const nlohmann::json& session);

/// Runs the HTTP server until stop() is called or the process ends.
class HttpServer {
 public:
  HttpServer(ReviewService& service, const ServeConfig& config);
  ~HttpServer();
  /// Binds the configured address (port 0 picks a free port); false when
  /// the address cannot be bound.
  bool bind();
  /// Binds if needed, then serves until stop().
  bool listen();
  void stop();
  int port() const { return bound_port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ServeConfig config_;
  int bound_port_ = 0;
};

}  // namespace hmt
