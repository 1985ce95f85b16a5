// Review service: sessions, confirmations, translation and persistence.
#include <httplib.h>

#include <filesystem>
#include <thread>

#include "doctest.h"
#include "hmt/error.hpp"
#include "hmt/service.hpp"

using namespace hmt;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kChars[] = {"天", "地", "玄", "黃", "宇", "宙", "洪", "荒", "日", "月", "盈", "昃",
                              "辰", "宿", "列", "張", "寒", "來", "暑", "往"};

struct Fixture {
  fs::path dir;
  fs::path checkpoint_a, checkpoint_b;

  Fixture() {
    dir = fs::temp_directory_path() / ("hmt_service_" + std::to_string(std::rand()));
    fs::create_directories(dir);
    Vocab h(Side::kHanja), k(Side::kKorean);
    for (const char* c : kChars) h.add(c);
    for (const char* p : {"▁하늘", "▁땅", "▁검", "▁누", "▁르", "▁다", "▁해", "▁달"}) k.add(p, -2.0);
    ModelConfig c;
    c.d_emb = 8;
    c.d_model = 16;
    c.d_ffn = 16;
    c.n_heads = 2;
    c.layers_shared = 1;
    c.layers_restore = 1;
    c.layers_decoder = 1;
    c.max_len_hanja = 12;
    c.max_len_korean = 10;
    c.vocab_hanja = h.size();
    c.vocab_korean = k.size();
    c.dropout = 0.0;
    checkpoint_a = dir / "a";
    checkpoint_b = dir / "b";
    Model ma(c, 1), mb(c, 2);
    save_checkpoint(checkpoint_a, {&ma, nullptr, &h, &k, 1, {}, {}});
    save_checkpoint(checkpoint_b, {&mb, nullptr, &h, &k, 2, {}, {}});
  }
  ~Fixture() { fs::remove_all(dir); }

  std::unique_ptr<ReviewService> service(bool with_model = true, const char* db = "store.db") const {
    ServeConfig cfg;
    cfg.store = (dir / db).string();
    auto s = std::make_unique<ReviewService>(cfg, std::make_shared<SessionStore>(cfg.store));
    if (with_model) s->set_snapshot(ModelSnapshot::load(checkpoint_a));
    return s;
  }
};

json post(ReviewService& s, const std::string& path, const json& body, int expect) {
  const auto r = s.handle("POST", path, {}, body.dump());
  CHECK_MESSAGE(r.status == expect, r.body.dump());
  return r.body;
}

}  // namespace

TEST_CASE("create, fetch and confirm a session") {
  Fixture f;
  auto s = f.service();
  const json created = post(*s, "/sessions", {{"text", "天□玄[MASK]宇宙"}, {"k", 10}}, 201);
  REQUIRE(created["positions"].size() == 2);
  CHECK(created["positions"][0]["position"] == 1);
  CHECK(created["positions"][1]["position"] == 3);
  for (const auto& p : created["positions"]) {
    REQUIRE(p["candidates"].size() == 10);
    for (std::size_t r = 0; r < 10; ++r) CHECK(p["candidates"][r]["rank"] == r + 1);
  }
  CHECK(created["status"] == "open");
  const std::string id = created["id"];
  CHECK(id == "s000001");

  const auto fetched = s->handle("GET", "/sessions/" + id, {}, "");
  CHECK(fetched.status == 200);
  CHECK(fetched.body.dump() == created.dump());

  const std::string first = created["positions"][0]["candidates"][0]["token"];
  const std::string second = created["positions"][1]["candidates"][0]["token"];
  auto after_one = post(*s, "/sessions/" + id + "/confirm", {{"position", 1}, {"token", first}}, 200);
  CHECK(after_one["status"] == "open");
  CHECK(after_one["restored"].is_null());
  auto done = post(*s, "/sessions/" + id + "/confirm", {{"position", 3}, {"token", second}}, 200);
  CHECK(done["status"] == "completed");
  CHECK(done["restored"] == "天" + first + "玄" + second + "宇宙");
  CHECK(done["positions"][1]["confirmed"]["rank"] == 1);
}

TEST_CASE("session errors") {
  Fixture f;
  auto s = f.service();
  post(*s, "/sessions", {{"text", "天地玄黃"}}, 422);
  post(*s, "/sessions", json::object(), 422);
  post(*s, "/sessions", {{"text", "天地玄黃"}, {"offsets", {9}}}, 422);
  post(*s, "/sessions", {{"text", "天□"}, {"k", 21}}, 422);
  post(*s, "/sessions", {{"text", "天□天□天□天□天□天□天"}}, 422);
  auto no_model = f.service(false, "empty.db");
  post(*no_model, "/sessions", {{"text", "天□"}}, 503);
  post(*no_model, "/translate", {{"text", "天地"}}, 503);

  // Offsets mark extra slots without inline marks.
  const json created = post(*s, "/sessions", {{"text", "天地玄黃"}, {"offsets", {0, 2}}, {"k", 3}}, 201);
  const std::string id = created["id"];
  CHECK(created["positions"].size() == 2);
  CHECK(created["chars"][0] == "□");

  post(*s, "/sessions/nope/confirm", {{"position", 0}, {"token", "天"}}, 404);
  CHECK(s->handle("GET", "/sessions/nope", {}, "").status == 404);
  post(*s, "/sessions/" + id + "/confirm", {{"position", 1}, {"token", "天"}}, 404);

  // A token outside the offered candidates needs the override flag.
  std::string outside;
  for (const char* c : kChars) {
    bool offered = false;
    for (const auto& cand : created["positions"][0]["candidates"]) offered = offered || cand["token"] == c;
    if (!offered) {
      outside = c;
      break;
    }
  }
  post(*s, "/sessions/" + id + "/confirm", {{"position", 0}, {"token", outside}}, 409);
  auto overridden = post(*s, "/sessions/" + id + "/confirm", {{"position", 0}, {"token", outside}, {"override", true}}, 200);
  CHECK(overridden["positions"][0]["confirmed"]["override"] == true);
  CHECK(overridden["positions"][0]["confirmed"]["rank"].is_null());
  post(*s, "/sessions/" + id + "/confirm", {{"position", 2}, {"token", "天地"}, {"override", true}}, 422);
  CHECK(s->handle("POST", "/sessions", {}, "{not json").status == 422);
  CHECK(s->handle("DELETE", "/sessions", {}, "").status == 404);
}

TEST_CASE("sessions survive a restart") {
  Fixture f;
  std::string id, token;
  json created;
  {
    auto s = f.service();
    created = post(*s, "/sessions", {{"text", "□地玄□"}}, 201);
    id = created["id"];
  }
  auto s = f.service();
  CHECK(s->handle("GET", "/sessions/" + id, {}, "").body.dump() == created.dump());
  for (int i = 0; i < 2; ++i) {
    const auto& p = created["positions"][i];
    post(*s, "/sessions/" + id + "/confirm", {{"position", p["position"]}, {"token", p["candidates"][0]["token"]}}, 200);
  }
  // A second session gets the next id after the restart.
  CHECK(post(*s, "/sessions", {{"text", "天□"}}, 201)["id"] == "s000002");
}

TEST_CASE("concurrent confirmations to different positions both land") {
  Fixture f;
  auto s = f.service();
  const json created = post(*s, "/sessions", {{"text", "□□玄黃"}, {"k", 4}}, 201);
  const std::string id = created["id"];
  std::thread a([&] {
    s->handle("POST", "/sessions/" + id + "/confirm", {},
              json{{"position", 0}, {"token", created["positions"][0]["candidates"][1]["token"]}}.dump());
  });
  std::thread b([&] {
    s->handle("POST", "/sessions/" + id + "/confirm", {},
              json{{"position", 1}, {"token", created["positions"][1]["candidates"][2]["token"]}}.dump());
  });
  a.join();
  b.join();
  const auto doc = s->handle("GET", "/sessions/" + id, {}, "").body;
  CHECK(doc["status"] == "completed");
  CHECK(doc["positions"][0]["confirmed"]["rank"] == 2);
  CHECK(doc["positions"][1]["confirmed"]["rank"] == 3);
}

TEST_CASE("translation matches the library") {
  Fixture f;
  auto s = f.service();
  const auto snap = s->snapshot();
  for (std::size_t beam : {1u, 3u}) {
    const json body = post(*s, "/translate", {{"text", "天地玄黃"}, {"beam_size", beam}}, 200);
    DecodeOptions o;
    o.beam_size = beam;
    const auto lib = translate_text(snap->model, snap->hanja, snap->korean, "x", "天地玄黃", o);
    CHECK(body["hypothesis"] == lib.hypothesis);
    CHECK(body["raw_logprob"] == lib.raw_logprob);
    CHECK(body["score"] == lib.score);
    CHECK(body["checkpoint"] == snap->id);
    CHECK(post(*s, "/translate", {{"text", "天地玄黃"}, {"beam_size", beam}}, 200).dump() == body.dump());
  }
  const auto greedy = greedy_decode(snap->model, snap->hanja.encode("天地玄黃"), 10, 0.6);
  CHECK(post(*s, "/translate", {{"text", "天地玄黃"}, {"beam_size", 1}}, 200)["raw_logprob"] == greedy.raw_logprob);
  post(*s, "/translate", {{"text", "天□"}}, 422);
  post(*s, "/translate", {{"text", "天地玄黃天地玄黃天地玄黃天"}}, 422);
  post(*s, "/translate", {{"text", "天地"}, {"beam_size", 0}}, 422);
  post(*s, "/translate", json::object(), 422);
}

TEST_CASE("restored sessions translate through the pinned checkpoint") {
  Fixture f;
  auto s = f.service();
  const json created = post(*s, "/sessions", {{"text", "天□玄黃"}, {"k", 2}}, 201);
  const std::string id = created["id"];
  post(*s, "/translate", {{"session", id}}, 409);
  const auto done = post(*s, "/sessions/" + id + "/confirm",
                         {{"position", 1}, {"token", created["positions"][0]["candidates"][0]["token"]}}, 200);
  const json direct = post(*s, "/translate", {{"text", done["restored"]}}, 200);

  // Loading another checkpoint changes direct translation, not the session's.
  post(*s, "/admin/reload", {{"checkpoint", f.checkpoint_b.string()}}, 200);
  const json via_session = post(*s, "/translate", {{"session", id}}, 200);
  CHECK(via_session["hypothesis"] == direct["hypothesis"]);
  CHECK(via_session["checkpoint"] == created["checkpoint"]);
  CHECK(post(*s, "/translate", {{"text", done["restored"]}}, 200)["checkpoint"] != created["checkpoint"]);
  CHECK(s->handle("GET", "/sessions/" + id, {}, "").body["checkpoint"] == created["checkpoint"]);
  post(*s, "/admin/reload", {{"checkpoint", (f.dir / "missing").string()}}, 404);
}

TEST_CASE("listing, pagination and export") {
  Fixture f;
  auto s = f.service();
  auto list = [&](std::map<std::string, std::string> q) { return s->handle("GET", "/sessions", q, "").body; };
  CHECK(list({})["sessions"].empty());
  CHECK(list({})["total"] == 0);
  std::vector<json> made;
  for (int i = 0; i < 5; ++i) made.push_back(post(*s, "/sessions", {{"text", "天地□"}, {"k", 2}}, 201));
  const std::string first = made[0]["id"];
  post(*s, "/sessions/" + first + "/confirm", {{"position", 2}, {"token", made[0]["positions"][0]["candidates"][0]["token"]}},
       200);
  const auto completed = list({{"status", "completed"}});
  REQUIRE(completed["sessions"].size() == 1);
  CHECK(completed["sessions"][0]["id"] == first);
  CHECK(completed["sessions"][0]["confirmed"] == 1);
  CHECK(list({{"status", "open"}})["total"] == 4);
  std::vector<std::size_t> sizes;
  for (int page = 1; page <= 3; ++page) {
    sizes.push_back(list({{"page", std::to_string(page)}, {"page_size", "2"}})["sessions"].size());
  }
  CHECK(sizes == std::vector<std::size_t>{2, 2, 1});
  CHECK(list({{"page_size", "2"}})["pages"] == 3);
  CHECK(s->handle("GET", "/sessions", {{"page", "0"}}, "").status == 422);
  CHECK(s->handle("GET", "/sessions", {{"status", "bogus"}}, "").status == 422);

  const auto exported = s->handle("GET", "/sessions/export", {}, "");
  CHECK(exported.content_type == "application/x-ndjson");
  const auto record = parse_corpus_line(exported.text.substr(0, exported.text.find('\n')));
  CHECK(record.id == first);
  CHECK(record.text == s->handle("GET", "/sessions/" + first, {}, "").body["restored"]);
  CHECK(record.side == Side::kHanja);
}

TEST_CASE("serve config") {
  ServeConfig c;
  c.port = 9000;
  CHECK(serve_config_from_json(to_json(c)) == c);
  CHECK_THROWS_AS(serve_config_from_json({{"listen", "x"}}), ValueError);
  CHECK_THROWS_AS(serve_config_from_json({{"port", 70000}}), ValueError);
  setenv("HMT_SERVE_PORT", "9123", 1);
  setenv("HMT_SERVE_STORE", "/tmp/x.db", 1);
  const auto o = apply_env_overrides(c);
  CHECK(o.port == 9123);
  CHECK(o.store == "/tmp/x.db");
  unsetenv("HMT_SERVE_PORT");
  unsetenv("HMT_SERVE_STORE");
}

TEST_CASE("http round trip") {
  Fixture f;
  auto s = f.service();
  ServeConfig cfg;
  cfg.port = 0;
  cfg.threads = 2;
  HttpServer server(*s, cfg);
  std::thread t([&] { server.listen(); });
  for (int i = 0; i < 200 && server.port() == 0; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  httplib::Client c("127.0.0.1", server.port());
  for (int i = 0; i < 200 && !c.Get("/health"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  auto res = c.Post("/sessions", json{{"text", "天□"}, {"k", 3}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 201);
  const auto body = json::parse(res->body);
  auto got = c.Get("/sessions/" + body["id"].get<std::string>());
  REQUIRE(got);
  CHECK(json::parse(got->body) == body);
  auto missing = c.Get("/sessions/zzz");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  server.stop();
  t.join();
}
