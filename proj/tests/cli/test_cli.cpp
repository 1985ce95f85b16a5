// End-to-end checks of the hanja-mt command-line tool.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hmt/checkpoint.hpp"
#include "hmt/experiments.hpp"
#include "hmt/service.hpp"
#include <nlohmann/json.hpp>

using namespace hmt;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "hmt_cli_tests";

struct Result {
  int status = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result cli(const std::string& args) {
  fs::create_directories(kRoot);
  const fs::path out = kRoot / "stdout.txt", err = kRoot / "stderr.txt";
  const std::string cmd = std::string(HMT_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  Result r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

const std::string kToyConfig = HMT_SOURCE_DIR "/configs/toy.json";

// A short training run shared by the test cases below.
const fs::path& trained_run() {
  static const fs::path dir = [] {
    const fs::path d = kRoot / "trained";
    fs::remove_all(d);
    const std::string common = " --config " + kToyConfig + " --run-dir " + d.string();
    REQUIRE(cli("prepare" + common).status == 0);
    const Result t = cli("train" + common + " --set schedule.total_steps=200 --set schedule.checkpoint_every=100");
    REQUIRE_MESSAGE(t.status == 0, t.err);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("prepare on the bundled corpus gives a deterministic vocab hash") {
  const Result a = cli("prepare --config " + kToyConfig + " --run-dir " + (kRoot / "p1").string());
  const Result b = cli("prepare --config " + kToyConfig + " --run-dir " + (kRoot / "p2").string());
  REQUIRE_MESSAGE(a.status == 0, a.err);
  REQUIRE(b.status == 0);
  const json ja = json::parse(a.out), jb = json::parse(b.out);
  CHECK(ja["hanja_vocab_hash"] == jb["hanja_vocab_hash"]);
  CHECK(ja["korean_vocab_hash"] == jb["korean_vocab_hash"]);
  CHECK(slurp(kRoot / "p1/data/hanja.vocab") == slurp(kRoot / "p2/data/hanja.vocab"));
  CHECK(slurp(kRoot / "p1/data/test.jsonl") == slurp(kRoot / "p2/data/test.jsonl"));
  CHECK(ja["paired_test"] == 30);

  // The resolved config is echoed next to the outputs.
  const json echoed = json::parse(slurp(kRoot / "p1/config.json"));
  CHECK(echoed["seed"] == 7);
  CHECK(echoed["model"]["vocab_hanja"] == ja["hanja_vocab_size"]);
  for (const char* d : {"checkpoints", "logs", "reports", "data"}) CHECK(fs::is_directory(kRoot / "p1" / d));

  // Idempotent: a second run into the same directory writes the same files.
  const std::string before = slurp(kRoot / "p1/data/train.jsonl");
  REQUIRE(cli("prepare --config " + kToyConfig + " --run-dir " + (kRoot / "p1").string()).status == 0);
  CHECK(slurp(kRoot / "p1/data/train.jsonl") == before);

  const Result other = cli("prepare --config " + kToyConfig + " --seed 8 --run-dir " + (kRoot / "p3").string());
  REQUIRE(other.status == 0);
  CHECK(slurp(kRoot / "p3/data/test.jsonl") != slurp(kRoot / "p1/data/test.jsonl"));
}

TEST_CASE("run root comes from HMT_RUN_ROOT") {
  const fs::path root = kRoot / "root";
  fs::remove_all(root);
  setenv("HMT_RUN_ROOT", root.c_str(), 1);
  const Result r = cli("prepare --config " + kToyConfig);
  unsetenv("HMT_RUN_ROOT");
  REQUIRE(r.status == 0);
  CHECK(fs::exists(root / "toy/data/summary.json"));
}

TEST_CASE("bad configs and missing checkpoints fail with a pointed message") {
  const fs::path bad = kRoot / "bad.json";
  std::ofstream(bad) << R"({"schedule": {"total_step": 5}})";
  Result r = cli("prepare --config " + bad.string() + " --run-dir " + (kRoot / "bad").string());
  CHECK(r.status != 0);
  CHECK(r.err.find("total_step") != std::string::npos);

  r = cli("prepare --set optimizer.lrr=1 --run-dir " + (kRoot / "bad").string());
  CHECK(r.status != 0);
  CHECK(r.err.find("optimizer.lrr") != std::string::npos);

  r = cli("translate --text 丁 --run-dir " + (kRoot / "empty").string());
  CHECK(r.status != 0);
  CHECK(r.err.find("no checkpoint") != std::string::npos);

  r = cli("translate --text 丁 --checkpoint " + (kRoot / "nowhere").string());
  CHECK(r.status != 0);

  r = cli("train --run-dir " + (kRoot / "unprepared").string());
  CHECK(r.status != 0);
  CHECK(r.err.find("prepare") != std::string::npos);

  CHECK(cli("frobnicate").status != 0);
}

TEST_CASE("train writes checkpoints and a metric log") {
  const fs::path& run = trained_run();
  CHECK(slurp(run / "checkpoints/latest") == "step-0000200\n");
  CHECK(fs::exists(run / "checkpoints/step-0000100/manifest.json"));
  std::ifstream log(run / "logs/metrics.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(log, line)) {
    const json j = json::parse(line);
    CHECK(j.contains("loss_rst"));
    CHECK(j.contains("loss_trs"));
    CHECK(j.contains("lr"));
    ++n;
  }
  CHECK(n == 2);
}

TEST_CASE("translate --beam 3 then evaluate reproduces the library metrics exactly") {
  const fs::path& run = trained_run();
  const std::string common = " --config " + kToyConfig + " --run-dir " + run.string();
  const fs::path hyp = run / "reports/test.hyp.jsonl";
  REQUIRE(cli("translate" + common + " --beam 3 --input " + (run / "data/test.jsonl").string() + " --output " +
              hyp.string())
              .status == 0);
  const Result ev = cli("evaluate" + common + " --hyp " + hyp.string() + " --ref " +
                        (run / "data/test.jsonl").string() + " --metric bleu --metric rouge_l");
  REQUIRE_MESSAGE(ev.status == 0, ev.err);
  const json reports = json::parse(ev.out);

  const auto snap = ModelSnapshot::load(run / "checkpoints/step-0000200");
  const PreparedCorpus prep = load_prepared(run / "data");
  DecodeOptions d;
  d.beam_size = 3;
  d.max_len = 32;
  const TranslationEval lib = evaluate_translation(snap->model, prep.splits.paired_test, snap->hanja, snap->korean, d);
  CHECK(reports[0]["metric"] == "bleu");
  CHECK(reports[0]["value"].get<double>() == lib.bleu.value);
  CHECK(reports[0]["per_segment"].get<std::vector<double>>() == lib.bleu.per_segment);
  CHECK(reports[1]["value"].get<double>() == lib.rouge_l.value);
  CHECK(reports[1]["value"].get<double>() > 0.0);
  CHECK(reports[0]["segments"] == prep.splits.paired_test.size());
  CHECK(reports[0]["config"]["tokenization"] == "subword");

  // Outputs are JSON lines {id, source, hypothesis, raw_logprob, score}.
  std::ifstream in(hyp);
  std::string line;
  REQUIRE(std::getline(in, line));
  const json rec = json::parse(line);
  for (const char* k : {"id", "source", "hypothesis", "raw_logprob", "score"}) CHECK(rec.contains(k));
}

TEST_CASE("evaluate on identical files gives BLEU 1") {
  const fs::path f = kRoot / "same.txt";
  std::ofstream(f) << "가 나 다 라\n마 바 사 아 자\n";
  const Result r = cli("evaluate --hyp " + f.string() + " --ref " + f.string() + " --run-dir " + (kRoot / "ev").string());
  REQUIRE(r.status == 0);
  const json j = json::parse(r.out);
  CHECK(j[0]["value"].get<double>() == 1.0);
  CHECK(j[1]["value"].get<double>() == 1.0);
}

TEST_CASE("restore prints ranked candidates per damaged slot") {
  const fs::path& run = trained_run();
  const Result r = cli("restore --config " + kToyConfig + " --run-dir " + run.string() +
                       " --text 丁□丁[MASK]丁 -k 4");
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const json j = json::parse(r.out);
  REQUIRE(j.size() == 1);
  REQUIRE(j[0]["positions"].size() == 2);
  CHECK(j[0]["positions"][0]["position"] == 1);
  CHECK(j[0]["positions"][1]["position"] == 3);
  CHECK(j[0]["positions"][0]["candidates"].size() == 4);
}

TEST_CASE("topics writes a report and one CSV series per topic") {
  const fs::path run = kRoot / "topics";
  fs::remove_all(run);
  const Result r = cli("topics --config " + kToyConfig + " --run-dir " + run.string());
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const json j = json::parse(slurp(run / "reports/topics/topics.json"));
  CHECK(j["topics"].size() == 5);
  CHECK(j["documents"] == 300);
  for (int t = 0; t < 5; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "topic_%02d.csv", t);
    const std::string csv = slurp(run / "reports/topics" / name);
    CHECK(csv.rfind("date,value\n1600,", 0) == 0);
  }
  const Result hanja = cli("topics --config " + kToyConfig + " --side hanja --run-dir " + run.string());
  CHECK(hanja.status == 0);
  CHECK(json::parse(hanja.out)["documents"] == 1000);
}

TEST_CASE("reproduce warns on a small budget and still reports") {
  const fs::path run = kRoot / "reproduce";
  fs::remove_all(run);
  const fs::path exp = kRoot / "tiny_experiment.json";
  std::ofstream(exp) << R"({"paired": 20, "unpaired": 40, "test": 5, "steps": 6, "batch_size": 4, "seeds": [1, 2],
    "model": {"d_emb": 8, "d_model": 16, "d_ffn": 32, "n_heads": 2, "layers_shared": 1, "layers_restore": 1,
              "layers_decoder": 1}})";
  const Result r = cli("reproduce table6 --experiment " + exp.string() + " --run-dir " + run.string());
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(r.err.find("warning: step budget 6") != std::string::npos);
  CHECK(r.out.find("| pipelining (pretrain_then_finetune) |") != std::string::npos);
  CHECK(r.out.find("0.3755") != std::string::npos);
  const json j = json::parse(slurp(run / "reports/table6.json"));
  CHECK(j["rows"].size() == 3);
  CHECK(j["rows"][0]["desk"]["bleu"]["per_seed"].size() == 2);
  CHECK(fs::exists(run / "reports/table6.md"));

  const Result t3 = cli("reproduce table3 --experiment " + exp.string() + " --seeds 1 --run-dir " + run.string());
  REQUIRE(t3.status == 0);
  CHECK(t3.out.find("HITS@1") != std::string::npos);
  CHECK(cli("reproduce table9").status != 0);
}

TEST_CASE("synth writes corpora") {
  const fs::path out = kRoot / "synth.jsonl";
  REQUIRE(cli("synth --kind low-resource --seed 3 --out " + out.string() + " --test-out " +
              (kRoot / "synth_test.jsonl").string())
              .status == 0);
  CHECK(read_corpus(out).size() == 2400);
  CHECK(read_corpus(kRoot / "synth_test.jsonl").size() == 200);
  CHECK(cli("synth --kind nope --out " + out.string()).status != 0);
}
