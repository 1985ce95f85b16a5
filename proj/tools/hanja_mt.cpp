// SPDX-License-Identifier: Apache-2.0
//
// hanja-mt: data preparation, training, restoration, translation,
// evaluation, topic modeling, serving and table reproductions.
#include <CLI11.hpp>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "hmt/checkpoint.hpp"
#include "hmt/error.hpp"
#include "hmt/experiments.hpp"
#include "hmt/run_config.hpp"
#include "hmt/service.hpp"
#include "hmt/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace hmt;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string run_dir;
  std::vector<std::string> overrides;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "Seed for splits, initialization and sampling");
    app->add_option("--run-dir", run_dir, "Run directory (default $HMT_RUN_ROOT/<name> or runs/<name>)");
    app->add_option("--set", overrides, "Override a config value, e.g. schedule.total_steps=200");
  }

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : load_run_config(config);
    c = apply_overrides(c, overrides);
    if (seed) {
      c.seed = *seed;
      c.schedule.seed = *seed;
    }
    return c;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

fs::path latest_checkpoint(const RunPaths& paths) {
  const fs::path pointer = paths.checkpoints() / "latest";
  if (!fs::exists(pointer)) throw NotFoundError("no checkpoint in " + paths.checkpoints().string());
  std::string name = read_file(pointer);
  while (!name.empty() && (name.back() == '\n' || name.back() == '\r')) name.pop_back();
  return paths.checkpoints() / name;
}

fs::path checkpoint_arg(const std::string& flag, const RunPaths& paths) {
  const fs::path p = flag.empty() ? latest_checkpoint(paths) : fs::path(flag);
  if (!fs::exists(p / "manifest.json")) throw NotFoundError("checkpoint not found: " + p.string());
  return p;
}

std::vector<CorpusRecord> corpus_or_bundled(const std::string& path) {
  return path.empty() ? bundled_corpus() : read_corpus(path);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string kind = "bundled";
  std::string out;
  std::string test_out;
  std::uint64_t seed = 2023;
};

int run_synth(const SynthArgs& a) {
  std::vector<CorpusRecord> records;
  if (a.kind == "bundled") {
    records = bundled_corpus(a.seed);
  } else if (a.kind == "cipher") {
    CipherOptions o;
    o.seed = a.seed;
    records = cipher_corpus(o);
  } else if (a.kind == "alternating") {
    AlternatingOptions o;
    o.seed = a.seed;
    records = alternating_corpus(o);
  } else if (a.kind == "low-resource") {
    LowResourceOptions o = ToyExperiment::standard().data;
    o.seed = a.seed;
    auto c = low_resource_corpus(o);
    records = std::move(c.train);
    if (!a.test_out.empty()) write_corpus(a.test_out, c.test);
  } else {
    throw ValueError("unknown corpus kind '" + a.kind + "' (bundled, cipher, alternating, low-resource)");
  }
  write_corpus(a.out, records);
  std::cout << json{{"records", records.size()}, {"path", a.out}}.dump() << "\n";
  return 0;
}

int run_prepare(const Common& common, const std::string& corpus_flag) {
  RunConfig c = common.resolve();
  if (!corpus_flag.empty()) c.corpus.path = corpus_flag;
  const RunPaths paths = resolve_run_paths(common.run_dir, c.name);
  const PreparedCorpus prep = prepare_corpus(corpus_or_bundled(c.corpus.path), c.corpus, c.seed);
  paths.create();
  save_prepared(prep, paths.data());
  c.model = with_vocab_sizes(c.model, prep.hanja, prep.korean);
  paths.write_config(c);
  const json summary = prepared_summary(prep);
  write_text(paths.reports() / "prepare.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int run_train(const Common& common, bool resume) {
  RunConfig c = common.resolve();
  const RunPaths paths = resolve_run_paths(common.run_dir, c.name);
  if (!fs::exists(paths.data() / "summary.json")) {
    throw NotFoundError("no prepared corpus in " + paths.data().string() + " (run `hanja-mt prepare` first)");
  }
  const PreparedCorpus prep = load_prepared(paths.data());
  const Tokenizer hanja(prep.hanja), korean(prep.korean);
  c.model = with_vocab_sizes(c.model, prep.hanja, prep.korean);
  c.model.validate();
  c.schedule.validate();
  paths.create();
  paths.write_config(c);

  Model model(c.model, c.seed);
  Trainer trainer(model, c.optimizer, c.schedule, make_training_data(prep.splits, hanja, korean, c.model));
  if (resume && fs::exists(paths.checkpoints() / "latest")) trainer.resume(latest_checkpoint(paths));

  TrainOutputs out;
  out.checkpoint_dir = paths.checkpoints();
  out.metrics_log = paths.logs() / "metrics.jsonl";
  out.hanja_vocab = &prep.hanja;
  out.korean_vocab = &prep.korean;
  out.extra = {{"run", c.name}};
  TrainHooks hooks;
  hooks.on_log = [](const MetricRecord& r) { std::cerr << to_json(r).dump() << "\n"; };
  const TrainResult r = trainer.run(out, hooks);
  json summary = {{"steps_completed", r.steps_completed},
                  {"restoration_steps", r.restoration_steps},
                  {"translation_steps", r.translation_steps},
                  {"diverged", r.diverged},
                  {"message", r.message},
                  {"checkpoint", r.last_checkpoint ? r.last_checkpoint->string() : ""}};
  write_text(paths.reports() / "train.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return r.diverged ? 3 : 0;
}

struct RestoreArgs {
  std::string checkpoint;
  std::vector<std::string> texts;
  std::string input;
  std::string output;
  std::optional<std::size_t> k;
  std::string mode = "joint";
};

int run_restore(const Common& common, const RestoreArgs& a) {
  const RunConfig c = common.resolve();
  const RunPaths paths = resolve_run_paths(common.run_dir, c.name);
  const auto snap = ModelSnapshot::load(checkpoint_arg(a.checkpoint, paths));
  const std::size_t k = a.k.value_or(c.serve.k);
  RestoreMode mode = RestoreMode::kJoint;
  if (a.mode == "refill") mode = RestoreMode::kRefill;
  else if (a.mode != "joint") throw ValueError("unknown restore mode '" + a.mode + "' (joint, refill)");

  std::vector<std::pair<std::string, std::string>> inputs;
  for (std::size_t i = 0; i < a.texts.size(); ++i) inputs.emplace_back("text" + std::to_string(i + 1), a.texts[i]);
  if (!a.input.empty()) {
    for (const auto& r : read_corpus(a.input)) {
      if (r.side == Side::kHanja) inputs.emplace_back(r.id, r.text);
    }
  }
  if (inputs.empty()) throw ValueError("restore: give --text or --input");

  json out = json::array();
  for (const auto& [id, text] : inputs) {
    const DamagedText damaged = parse_damaged_text(text);
    const auto ids = encode_damaged(damaged, snap->hanja);
    json positions = json::array();
    for (const auto& pc : restore_topk(snap->model, ids, k, mode)) {
      json cands = json::array();
      for (const auto& cand : pc.candidates) {
        cands.push_back({{"token", snap->hanja.vocab().token(cand.token)},
                         {"id", cand.token},
                         {"logprob", cand.logprob},
                         {"rank", cand.rank}});
      }
      positions.push_back({{"position", pc.position}, {"candidates", cands}});
    }
    out.push_back({{"id", id}, {"text", text}, {"checkpoint", snap->id}, {"positions", positions}});
  }
  const std::string text = out.dump(2) + "\n";
  if (a.output.empty()) std::cout << text;
  else write_text(a.output, text);
  return 0;
}

struct TranslateArgs {
  std::string checkpoint;
  std::string input;
  std::vector<std::string> texts;
  std::string output;
  std::optional<std::size_t> beam;
  std::optional<std::size_t> max_len;
};

int run_translate(const Common& common, const TranslateArgs& a) {
  const RunConfig c = common.resolve();
  const RunPaths paths = resolve_run_paths(common.run_dir, c.name);
  const auto snap = ModelSnapshot::load(checkpoint_arg(a.checkpoint, paths));
  DecodeOptions d = c.decode;
  if (a.beam) d.beam_size = *a.beam;
  if (a.max_len) d.max_len = *a.max_len;
  d.validate();

  std::vector<std::pair<std::string, std::string>> inputs;
  for (std::size_t i = 0; i < a.texts.size(); ++i) inputs.emplace_back("text" + std::to_string(i + 1), a.texts[i]);
  if (!a.input.empty()) {
    for (const auto& r : read_corpus(a.input)) {
      if (r.side == Side::kHanja) inputs.emplace_back(r.id, r.text);
    }
  }
  if (inputs.empty()) throw ValueError("translate: give --text or --input");

  std::string lines;
  for (const auto& [id, text] : inputs) {
    lines += to_json(translate_text(snap->model, snap->hanja, snap->korean, id, text, d)).dump() + "\n";
  }
  const fs::path out = a.output.empty() ? paths.reports() / "translations.jsonl" : fs::path(a.output);
  write_text(out, lines);
  std::cerr << "wrote " << inputs.size() << " translations to " << out.string() << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string hyp, ref;
  std::vector<std::string> metrics = {"bleu", "rouge_l"};
  std::string tokenizer = "auto";
  std::string vocab;
  std::string output;
  double beta = 1.2;
};

// Lines of a hypothesis or reference file as (key, text). Translation
// records are keyed by source id; corpus records by the id of the Hanja
// record they pair with; plain lines by line number.
std::vector<std::pair<std::string, std::string>> read_segments(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot read " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::vector<CorpusRecord> records;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const json j = json::parse(line, nullptr, false);
    if (j.is_object() && j.contains("hypothesis")) {
      const auto r = translation_record_from_json(j);
      out.emplace_back(r.id, r.hypothesis);
    } else if (j.is_object() && j.contains("side")) {
      records.push_back(parse_corpus_line(line));
    } else {
      out.emplace_back("#" + std::to_string(n), line);
    }
  }
  if (!records.empty()) {
    if (!out.empty()) throw FormatError(path.string() + ": mixes corpus records with other lines");
    for (const auto& p : group_pairs(records).paired) out.emplace_back(p.hanja.id, p.korean.text);
  }
  return out;
}

int run_evaluate(const Common& common, const EvaluateArgs& a) {
  const RunConfig c = common.resolve();
  const RunPaths paths = resolve_run_paths(common.run_dir, c.name);
  const auto hyps = read_segments(a.hyp);
  const auto refs = read_segments(a.ref);

  // Align by key when the hypotheses are translation records, else by order.
  std::vector<std::string> hyp_text, ref_text;
  const bool keyed = !hyps.empty() && hyps.front().first.front() != '#' && !refs.empty() && refs.front().first.front() != '#';
  if (keyed) {
    // Hypotheses without a reference (unpaired sources) are not scored.
    std::map<std::string, std::string> by_key(refs.begin(), refs.end());
    std::size_t skipped = 0;
    for (const auto& [key, text] : hyps) {
      auto it = by_key.find(key);
      if (it == by_key.end()) {
        ++skipped;
        continue;
      }
      hyp_text.push_back(text);
      ref_text.push_back(it->second);
    }
    if (hyp_text.empty()) throw NotFoundError("no hypothesis in " + a.hyp + " has a reference in " + a.ref);
    if (skipped) std::cerr << "skipped " << skipped << " hypotheses without a reference\n";
  } else {
    for (const auto& h : hyps) hyp_text.push_back(h.second);
    for (const auto& r : refs) ref_text.push_back(r.second);
  }

  std::optional<Tokenizer> korean;
  std::string tokenization = a.tokenizer;
  fs::path vocab = a.vocab;
  if (vocab.empty() && tokenization != "whitespace" && fs::exists(paths.data() / "korean.vocab")) {
    vocab = paths.data() / "korean.vocab";
  }
  if (tokenization == "auto") tokenization = vocab.empty() ? "whitespace" : "subword";
  if (tokenization == "subword") {
    if (vocab.empty()) throw NotFoundError("subword tokenization needs --vocab or a prepared run directory");
    korean.emplace(Vocab::load(vocab));
  } else if (tokenization != "whitespace") {
    throw ValueError("unknown tokenizer '" + a.tokenizer + "' (auto, subword, whitespace)");
  }
  auto segment = [&](const std::string& s) { return korean ? korean->pieces(s) : split_whitespace(s); };
  std::vector<Segment> hs, rs;
  for (const auto& s : hyp_text) hs.push_back(segment(s));
  for (const auto& s : ref_text) rs.push_back(segment(s));

  json reports = json::array();
  for (const auto& m : a.metrics) {
    EvalReport r;
    if (m == "bleu") r = bleu(hs, rs);
    else if (m == "rouge_l") r = rouge_l(hs, rs, a.beta);
    else if (m == "chrf") r = chrf(hyp_text, ref_text);
    else throw ValueError("unknown metric '" + m + "' (bleu, rouge_l, chrf)");
    if (m != "chrf") r.config["tokenization"] = tokenization;
    reports.push_back(to_json(r));
  }
  const std::string text = reports.dump(2) + "\n";
  if (!a.output.empty()) write_text(a.output, text);
  std::cout << text;
  return 0;
}

struct TopicsArgs {
  std::string input;
  std::string side = "korean";
  std::string out_dir;
};

int run_topics(const Common& common, const TopicsArgs& a) {
  const RunConfig c = common.resolve();
  const RunPaths paths = resolve_run_paths(common.run_dir, c.name);
  Side side = Side::kKorean;
  if (a.side == "hanja") side = Side::kHanja;
  else if (a.side != "korean") throw ValueError("unknown side '" + a.side + "' (korean, hanja)");

  std::vector<DatedDocument> docs;
  std::size_t undated = 0;
  for (const auto& r : corpus_or_bundled(a.input.empty() ? c.corpus.path : a.input)) {
    if (r.side != side) continue;
    if (r.date) docs.push_back({r.text, r.date});
    else ++undated;
  }
  std::unique_ptr<TermTokenizer> tokenizer;
  const auto stop = c.topics.stopwords.empty() ? std::unordered_set<std::string>{}
                                               : WhitespaceTermTokenizer::load_stopwords(c.topics.stopwords);
  if (side == Side::kHanja) tokenizer = std::make_unique<CharacterTermTokenizer>(stop);
  else if (c.topics.stopwords.empty()) tokenizer = std::make_unique<WhitespaceTermTokenizer>();
  else tokenizer = std::make_unique<WhitespaceTermTokenizer>(stop);

  const TermDateMatrix v = build_term_date_matrix(docs, *tokenizer, c.topics.term_date_options());
  const TopicModel model = nmf_fit(v, c.topics.nmf_options(c.seed));
  const TopicReport report = topic_report(model, c.topics.top_n);
  json j = to_json(report, model);
  j["documents"] = docs.size();
  j["undated_skipped"] = undated;
  const fs::path dir = a.out_dir.empty() ? paths.reports() / "topics" : fs::path(a.out_dir);
  fs::create_directories(dir);
  paths.write_config(c);
  write_text(dir / "topics.json", j.dump(2) + "\n");
  write_timeseries_csv(topic_timeseries(model, c.topics.window), dir);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct ServeArgs {
  std::string checkpoint;
  std::optional<std::string> host;
  std::optional<int> port;
  std::string store;
};

int run_serve(const Common& common, const ServeArgs& a) {
  const RunConfig c = common.resolve();
  const RunPaths paths = resolve_run_paths(common.run_dir, c.name);
  ServeConfig sc = c.serve;
  if (!a.checkpoint.empty()) sc.checkpoint = a.checkpoint;
  if (a.host) sc.host = *a.host;
  if (a.port) sc.port = *a.port;
  if (!a.store.empty()) sc.store = a.store;
  sc = apply_env_overrides(sc);
  if (sc.checkpoint.empty()) sc.checkpoint = latest_checkpoint(paths).string();
  if (fs::path(sc.store).is_relative()) {
    fs::create_directories(paths.root);
    sc.store = (paths.root / sc.store).string();
  }

  // Block the stop signals before any thread starts; one thread waits for them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto store = std::make_shared<SessionStore>(sc.store);
  ReviewService service(sc, store);
  service.set_snapshot(ModelSnapshot::load(checkpoint_arg(sc.checkpoint, paths)));
  HttpServer server(service, sc);
  if (!server.bind()) throw Error("cannot bind " + sc.host + ":" + std::to_string(sc.port));
  std::printf("listening on http://%s:%d\n", sc.host.c_str(), server.port());
  std::fflush(stdout);

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  const bool ok = server.listen();
  // listen() also returns when binding fails; wake the waiter in that case.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return ok ? 0 : 1;
}

struct ReproduceArgs {
  std::string table;
  std::string experiment;
  std::optional<std::size_t> steps;
  std::vector<std::uint64_t> seeds;
};

int run_reproduce(const Common& common, const ReproduceArgs& a) {
  RunConfig c = common.resolve();
  if (common.config.empty() && c.name == "default") c.name = "reproduce-" + a.table;
  const RunPaths paths = resolve_run_paths(common.run_dir, c.name);
  json ej = json::object();
  if (!a.experiment.empty()) ej = json::parse(read_file(a.experiment));
  ToyExperiment e = toy_experiment_from_json(ej);
  if (a.steps) e.steps = *a.steps;
  if (!a.seeds.empty()) e.seeds = a.seeds;
  const Reproduction r = reproduce(a.table, e, [](const std::string& line) { std::cerr << line << "\n"; });
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  json j = r.to_json();
  j["experiment"] = to_json(e);
  write_text(paths.reports() / (a.table + ".json"), j.dump(2) + "\n");
  write_text(paths.reports() / (a.table + ".md"), r.markdown);
  std::cout << r.markdown;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hanja restoration and translation toolkit"};
  app.require_subcommand(1);
  Common common;

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Write a synthetic corpus");
  s_synth->add_option("--kind", synth.kind, "bundled, cipher, alternating or low-resource");
  s_synth->add_option("--out", synth.out, "Output JSON-lines corpus")->required();
  s_synth->add_option("--test-out", synth.test_out, "Held-out pairs (low-resource only)");
  s_synth->add_option("--seed", synth.seed, "Generator seed");

  std::string corpus_flag;
  auto* s_prepare = app.add_subcommand("prepare", "Build vocabularies and train/test splits");
  common.add_to(s_prepare);
  s_prepare->add_option("--corpus", corpus_flag, "JSON-lines corpus (default: bundled synthetic corpus)");

  bool resume = false;
  auto* s_train = app.add_subcommand("train", "Train and write checkpoints and metric logs");
  common.add_to(s_train);
  s_train->add_flag("--resume", resume, "Continue from the latest checkpoint of the run");

  RestoreArgs restore;
  auto* s_restore = app.add_subcommand("restore", "Rank candidates for damaged characters");
  common.add_to(s_restore);
  s_restore->add_option("--checkpoint", restore.checkpoint, "Checkpoint directory (default: latest of the run)");
  s_restore->add_option("--text", restore.texts, "Damaged text; mark slots with □ or [MASK]");
  s_restore->add_option("--input", restore.input, "JSON-lines corpus of damaged Hanja records");
  s_restore->add_option("--output", restore.output, "Write candidates JSON here instead of stdout");
  s_restore->add_option("-k,--k", restore.k, "Candidates per position");
  s_restore->add_option("--mode", restore.mode, "joint or refill");

  TranslateArgs translate;
  auto* s_translate = app.add_subcommand("translate", "Translate Hanja to Korean");
  common.add_to(s_translate);
  s_translate->add_option("--checkpoint", translate.checkpoint, "Checkpoint directory (default: latest of the run)");
  s_translate->add_option("--input", translate.input, "JSON-lines corpus; Hanja records are translated");
  s_translate->add_option("--text", translate.texts, "Hanja sentence");
  s_translate->add_option("--output", translate.output, "Output JSON lines (default reports/translations.jsonl)");
  s_translate->add_option("--beam", translate.beam, "Beam size (1 = greedy)");
  s_translate->add_option("--max-len", translate.max_len, "Maximum generated tokens");

  EvaluateArgs evaluate;
  auto* s_evaluate = app.add_subcommand("evaluate", "Score hypotheses against references");
  common.add_to(s_evaluate);
  s_evaluate->add_option("--hyp", evaluate.hyp, "Hypotheses: translation JSON lines or plain text")->required();
  s_evaluate->add_option("--ref", evaluate.ref, "References: corpus JSON lines or plain text")->required();
  s_evaluate->add_option("--metric", evaluate.metrics, "bleu, rouge_l, chrf");
  s_evaluate->add_option("--tokenizer", evaluate.tokenizer, "auto, subword or whitespace");
  s_evaluate->add_option("--vocab", evaluate.vocab, "Korean vocabulary for subword tokenization");
  s_evaluate->add_option("--beta", evaluate.beta, "ROUGE-L recall weight");
  s_evaluate->add_option("--output", evaluate.output, "Also write the report here");

  TopicsArgs topics;
  auto* s_topics = app.add_subcommand("topics", "Fit NMF topics over dated records");
  common.add_to(s_topics);
  s_topics->add_option("--input", topics.input, "JSON-lines corpus (default: config or bundled corpus)");
  s_topics->add_option("--side", topics.side, "korean or hanja");
  s_topics->add_option("--out-dir", topics.out_dir, "Output directory (default reports/topics)");

  ServeArgs serve;
  auto* s_serve = app.add_subcommand("serve", "Run the restoration review service");
  common.add_to(s_serve);
  s_serve->add_option("--checkpoint", serve.checkpoint, "Checkpoint directory (default: latest of the run)");
  s_serve->add_option("--host", serve.host, "Bind address");
  s_serve->add_option("--port", serve.port, "Port; 0 picks a free one");
  s_serve->add_option("--store", serve.store, "Session database");

  ReproduceArgs reproduce_args;
  auto* s_reproduce = app.add_subcommand("reproduce", "Toy-scale reproduction of a results table");
  common.add_to(s_reproduce);
  s_reproduce->add_option("table", reproduce_args.table, "table3, table5 or table6")
      ->required()
      ->check(CLI::IsMember({"table3", "table5", "table6"}));
  s_reproduce->add_option("--experiment", reproduce_args.experiment, "JSON overrides of the toy experiment");
  s_reproduce->add_option("--steps", reproduce_args.steps, "Optimizer steps per run");
  s_reproduce->add_option("--seeds", reproduce_args.seeds, "Seeds")->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (s_synth->parsed()) return run_synth(synth);
    if (s_prepare->parsed()) return run_prepare(common, corpus_flag);
    if (s_train->parsed()) return run_train(common, resume);
    if (s_restore->parsed()) return run_restore(common, restore);
    if (s_translate->parsed()) return run_translate(common, translate);
    if (s_evaluate->parsed()) return run_evaluate(common, evaluate);
    if (s_topics->parsed()) return run_topics(common, topics);
    if (s_serve->parsed()) return run_serve(common, serve);
    if (s_reproduce->parsed()) return run_reproduce(common, reproduce_args);
  } catch (const NotFoundError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
