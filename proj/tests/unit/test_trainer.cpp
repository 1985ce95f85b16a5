// Training loop bookkeeping, determinism, accumulation and checkpoints.
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>

#include "doctest.h"
#include "hmt/error.hpp"
#include "hmt/trainer.hpp"

using namespace hmt;
namespace fs = std::filesystem;

namespace {

TrainOutputs checkpoints_in(const std::filesystem::path& dir) {
  TrainOutputs out;
  out.checkpoint_dir = dir;
  return out;
}

ModelConfig tiny() {
  ModelConfig c;
  c.d_emb = 4;
  c.d_model = 8;
  c.d_ffn = 8;
  c.n_heads = 2;
  c.layers_shared = 1;
  c.layers_restore = 1;
  c.layers_decoder = 1;
  c.max_len_hanja = 10;
  c.max_len_korean = 10;
  c.vocab_hanja = 12;
  c.vocab_korean = 14;
  c.dropout = 0.0;
  return c;
}

TrainingData toy_data() {
  TrainingData d;
  for (TokenId i = 0; i < 6; ++i) {
    std::vector<TokenId> src = {static_cast<TokenId>(5 + i), static_cast<TokenId>(5 + (i + 1) % 7), 11};
    d.restoration.push_back(src);
    d.paired.push_back({src, {special::kBos, static_cast<TokenId>(5 + i), static_cast<TokenId>(6 + i), special::kEos}});
  }
  d.restoration.push_back({7, 8, 9, 10, 11});
  return d;
}

TrainSchedule schedule(TrainMode mode, std::size_t steps) {
  TrainSchedule s;
  s.mode = mode;
  s.total_steps = steps;
  s.batch_size = 2;
  s.log_every = 1;
  s.seed = 7;
  return s;
}

OptimizerConfig constant_lr() {
  OptimizerConfig o;
  o.lr = 1e-2;
  o.schedule = LrSchedule::kConstant;
  return o;
}

std::map<std::string, std::vector<float>> snapshot(const Model& m) {
  std::map<std::string, std::vector<float>> out;
  for (const auto& nb : m.params().blocks()) out[nb.name].assign(nb.tensor.data().begin(), nb.tensor.data().end());
  return out;
}

bool changed(const std::map<std::string, std::vector<float>>& a, const std::map<std::string, std::vector<float>>& b,
             const std::string& prefix) {
  for (const auto& [name, v] : a) {
    if (name.rfind(prefix, 0) == 0 && v != b.at(name)) return true;
  }
  return false;
}

double max_diff(const Model& a, const Model& b) {
  double d = 0.0;
  const auto sa = snapshot(a), sb = snapshot(b);
  for (const auto& [name, v] : sa) {
    for (std::size_t i = 0; i < v.size(); ++i) d = std::max(d, std::abs(double(v[i]) - double(sb.at(name)[i])));
  }
  return d;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("hmt_trainer_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)) + "_" +
                                        std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("interleave bookkeeping") {
  auto s = schedule(TrainMode::kMultitask, 100);
  std::size_t rst = 0;
  for (std::size_t i = 0; i < 100; ++i) rst += loss_for_step(s, i) == LossKind::kRestoration;
  CHECK(rst == 50);
  s.restoration_ratio = 5;
  std::vector<LossKind> cycle;
  for (std::size_t i = 0; i < 6; ++i) cycle.push_back(loss_for_step(s, i));
  CHECK(std::count(cycle.begin(), cycle.end(), LossKind::kRestoration) == 5);

  auto p = schedule(TrainMode::kPretrainThenFinetune, 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(loss_for_step(p, i) == (i < 5 ? LossKind::kRestoration : LossKind::kTranslation));
  }
  p.pretrain_steps = 3;
  CHECK(loss_for_step(p, 2) == LossKind::kRestoration);
  CHECK(loss_for_step(p, 3) == LossKind::kTranslation);
  CHECK(loss_for_step(schedule(TrainMode::kTranslationOnly, 4), 0) == LossKind::kTranslation);
  CHECK(loss_for_step(schedule(TrainMode::kRestorationOnly, 4), 3) == LossKind::kRestoration);
}

TEST_CASE("ratio 1:1 over 100 steps") {
  Model m(tiny(), 1);
  Trainer t(m, constant_lr(), schedule(TrainMode::kMultitask, 100), toy_data());
  const auto r = t.run();
  CHECK(r.steps_completed == 100);
  CHECK(r.restoration_steps == 50);
  CHECK(r.translation_steps == 50);
  CHECK(!r.diverged);
  CHECK(r.log.size() == 100);
  CHECK(t.optimizer().step_count() == 100);
}

TEST_CASE("training reduces both losses") {
  Model m(tiny(), 2);
  auto s = schedule(TrainMode::kMultitask, 300);
  s.batch_size = 4;
  auto o = constant_lr();
  o.lr = 0.03;
  Trainer t(m, o, s, toy_data());
  const auto r = t.run();
  double first_trs = 0, last_trs = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    if (r.log[i].loss_trs) first_trs += *r.log[i].loss_trs;
    if (r.log[r.log.size() - 1 - i].loss_trs) last_trs += *r.log[r.log.size() - 1 - i].loss_trs;
  }
  CHECK(last_trs < 0.5 * first_trs);
}

TEST_CASE("fixed seed gives identical trajectories") {
  auto run = [](std::uint64_t seed) {
    Model m(tiny(), 3);
    auto s = schedule(TrainMode::kMultitask, 20);
    s.seed = seed;
    Trainer t(m, OptimizerConfig{}, s, toy_data());
    std::vector<double> losses;
    for (const auto& rec : t.run().log) losses.push_back(rec.loss_rst ? *rec.loss_rst : *rec.loss_trs);
    return losses;
  };
  CHECK(run(5) == run(5));
  CHECK(run(5) != run(6));
}

TEST_CASE("each loss moves only its own blocks") {
  auto o = constant_lr();
  Model start(tiny(), 4);
  const auto s0 = snapshot(start);

  Model one(tiny(), 4);
  Trainer(one, o, schedule(TrainMode::kMultitask, 1), toy_data()).run();
  const auto s1 = snapshot(one);
  Model two(tiny(), 4);
  Trainer(two, o, schedule(TrainMode::kMultitask, 2), toy_data()).run();
  const auto s2 = snapshot(two);

  // Step 0 is a restoration step, step 1 a translation step.
  CHECK(changed(s0, s1, "shared."));
  CHECK(changed(s0, s1, "restore."));
  CHECK(changed(s0, s1, "hanja_head"));
  CHECK_FALSE(changed(s0, s1, "decoder."));
  CHECK_FALSE(changed(s0, s1, "korean"));

  CHECK(changed(s1, s2, "shared."));
  CHECK(changed(s1, s2, "decoder."));
  CHECK(changed(s1, s2, "korean_head"));
  CHECK_FALSE(changed(s1, s2, "restore."));
  CHECK_FALSE(changed(s1, s2, "hanja_head"));
}

TEST_CASE("accumulated micro-batches equal one large batch") {
  const auto data = toy_data();
  SUBCASE("single step") {
    Model a(tiny(), 5), b(tiny(), 5);
    Optimizer oa(constant_lr(), a.params().blocks()), ob(constant_lr(), b.params().blocks());
    PairedBatch first(data.paired.begin(), data.paired.begin() + 3), second(data.paired.begin() + 3, data.paired.end());
    accumulate_translation(a, first, 1);
    accumulate_translation(a, second, 2);
    oa.step(a.params().blocks(), 0.5);
    accumulate_translation(b, data.paired, 3);
    ob.step(b.params().blocks(), 1.0);
    CHECK(max_diff(a, b) < 1e-5);
  }
  SUBCASE("through the trainer") {
    Model a(tiny(), 6), b(tiny(), 6);
    auto sa = schedule(TrainMode::kTranslationOnly, 10);
    sa.batch_size = 2;
    sa.accumulation_steps = 3;
    auto sb = sa;
    sb.batch_size = 6;
    sb.accumulation_steps = 1;
    Trainer(a, constant_lr(), sa, data).run();
    Trainer(b, constant_lr(), sb, data).run();
    CHECK(max_diff(a, b) < 1e-5);
  }
}

TEST_CASE("pretrain then finetune phases") {
  Model m(tiny(), 7);
  auto s = schedule(TrainMode::kPretrainThenFinetune, 12);
  Trainer t(m, OptimizerConfig{}, s, toy_data());
  const auto r = t.run();
  CHECK(r.restoration_steps == 6);
  CHECK(r.translation_steps == 6);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(r.log[i].loss_rst.has_value() == (i < 6));
    CHECK(r.log[i].loss_trs.has_value() == (i >= 6));
  }
  // The finetuning phase restarts warmup: its first lr equals the very first.
  CHECK(r.log[6].lr == doctest::Approx(r.log[0].lr * 1.0).epsilon(1e-12));
}

TEST_CASE("divergence halts with the last good checkpoint") {
  TempDir tmp;
  Model m(tiny(), 8);
  // Translation steps produce NaN once the Korean head is poisoned.
  Tensor head = m.params().block("korean_head.output");
  std::fill(head.data().begin(), head.data().end(), std::numeric_limits<float>::quiet_NaN());
  auto s = schedule(TrainMode::kMultitask, 6);
  s.checkpoint_every = 1;
  Trainer t(m, constant_lr(), s, toy_data());
  const auto r = t.run(checkpoints_in(tmp.path / "checkpoints"));
  CHECK(r.diverged);
  CHECK(r.steps_completed == 1);
  CHECK(r.message.find("step 2") != std::string::npos);
  REQUIRE(r.last_checkpoint);
  CHECK(r.last_checkpoint->filename() == "step-0000001");
  const auto saved = read_file(*r.last_checkpoint / "tensors.bin");
  CHECK(serialize_tensors(m.params().blocks()) == saved);
}

TEST_CASE("resume continues the same trajectory") {
  TempDir tmp;
  const auto data = toy_data();
  auto s = schedule(TrainMode::kMultitask, 10);
  s.checkpoint_every = 4;
  Model full(tiny(), 9);
  Trainer(full, OptimizerConfig{}, s, data).run(checkpoints_in(tmp.path / "full"));

  Model resumed(tiny(), 1);
  Trainer t(resumed, OptimizerConfig{}, s, data);
  t.resume(tmp.path / "full" / "step-0000004");
  CHECK(t.step() == 4);
  const auto r = t.run();
  CHECK(r.steps_completed == 6);
  CHECK(max_diff(full, resumed) == 0.0);
  CHECK(read_file(tmp.path / "full" / "latest") == "step-0000010\n");
}

TEST_CASE("metric log lines") {
  TempDir tmp;
  Model m(tiny(), 10);
  auto s = schedule(TrainMode::kMultitask, 4);
  s.log_every = 2;
  Trainer t(m, OptimizerConfig{}, s, toy_data());
  TrainOutputs out;
  out.metrics_log = tmp.path / "logs" / "metrics.jsonl";
  std::size_t seen = 0;
  TrainHooks hooks;
  hooks.on_log = [&](const MetricRecord&) { ++seen; };
  t.run(out, hooks);
  CHECK(seen == 2);
  const auto text = read_file(*out.metrics_log);
  const auto line = nlohmann::json::parse(text.substr(0, text.find('\n')));
  CHECK(line["step"] == 2);
  CHECK(line["loss_rst"].is_number());
  CHECK(line["loss_trs"].is_number());
}

TEST_CASE("schedule validation and json") {
  auto s = schedule(TrainMode::kMultitask, 10);
  CHECK(train_schedule_from_json(to_json(s)) == s);
  CHECK_THROWS_AS(train_schedule_from_json({{"epochs", 3}}), ValueError);
  s.batch_size = 0;
  CHECK_THROWS_AS(s.validate(), ValueError);
  auto p = schedule(TrainMode::kPretrainThenFinetune, 10);
  p.pretrain_steps = 10;
  CHECK_THROWS_AS(p.validate(), ValueError);
  CHECK_THROWS_AS(train_mode_from_name("scratch"), ValueError);
  Model m(tiny(), 1);
  TrainingData no_pairs = toy_data();
  no_pairs.paired.clear();
  CHECK_THROWS_AS(Trainer(m, OptimizerConfig{}, schedule(TrainMode::kMultitask, 4), no_pairs), ValueError);
  CHECK_NOTHROW(Trainer(m, OptimizerConfig{}, schedule(TrainMode::kRestorationOnly, 4), no_pairs));
}

TEST_CASE("checkpoint round trip") {
  TempDir tmp;
  Model m(tiny(), 11);
  Vocab hv(Side::kHanja);
  hv.add("天");
  const auto manifest = save_checkpoint(tmp.path / "ck", {&m, nullptr, &hv, nullptr, 42, {{"bleu", 0.5}}, {}});
  const auto loaded = load_checkpoint(tmp.path / "ck");
  CHECK(loaded.manifest.id == manifest.id);
  CHECK(loaded.manifest.step == 42);
  CHECK(loaded.manifest.metrics["bleu"] == 0.5);
  CHECK(loaded.model.config() == m.config());
  CHECK(max_diff(loaded.model, m) == 0.0);
  REQUIRE(loaded.hanja_vocab);
  CHECK(loaded.hanja_vocab->token(5) == "天");
  CHECK_FALSE(loaded.korean_vocab);
  CHECK_FALSE(has_optimizer_state(tmp.path / "ck"));

  // Overwriting keeps a single valid checkpoint.
  save_checkpoint(tmp.path / "ck", {&m, nullptr, nullptr, nullptr, 43, {}, {}});
  CHECK(read_manifest(tmp.path / "ck").step == 43);

  // Flipped payload bytes are detected.
  auto bytes = read_file(tmp.path / "ck" / "tensors.bin");
  bytes[bytes.size() - 1] ^= 0x5a;
  write_file_atomic(tmp.path / "ck" / "tensors.bin", bytes);
  CHECK_THROWS_AS(load_checkpoint(tmp.path / "ck"), FormatError);
  CHECK_THROWS_AS(load_checkpoint(tmp.path / "missing"), NotFoundError);

  std::vector<NamedBlock> wrong = Model(tiny(), 1).params().blocks();
  wrong.pop_back();
  CHECK_THROWS_AS(deserialize_tensors(serialize_tensors(m.params().blocks()), wrong), FormatError);
}
