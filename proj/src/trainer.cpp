// SPDX-License-Identifier: Apache-2.0
#include "hmt/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "hmt/error.hpp"

namespace hmt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 over the combined value.
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t kRestorationSalt = 0x7273;
constexpr std::uint64_t kTranslationSalt = 0x7472;

std::string step_dir_name(std::size_t step) {
  std::ostringstream os;
  os << "step-" << std::setw(7) << std::setfill('0') << step;
  return os.str();
}

std::size_t pretrain_steps(const TrainSchedule& s) {
  return s.pretrain_steps ? s.pretrain_steps : s.total_steps / 2;
}

}  // namespace

const char* train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kMultitask: return "multitask";
    case TrainMode::kTranslationOnly: return "translation_only";
    case TrainMode::kRestorationOnly: return "restoration_only";
    case TrainMode::kPretrainThenFinetune: return "pretrain_then_finetune";
  }
  return "?";
}

TrainMode train_mode_from_name(const std::string& name) {
  for (auto m : {TrainMode::kMultitask, TrainMode::kTranslationOnly, TrainMode::kRestorationOnly,
                 TrainMode::kPretrainThenFinetune}) {
    if (name == train_mode_name(m)) return m;
  }
  throw ValueError("unknown training mode '" + name + "'");
}

void TrainSchedule::validate() const {
  auto fail = [](const std::string& what) { throw ValueError("schedule: " + what); };
  if (total_steps == 0) fail("total_steps must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (accumulation_steps == 0) fail("accumulation_steps must be positive");
  if (mode == TrainMode::kMultitask && restoration_ratio + translation_ratio == 0) {
    fail("interleave ratio must not be 0:0");
  }
  if (mode == TrainMode::kPretrainThenFinetune && pretrain_steps >= total_steps) {
    fail("pretrain_steps must be smaller than total_steps");
  }
  if (!(masking.mask_rate > 0.0 && masking.mask_rate < 1.0)) fail("mask_rate must lie in (0, 1)");
  if (masking.ngram_weights.empty()) fail("ngram_weights must not be empty");
  for (double w : masking.ngram_weights) {
    if (!(w >= 0.0)) fail("ngram_weights must be non-negative");
  }
}

json to_json(const TrainSchedule& s) {
  return {{"mode", train_mode_name(s.mode)},
          {"restoration_ratio", s.restoration_ratio},
          {"translation_ratio", s.translation_ratio},
          {"total_steps", s.total_steps},
          {"pretrain_steps", s.pretrain_steps},
          {"batch_size", s.batch_size},
          {"accumulation_steps", s.accumulation_steps},
          {"log_every", s.log_every},
          {"checkpoint_every", s.checkpoint_every},
          {"eval_every", s.eval_every},
          {"seed", s.seed},
          {"mask_rate", s.masking.mask_rate},
          {"ngram_weights", s.masking.ngram_weights}};
}

TrainSchedule train_schedule_from_json(const json& j) {
  if (!j.is_object()) throw ValueError("schedule: section must be an object");
  TrainSchedule s;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "mode") s.mode = train_mode_from_name(v.get<std::string>());
      else if (key == "restoration_ratio") s.restoration_ratio = v.get<std::size_t>();
      else if (key == "translation_ratio") s.translation_ratio = v.get<std::size_t>();
      else if (key == "total_steps") s.total_steps = v.get<std::size_t>();
      else if (key == "pretrain_steps") s.pretrain_steps = v.get<std::size_t>();
      else if (key == "batch_size") s.batch_size = v.get<std::size_t>();
      else if (key == "accumulation_steps") s.accumulation_steps = v.get<std::size_t>();
      else if (key == "log_every") s.log_every = v.get<std::size_t>();
      else if (key == "checkpoint_every") s.checkpoint_every = v.get<std::size_t>();
      else if (key == "eval_every") s.eval_every = v.get<std::size_t>();
      else if (key == "seed") s.seed = v.get<std::uint64_t>();
      else if (key == "mask_rate") s.masking.mask_rate = v.get<double>();
      else if (key == "ngram_weights") s.masking.ngram_weights = v.get<std::vector<double>>();
      else throw ValueError("schedule: unknown key '" + key + "'");
    } catch (const json::exception& e) {
      throw ValueError("schedule: bad value for '" + key + "': " + e.what());
    }
  }
  s.validate();
  return s;
}

LossKind loss_for_step(const TrainSchedule& s, std::size_t step) {
  switch (s.mode) {
    case TrainMode::kTranslationOnly: return LossKind::kTranslation;
    case TrainMode::kRestorationOnly: return LossKind::kRestoration;
    case TrainMode::kPretrainThenFinetune:
      return step < pretrain_steps(s) ? LossKind::kRestoration : LossKind::kTranslation;
    case TrainMode::kMultitask: {
      const std::size_t cycle = s.restoration_ratio + s.translation_ratio;
      return step % cycle < s.restoration_ratio ? LossKind::kRestoration : LossKind::kTranslation;
    }
  }
  return LossKind::kTranslation;
}

json to_json(const MetricRecord& r) {
  json j = {{"step", r.step}, {"lr", r.lr}};
  j["loss_rst"] = r.loss_rst ? json(*r.loss_rst) : json(nullptr);
  j["loss_trs"] = r.loss_trs ? json(*r.loss_trs) : json(nullptr);
  return j;
}

double accumulate_restoration(Model& model, const MaskedBatch& batch, std::uint64_t graph_seed) {
  Graph g(Graph::Mode::kTrain, graph_seed);
  Tensor loss = mlm_loss(g, model, batch);
  const double value = loss.item();
  g.backward(loss);
  return value;
}

double accumulate_translation(Model& model, const PairedBatch& batch, std::uint64_t graph_seed) {
  Graph g(Graph::Mode::kTrain, graph_seed);
  Tensor loss = translation_loss(g, model, batch);
  const double value = loss.item();
  g.backward(loss);
  return value;
}

std::size_t Trainer::Stream::next(std::uint64_t seed) {
  const std::size_t e = drawn / size;
  if (e != epoch) {
    order.resize(size);
    for (std::size_t i = 0; i < size; ++i) order[i] = i;
    Rng rng(mix(mix(seed, salt), e));
    shuffle(order, rng);
    epoch = e;
  }
  return order[drawn++ % size];
}

Trainer::Trainer(Model& model, OptimizerConfig optimizer, TrainSchedule schedule, TrainingData data)
    : model_(model),
      optimizer_config_(std::move(optimizer)),
      schedule_(std::move(schedule)),
      data_(std::move(data)) {
  schedule_.validate();
  bool needs_rst = false, needs_trs = false;
  for (std::size_t s = 0; s < schedule_.total_steps && !(needs_rst && needs_trs); ++s) {
    (loss_for_step(schedule_, s) == LossKind::kRestoration ? needs_rst : needs_trs) = true;
  }
  if (needs_rst && data_.restoration.empty()) throw ValueError("trainer: schedule needs restoration data");
  if (needs_trs && data_.paired.empty()) throw ValueError("trainer: schedule needs paired data");
  for (const auto& s : data_.restoration) {
    if (s.empty()) throw ValueError("trainer: empty restoration sentence");
  }
  rst_stream_.size = data_.restoration.size();
  rst_stream_.salt = kRestorationSalt;
  trs_stream_.size = data_.paired.size();
  trs_stream_.salt = kTranslationSalt;
  optimizer_ = make_optimizer(0);
}

Optimizer Trainer::make_optimizer(std::size_t step) const {
  OptimizerConfig c = optimizer_config_;
  if (schedule_.mode == TrainMode::kPretrainThenFinetune) {
    const std::size_t p = pretrain_steps(schedule_);
    c.total_steps = step < p ? p : schedule_.total_steps - p;
  } else {
    c.total_steps = schedule_.total_steps;
  }
  return Optimizer(c, model_.params().blocks());
}

std::vector<std::size_t> Trainer::draw(Stream& stream) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < schedule_.batch_size; ++i) idx.push_back(stream.next(schedule_.seed));
  return idx;
}

MaskedBatch Trainer::next_restoration_batch(std::uint64_t step_seed) {
  Rng rng(step_seed);
  MaskedBatch batch;
  for (std::size_t i : draw(rst_stream_)) batch.push_back(mask_ngram(data_.restoration[i], schedule_.masking, rng));
  return batch;
}

PairedBatch Trainer::next_translation_batch() {
  PairedBatch batch;
  for (std::size_t i : draw(trs_stream_)) batch.push_back(data_.paired[i]);
  return batch;
}

void Trainer::sync_streams() {
  std::size_t rst = 0, trs = 0;
  for (std::size_t s = 0; s < step_; ++s) {
    (loss_for_step(schedule_, s) == LossKind::kRestoration ? rst : trs) += 1;
  }
  const std::size_t per_step = schedule_.batch_size * schedule_.accumulation_steps;
  rst_stream_.drawn = rst * per_step;
  trs_stream_.drawn = trs * per_step;
  rst_stream_.epoch = trs_stream_.epoch = static_cast<std::size_t>(-1);
}

void Trainer::resume(const fs::path& checkpoint) {
  auto manifest = read_manifest(checkpoint);
  if (manifest.model != model_.config()) throw ValueError("resume: checkpoint model config differs");
  const std::string tensors = read_file(checkpoint / "tensors.bin");
  deserialize_tensors(tensors, model_.params().blocks());
  step_ = manifest.step;
  optimizer_ = make_optimizer(step_);
  if (has_optimizer_state(checkpoint)) load_optimizer_state(checkpoint, optimizer_);
  sync_streams();
}

TrainResult Trainer::run(const TrainOutputs& out, const TrainHooks& hooks) {
  TrainResult result;
  std::ofstream log_file;
  if (out.metrics_log) {
    fs::create_directories(out.metrics_log->parent_path());
    log_file.open(*out.metrics_log, step_ == 0 ? std::ios::trunc : std::ios::app);
    if (!log_file) throw Error("cannot write metric log " + out.metrics_log->string());
  }
  if (out.checkpoint_dir) fs::create_directories(*out.checkpoint_dir);

  // Rollback target for divergence.
  std::string good_tensors = serialize_tensors(model_.params().blocks());
  json last_metrics = json::object();
  double sum_rst = 0.0, sum_trs = 0.0;
  std::size_t n_rst = 0, n_trs = 0;
  const double k = static_cast<double>(schedule_.accumulation_steps);

  auto flush_log = [&](std::size_t step, double lr) {
    MetricRecord r;
    r.step = step;
    r.lr = lr;
    if (n_rst) r.loss_rst = sum_rst / static_cast<double>(n_rst);
    if (n_trs) r.loss_trs = sum_trs / static_cast<double>(n_trs);
    sum_rst = sum_trs = 0.0;
    n_rst = n_trs = 0;
    result.log.push_back(r);
    if (log_file) log_file << to_json(r).dump() << '\n' << std::flush;
    if (hooks.on_log) hooks.on_log(r);
  };

  auto write_checkpoint = [&](std::size_t step) {
    good_tensors = serialize_tensors(model_.params().blocks());
    if (!out.checkpoint_dir) return;
    const fs::path dir = *out.checkpoint_dir / step_dir_name(step);
    json extra = out.extra;
    extra["schedule"] = to_json(schedule_);
    extra["optimizer"] = to_json(optimizer_config_);
    save_checkpoint(dir, {&model_, &optimizer_, out.hanja_vocab, out.korean_vocab, step, last_metrics, extra});
    write_file_atomic(*out.checkpoint_dir / "latest", step_dir_name(step) + "\n");
    result.last_checkpoint = dir;
  };

  const std::size_t phase_switch =
      schedule_.mode == TrainMode::kPretrainThenFinetune ? pretrain_steps(schedule_) : 0;
  double lr = 0.0;
  while (step_ < schedule_.total_steps) {
    if (phase_switch && step_ == phase_switch) optimizer_ = make_optimizer(step_);
    const LossKind kind = loss_for_step(schedule_, step_);
    try {
      double loss = 0.0;
      for (std::size_t micro = 0; micro < schedule_.accumulation_steps; ++micro) {
        const std::uint64_t seed = mix(mix(schedule_.seed, step_), micro);
        loss += kind == LossKind::kRestoration
                    ? accumulate_restoration(model_, next_restoration_batch(seed), seed)
                    : accumulate_translation(model_, next_translation_batch(), seed);
      }
      loss /= k;
      if (!std::isfinite(loss)) throw NumericError("non-finite loss");
      lr = optimizer_.step(model_.params().blocks(), 1.0 / k).lr;
      if (kind == LossKind::kRestoration) {
        sum_rst += loss;
        ++n_rst;
        ++result.restoration_steps;
      } else {
        sum_trs += loss;
        ++n_trs;
        ++result.translation_steps;
      }
    } catch (const NumericError& e) {
      model_.params().clear_grads();
      deserialize_tensors(good_tensors, model_.params().blocks());
      result.diverged = true;
      result.message = "diverged at step " + std::to_string(step_ + 1) + ": " + e.what();
      break;
    }
    ++step_;
    ++result.steps_completed;
    if (schedule_.log_every && step_ % schedule_.log_every == 0) flush_log(step_, lr);
    if (schedule_.eval_every && hooks.on_eval && step_ % schedule_.eval_every == 0) {
      last_metrics = hooks.on_eval(model_, step_);
    }
    if (schedule_.checkpoint_every && step_ % schedule_.checkpoint_every == 0) write_checkpoint(step_);
  }
  if (!result.diverged) {
    if (n_rst || n_trs) flush_log(step_, lr);
    if (!schedule_.checkpoint_every || step_ % schedule_.checkpoint_every != 0) write_checkpoint(step_);
  }
  return result;
}

}  // namespace hmt
