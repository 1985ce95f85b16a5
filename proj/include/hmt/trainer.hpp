// SPDX-License-Identifier: Apache-2.0
//
// Training loop for the restoration and translation losses. In multitask
// mode the two losses take interleaved optimizer steps, each over its own
// accumulated gradient (L = L_rst + L_trs realized in expectation).
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmt/checkpoint.hpp"
#include "hmt/corpus.hpp"
#include "hmt/losses.hpp"
#include "hmt/optimizer.hpp"

namespace hmt {

enum class TrainMode { kMultitask, kTranslationOnly, kRestorationOnly, kPretrainThenFinetune };

const char* train_mode_name(TrainMode mode);
TrainMode train_mode_from_name(const std::string& name);

struct TrainSchedule {
  TrainMode mode = TrainMode::kMultitask;
  /// Restoration : translation optimizer steps per cycle.
  std::size_t restoration_ratio = 1;
  std::size_t translation_ratio = 1;
  /// Optimizer steps over both losses.
  std::size_t total_steps = 1000;
  /// Restoration-only steps before finetuning (pretrain_then_finetune);
  /// 0 means half of total_steps.
  std::size_t pretrain_steps = 0;
  std::size_t batch_size = 16;
  std::size_t accumulation_steps = 1;
  std::size_t log_every = 50;
  std::size_t checkpoint_every = 0;  // 0 = only at the end
  std::size_t eval_every = 0;        // 0 = never
  std::uint64_t seed = 0;
  MaskingOptions masking;

  void validate() const;
  bool operator==(const TrainSchedule&) const = default;
};

nlohmann::json to_json(const TrainSchedule& schedule);
TrainSchedule train_schedule_from_json(const nlohmann::json& j);

/// Token-id corpora. `restoration` is the Hanja side of paired and unpaired
/// sentences; `paired` holds (source, BOS..EOS target) examples.
struct TrainingData {
  std::vector<std::vector<TokenId>> restoration;
  PairedBatch paired;
};

enum class LossKind { kRestoration, kTranslation };

/// Which loss optimizer step `step` (0-based) takes under `schedule`.
LossKind loss_for_step(const TrainSchedule& schedule, std::size_t step);

struct MetricRecord {
  std::size_t step = 0;
  std::optional<double> loss_rst, loss_trs;
  double lr = 0.0;
};

nlohmann::json to_json(const MetricRecord& record);

struct TrainResult {
  std::size_t steps_completed = 0;
  std::size_t restoration_steps = 0;
  std::size_t translation_steps = 0;
  bool diverged = false;
  std::string message;
  std::optional<std::filesystem::path> last_checkpoint;
  std::vector<MetricRecord> log;
};

struct TrainHooks {
  /// Called with every metric record as it is produced.
  std::function<void(const MetricRecord&)> on_log;
  /// Called every eval_every steps with the current model; the returned
  /// object is stored in the checkpoint manifest metrics.
  std::function<nlohmann::json(const Model&, std::size_t step)> on_eval;
};

struct TrainOutputs {
  std::optional<std::filesystem::path> checkpoint_dir;  // checkpoints/step-NNNNNNN
  std::optional<std::filesystem::path> metrics_log;     // JSON lines
  const Vocab* hanja_vocab = nullptr;
  const Vocab* korean_vocab = nullptr;
  nlohmann::json extra = nlohmann::json::object();
};

/// Forward + backward of one restoration micro-batch; gradients accumulate
/// into the model parameters. Returns the loss value.
double accumulate_restoration(Model& model, const MaskedBatch& batch, std::uint64_t graph_seed);
double accumulate_translation(Model& model, const PairedBatch& batch, std::uint64_t graph_seed);

class Trainer {
 public:
  Trainer(Model& model, OptimizerConfig optimizer, TrainSchedule schedule, TrainingData data);

  /// Runs the schedule from the current step to total_steps. On a
  /// non-finite loss or gradient the model is rolled back to the last
  /// checkpoint (or the starting weights) and the run halts.
  TrainResult run(const TrainOutputs& outputs = {}, const TrainHooks& hooks = {});

  /// Restores parameters and optimizer state from a checkpoint written by
  /// this trainer, so that run() continues where it stopped.
  void resume(const std::filesystem::path& checkpoint);

  const Optimizer& optimizer() const { return optimizer_; }
  std::size_t step() const { return step_; }

 private:
  // Sentence draws are a pure function of (seed, stream, draw index), so a
  // resumed run continues with exactly the batches it would have seen.
  struct Stream {
    std::size_t size = 0;
    std::uint64_t salt = 0;
    std::size_t drawn = 0;
    std::size_t epoch = static_cast<std::size_t>(-1);
    std::vector<std::size_t> order;
    std::size_t next(std::uint64_t seed);
  };

  std::vector<std::size_t> draw(Stream& stream);
  MaskedBatch next_restoration_batch(std::uint64_t step_seed);
  PairedBatch next_translation_batch();
  /// Optimizer for the phase containing `step` (the finetuning phase of
  /// pretrain_then_finetune gets a fresh optimizer and lr schedule).
  Optimizer make_optimizer(std::size_t step) const;
  void sync_streams();

  Model& model_;
  OptimizerConfig optimizer_config_;
  TrainSchedule schedule_;
  TrainingData data_;
  Optimizer optimizer_;
  std::size_t step_ = 0;
  Stream rst_stream_, trs_stream_;
};

}  // namespace hmt
