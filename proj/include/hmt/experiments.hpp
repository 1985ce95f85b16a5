// SPDX-License-Identifier: Apache-2.0
//
// Held-out evaluation helpers and the toy-scale reproductions of the
// restoration (HITS@K) and translation (BLEU) comparisons.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmt/evaluation.hpp"
#include "hmt/inference.hpp"
#include "hmt/pipeline.hpp"
#include "hmt/synth.hpp"

namespace hmt {

struct TranslationEval {
  EvalReport bleu;
  EvalReport rouge_l;
  std::vector<TranslationRecord> outputs;
};

/// Decodes every pair and scores hypotheses against references on Korean
/// subword tokens.
TranslationEval evaluate_translation(const Model& model, const std::vector<ParallelPair>& pairs,
                                     const Tokenizer& hanja, const Tokenizer& korean, const DecodeOptions& decode);

/// Masks each sentence with `masking` (seeded) and ranks candidates at the
/// masked positions jointly.
std::vector<EvalReport> evaluate_restoration(const Model& model, const std::vector<std::vector<TokenId>>& sentences,
                                             const MaskingOptions& masking, std::uint64_t seed,
                                             const std::vector<std::size_t>& ks = {1, 5, 10});

/// Toy-scale setup for the table reproductions: a low-resource synthetic
/// corpus (200 pairs, 2000 unpaired sentences, 100 held-out pairs) and a
/// small model. Each seed draws its own corpus, split and initialization;
/// all conditions of a seed share them.
struct ToyExperiment {
  LowResourceOptions data;
  CorpusConfig corpus;
  ModelConfig model;
  OptimizerConfig optimizer;
  std::size_t steps = 3000;
  std::size_t batch_size = 16;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::size_t beam_size = 3;
  std::size_t max_decode_len = 20;
  double alpha = 0.6;
  /// Below this many optimizer steps the reports carry a warning.
  std::size_t recommended_steps = 3000;

  static ToyExperiment standard();
};

nlohmann::json to_json(const ToyExperiment& experiment);
/// Overlays JSON keys (steps, batch_size, seeds, beam_size, lr, ...) on
/// standard(); unknown keys are rejected.
ToyExperiment toy_experiment_from_json(const nlohmann::json& j);

struct ConditionRun {
  TrainMode mode = TrainMode::kMultitask;
  std::uint64_t seed = 0;
  double seconds = 0.0;
  /// Translation scores at beam 1 and at beam_size (empty for restoration_only).
  std::optional<TranslationEval> greedy, beam;
  std::optional<EvalReport> chrf_beam;
  /// HITS@1/5/10 on masked held-out Hanja (empty for translation_only and
  /// pretrain_then_finetune runs unless requested).
  std::vector<EvalReport> hits;
};

struct RunRequest {
  bool translation = true;
  bool restoration = false;
};

ConditionRun run_condition(const ToyExperiment& experiment, TrainMode mode, std::uint64_t seed,
                           const RunRequest& request);

using ProgressFn = std::function<void(const std::string&)>;

/// All seeds of every mode, in seed-major order.
std::vector<ConditionRun> run_grid(const ToyExperiment& experiment, const std::vector<TrainMode>& modes,
                                   const RunRequest& request, const ProgressFn& progress = {});

struct Reproduction {
  std::string table;  // table3 | table5 | table6
  nlohmann::json rows = nlohmann::json::array();
  std::vector<std::string> warnings;
  std::string markdown;

  nlohmann::json to_json() const;
};

/// Mean of a score over the runs of one mode.
double mean_score(const std::vector<ConditionRun>& runs, TrainMode mode,
                  const std::function<double(const ConditionRun&)>& score);

/// Builders from finished runs (restoration_only + multitask with
/// restoration scores; translation_only + multitask; translation_only +
/// multitask + pretrain_then_finetune).
Reproduction table3_report(const ToyExperiment& experiment, const std::vector<ConditionRun>& runs);
Reproduction table5_report(const ToyExperiment& experiment, const std::vector<ConditionRun>& runs);
Reproduction table6_report(const ToyExperiment& experiment, const std::vector<ConditionRun>& runs);

/// Runs the conditions a table needs and builds its report.
Reproduction reproduce(const std::string& table, const ToyExperiment& experiment, const ProgressFn& progress = {});

}  // namespace hmt
