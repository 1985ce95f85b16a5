// SPDX-License-Identifier: Apache-2.0
//
// Rectified Adam with a per-block trust ratio ||w|| / ||u||.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmt/model.hpp"

namespace hmt {

enum class LrSchedule { kConstant, kLinearDecay };

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double trust_min = 0.01;
  double trust_max = 10.0;
  bool trust_ratio = true;
  /// Fraction of total_steps spent in linear warmup.
  double warmup_fraction = 0.06;
  LrSchedule schedule = LrSchedule::kLinearDecay;
  std::size_t total_steps = 0;  // 0 disables warmup and decay

  void validate() const;
  bool operator==(const OptimizerConfig&) const = default;
};

nlohmann::json to_json(const OptimizerConfig& config);
OptimizerConfig optimizer_config_from_json(const nlohmann::json& j);

/// One named block with its moments. `updates` counts the steps in which the
/// block received a gradient and drives its bias correction.
struct MomentState {
  std::string name;
  std::vector<float> m, v;
  std::uint64_t updates = 0;
};

struct StepReport {
  double lr = 0.0;
  std::size_t blocks_updated = 0;
};

class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerConfig config, const std::vector<NamedBlock>& blocks);

  const OptimizerConfig& config() const { return config_; }
  /// Optimizer steps taken so far, over both losses.
  std::uint64_t step_count() const { return step_; }
  double learning_rate(std::uint64_t step) const;

  /// Applies one update to every block holding a gradient, after scaling the
  /// gradient by grad_scale (1/k for k accumulated micro-batches). Blocks
  /// without a gradient are left untouched. Gradients are cleared. A
  /// non-finite gradient throws NumericError before any parameter or moment
  /// changes.
  StepReport step(std::vector<NamedBlock>& blocks, double grad_scale = 1.0);

  const std::vector<MomentState>& moments() const { return moments_; }

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  OptimizerConfig config_;
  std::uint64_t step_ = 0;
  std::vector<MomentState> moments_;
};

}  // namespace hmt
