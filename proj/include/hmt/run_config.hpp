// SPDX-License-Identifier: Apache-2.0
//
// Run configuration files and the run directory layout shared by the
// command-line tool and the reproduction drivers.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmt/inference.hpp"
#include "hmt/model_config.hpp"
#include "hmt/optimizer.hpp"
#include "hmt/pipeline.hpp"
#include "hmt/service.hpp"
#include "hmt/topics.hpp"
#include "hmt/trainer.hpp"

namespace hmt {

struct TopicsConfig {
  std::string granularity = "month";
  std::string weighting = "raw";
  std::size_t min_frequency = 1;
  std::size_t k = 20;
  double alpha = 0.1;
  std::size_t max_iter = 500;
  double tol = 1e-6;
  std::size_t top_n = 10;
  std::size_t window = 3;
  std::string stopwords;  // file with one stopword per line; empty = built-in list

  TermDateOptions term_date_options() const;
  NmfOptions nmf_options(std::uint64_t seed) const;
  bool operator==(const TopicsConfig&) const = default;
};

nlohmann::json to_json(const TopicsConfig& config);
TopicsConfig topics_config_from_json(const nlohmann::json& j);

/// Every section of a run. Missing keys keep their defaults, unknown keys
/// are rejected. The top-level seed drives the corpus split, parameter
/// initialization, batch order and NMF initialization.
struct RunConfig {
  std::string name = "default";
  std::uint64_t seed = 0;
  CorpusConfig corpus;
  ModelConfig model = desk_model();
  OptimizerConfig optimizer;
  TrainSchedule schedule;
  DecodeOptions decode;
  TopicsConfig topics;
  ServeConfig serve;

  /// 64/128/512, 4 heads, 2 layers per stack, 64 positions per side.
  static ModelConfig desk_model();

  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies "section.key=value" assignments (top-level keys without a
/// section). Values parse as JSON when they can, as strings otherwise.
RunConfig apply_overrides(const RunConfig& config, const std::vector<std::string>& assignments);

/// runs/<name>/{config.json, checkpoints/, logs/, reports/, data/}.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path logs() const { return root / "logs"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path data() const { return root / "data"; }

  void create() const;
  /// Writes the resolved config, replacing any earlier copy.
  void write_config(const RunConfig& config) const;
};

/// The explicit run directory when given, else $HMT_RUN_ROOT/<name>, else
/// runs/<name>.
RunPaths resolve_run_paths(const std::string& run_dir, const std::string& name);

}  // namespace hmt
