// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

#include <nlohmann/json.hpp>

namespace hmt {

enum class SharingPolicy {
  kAll,            // one attention block and one FFN block per stack
  kAttentionOnly,  // one attention block per stack, per-layer FFN blocks
};

const char* sharing_policy_name(SharingPolicy policy);
SharingPolicy sharing_policy_from_name(const std::string& name);

struct ModelConfig {
  std::size_t d_emb = 256;
  std::size_t d_model = 768;
  std::size_t d_ffn = 3072;
  std::size_t n_heads = 12;
  std::size_t layers_shared = 12;
  std::size_t layers_restore = 6;
  std::size_t layers_decoder = 12;
  std::size_t max_len_hanja = 350;
  std::size_t max_len_korean = 300;
  std::size_t vocab_hanja = 8742;
  std::size_t vocab_korean = 24000;
  SharingPolicy sharing = SharingPolicy::kAttentionOnly;
  double dropout = 0.1;

  /// 256/768/3072, 12 heads, 12 shared + 6 restoration + 12 decoder layers.
  static ModelConfig reference_scale();

  /// Throws ValueError naming the offending field.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace hmt
