// SPDX-License-Identifier: Apache-2.0
#include "hmt/model_config.hpp"

#include <set>

#include "hmt/error.hpp"

namespace hmt {

const char* sharing_policy_name(SharingPolicy policy) {
  return policy == SharingPolicy::kAll ? "all" : "attention_only";
}

SharingPolicy sharing_policy_from_name(const std::string& name) {
  if (name == "all") return SharingPolicy::kAll;
  if (name == "attention_only") return SharingPolicy::kAttentionOnly;
  throw ValueError("unknown sharing_policy '" + name + "' (expected all|attention_only)");
}

ModelConfig ModelConfig::reference_scale() { return ModelConfig{}; }

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ValueError(std::string("model.") + name + " must be positive");
  };
  positive(d_emb, "d_emb");
  positive(d_model, "d_model");
  positive(d_ffn, "d_ffn");
  positive(n_heads, "n_heads");
  positive(layers_shared, "layers_shared");
  positive(layers_restore, "layers_restore");
  positive(layers_decoder, "layers_decoder");
  positive(max_len_hanja, "max_len_hanja");
  positive(max_len_korean, "max_len_korean");
  if (d_model % n_heads != 0) throw ValueError("model.d_model must be divisible by model.n_heads");
  if (vocab_hanja <= 5 || vocab_korean <= 5) {
    throw ValueError("model vocabularies must hold more than the 5 special tokens");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ValueError("model.dropout must be in [0, 1)");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"d_emb", c.d_emb},
      {"d_model", c.d_model},
      {"d_ffn", c.d_ffn},
      {"n_heads", c.n_heads},
      {"layers_shared", c.layers_shared},
      {"layers_restore", c.layers_restore},
      {"layers_decoder", c.layers_decoder},
      {"max_len_hanja", c.max_len_hanja},
      {"max_len_korean", c.max_len_korean},
      {"vocab_hanja", c.vocab_hanja},
      {"vocab_korean", c.vocab_korean},
      {"sharing_policy", sharing_policy_name(c.sharing)},
      {"dropout", c.dropout},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValueError("model config must be a JSON object");
  static const std::set<std::string> known = {
      "d_emb",          "d_model",        "d_ffn",         "n_heads",     "layers_shared",
      "layers_restore", "layers_decoder", "max_len_hanja", "max_len_korean", "vocab_hanja",
      "vocab_korean",   "sharing_policy", "dropout"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ValueError("unknown key 'model." + key + "'");
  }
  ModelConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("d_emb", c.d_emb);
  get("d_model", c.d_model);
  get("d_ffn", c.d_ffn);
  get("n_heads", c.n_heads);
  get("layers_shared", c.layers_shared);
  get("layers_restore", c.layers_restore);
  get("layers_decoder", c.layers_decoder);
  get("max_len_hanja", c.max_len_hanja);
  get("max_len_korean", c.max_len_korean);
  get("vocab_hanja", c.vocab_hanja);
  get("vocab_korean", c.vocab_korean);
  get("dropout", c.dropout);
  if (j.contains("sharing_policy")) c.sharing = sharing_policy_from_name(j.at("sharing_policy"));
  c.validate();
  return c;
}

}  // namespace hmt
