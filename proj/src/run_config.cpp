// SPDX-License-Identifier: Apache-2.0
#include "hmt/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hmt/checkpoint.hpp"
#include "hmt/error.hpp"

namespace hmt {

using json = nlohmann::json;

namespace {

json merged(json base, const json& patch) {
  if (!patch.is_object()) throw ValueError("model config must be a JSON object");
  base.update(patch);
  return base;
}

}  // namespace

TermDateOptions TopicsConfig::term_date_options() const {
  TermDateOptions o;
  o.granularity = date_granularity_from_name(granularity);
  o.weighting = term_weighting_from_name(weighting);
  o.min_frequency = min_frequency;
  return o;
}

NmfOptions TopicsConfig::nmf_options(std::uint64_t seed) const {
  return {k, alpha, max_iter, tol, seed};
}

json to_json(const TopicsConfig& c) {
  return {{"granularity", c.granularity}, {"weighting", c.weighting}, {"min_frequency", c.min_frequency},
          {"k", c.k},                     {"alpha", c.alpha},         {"max_iter", c.max_iter},
          {"tol", c.tol},                 {"top_n", c.top_n},         {"window", c.window},
          {"stopwords", c.stopwords}};
}

TopicsConfig topics_config_from_json(const json& j) {
  if (!j.is_object()) throw ValueError("topics config must be an object");
  TopicsConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "granularity") c.granularity = v.get<std::string>();
      else if (key == "weighting") c.weighting = v.get<std::string>();
      else if (key == "min_frequency") c.min_frequency = v.get<std::size_t>();
      else if (key == "k") c.k = v.get<std::size_t>();
      else if (key == "alpha") c.alpha = v.get<double>();
      else if (key == "max_iter") c.max_iter = v.get<std::size_t>();
      else if (key == "tol") c.tol = v.get<double>();
      else if (key == "top_n") c.top_n = v.get<std::size_t>();
      else if (key == "window") c.window = v.get<std::size_t>();
      else if (key == "stopwords") c.stopwords = v.get<std::string>();
      else throw ValueError("unknown topics key '" + key + "'");
    } catch (const json::exception& e) {
      throw ValueError("topics." + key + ": " + e.what());
    }
  }
  // Names are checked here so a bad file fails at load time.
  c.term_date_options();
  if (c.window == 0) throw ValueError("topics.window must be positive");
  return c;
}

ModelConfig RunConfig::desk_model() {
  ModelConfig m;
  m.d_emb = 64;
  m.d_model = 128;
  m.d_ffn = 512;
  m.n_heads = 4;
  m.layers_shared = 2;
  m.layers_restore = 2;
  m.layers_decoder = 2;
  m.max_len_hanja = 64;
  m.max_len_korean = 64;
  return m;
}

json to_json(const RunConfig& c) {
  return {{"name", c.name},
          {"seed", c.seed},
          {"corpus", to_json(c.corpus)},
          {"model", to_json(c.model)},
          {"optimizer", to_json(c.optimizer)},
          {"schedule", to_json(c.schedule)},
          {"decode", to_json(c.decode)},
          {"topics", to_json(c.topics)},
          {"serve", to_json(c.serve)}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ValueError("config must be a JSON object");
  RunConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "name") c.name = v.get<std::string>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "corpus") c.corpus = corpus_config_from_json(v);
      else if (key == "model") c.model = model_config_from_json(merged(to_json(RunConfig::desk_model()), v));
      else if (key == "optimizer") c.optimizer = optimizer_config_from_json(v);
      else if (key == "schedule") c.schedule = train_schedule_from_json(v);
      else if (key == "decode") c.decode = decode_options_from_json(v);
      else if (key == "topics") c.topics = topics_config_from_json(v);
      else if (key == "serve") c.serve = serve_config_from_json(v);
      else throw ValueError("unknown config section '" + key + "'");
    } catch (const json::exception& e) {
      throw ValueError("config." + key + ": " + e.what());
    }
  }
  if (c.name.empty() || c.name.find('/') != std::string::npos) {
    throw ValueError("config.name must be a non-empty directory name");
  }
  c.schedule.seed = c.seed;
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

RunConfig apply_overrides(const RunConfig& config, const std::vector<std::string>& assignments) {
  json j = to_json(config);
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw ValueError("override '" + a + "' is not key=value");
    const std::string path = a.substr(0, eq);
    const std::string text = a.substr(eq + 1);
    json* node = &j;
    std::stringstream keys(path);
    std::string key;
    std::vector<std::string> parts;
    while (std::getline(keys, key, '.')) parts.push_back(key);
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (!node->is_object() || !node->contains(parts[i])) {
        throw ValueError("override '" + a + "': unknown key '" + path + "'");
      }
      node = &(*node)[parts[i]];
    }
    json value = json::parse(text, nullptr, false);
    *node = value.is_discarded() ? json(text) : value;
  }
  return run_config_from_json(j);
}

void RunPaths::create() const {
  for (const auto& d : {root, checkpoints(), logs(), reports(), data()}) std::filesystem::create_directories(d);
}

void RunPaths::write_config(const RunConfig& config) const {
  std::filesystem::create_directories(root);
  write_file_atomic(this->config(), to_json(config).dump(2) + "\n");
}

RunPaths resolve_run_paths(const std::string& run_dir, const std::string& name) {
  if (!run_dir.empty()) return {run_dir};
  const char* root = std::getenv("HMT_RUN_ROOT");
  return {std::filesystem::path(root && *root ? root : "runs") / name};
}

}  // namespace hmt
