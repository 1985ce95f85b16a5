// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint directories:
//   manifest.json   model config, vocab hashes, step, metrics, id
//   tensors.bin     named parameter blocks (little-endian f32)
//   optimizer.bin   optimizer moments (optional)
//   hanja.vocab / korean.vocab (optional)
// A checkpoint is written to a sibling temp directory and renamed into place.
#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "hmt/model.hpp"
#include "hmt/optimizer.hpp"
#include "hmt/vocab.hpp"

namespace hmt {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointManifest {
  int version = kCheckpointVersion;
  std::string id;  // hash of tensors.bin
  std::uint64_t step = 0;
  ModelConfig model;
  std::optional<std::string> hanja_vocab_hash, korean_vocab_hash;
  nlohmann::json metrics = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();
};

/// Serialized tensor payload: magic, block count, then per block the name,
/// rank, dims and values.
std::string serialize_tensors(const std::vector<NamedBlock>& blocks);
/// Copies a payload into blocks with matching names and shapes; every block
/// must be present exactly once.
void deserialize_tensors(std::string_view bytes, std::vector<NamedBlock>& blocks);

struct CheckpointContents {
  const Model* model = nullptr;
  const Optimizer* optimizer = nullptr;
  const Vocab* hanja_vocab = nullptr;
  const Vocab* korean_vocab = nullptr;
  std::uint64_t step = 0;
  nlohmann::json metrics = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();
};

/// Writes atomically; an existing checkpoint at `dir` is replaced. Returns
/// the manifest written.
CheckpointManifest save_checkpoint(const std::filesystem::path& dir, const CheckpointContents& contents);

struct LoadedCheckpoint {
  std::filesystem::path path;
  CheckpointManifest manifest;
  Model model;
  std::optional<Vocab> hanja_vocab, korean_vocab;
};

CheckpointManifest read_manifest(const std::filesystem::path& dir);
/// Throws NotFoundError if the directory or a required file is missing and
/// FormatError on corrupt contents or vocabulary hash mismatches.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);
bool has_optimizer_state(const std::filesystem::path& dir);
void load_optimizer_state(const std::filesystem::path& dir, Optimizer& optimizer);

/// Writes `text` to `path` through a temp file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view text);
std::string read_file(const std::filesystem::path& path);

}  // namespace hmt
