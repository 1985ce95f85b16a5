// SPDX-License-Identifier: Apache-2.0
//
// Corpus preparation: subword training, vocabularies, length filtering and
// train/test splits, plus conversion of the splits to token ids.
#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "hmt/corpus.hpp"
#include "hmt/model_config.hpp"
#include "hmt/trainer.hpp"
#include "hmt/unigram.hpp"

namespace hmt {

struct CorpusConfig {
  std::string path;  // JSON-lines corpus; empty when records come from elsewhere
  LengthBounds bounds;
  std::size_t paired_test_size = 0;
  std::size_t unpaired_test_size = 0;
  std::size_t hanja_min_count = 10;
  std::size_t hanja_max_size = 0;
  std::size_t korean_vocab_size = 24000;  // including specials
  std::size_t subword_max_piece_length = 8;
  std::size_t subword_em_rounds = 2;

  bool operator==(const CorpusConfig&) const = default;
};

nlohmann::json to_json(const CorpusConfig& config);
CorpusConfig corpus_config_from_json(const nlohmann::json& j);

struct PreparedCorpus {
  Vocab hanja{Side::kHanja};
  Vocab korean{Side::kKorean};
  CorpusSplits splits;
};

/// Trains the Korean subword model on all Korean text, filters by length,
/// splits with `seed`, then counts both vocabularies on the training split.
PreparedCorpus prepare_corpus(const std::vector<CorpusRecord>& records, const CorpusConfig& config,
                              std::uint64_t seed);

/// dir/{hanja.vocab, korean.vocab, train.jsonl, test.jsonl, summary.json}.
void save_prepared(const PreparedCorpus& prepared, const std::filesystem::path& dir);
PreparedCorpus load_prepared(const std::filesystem::path& dir);
nlohmann::json prepared_summary(const PreparedCorpus& prepared);

/// Records of a split, pairs first (Hanja then Korean record per pair).
std::vector<CorpusRecord> split_records(const std::vector<ParallelPair>& paired,
                                        const std::vector<CorpusRecord>& unpaired);

/// Sets vocab_hanja / vocab_korean from the vocabularies.
ModelConfig with_vocab_sizes(ModelConfig config, const Vocab& hanja, const Vocab& korean);

struct EncodedPairs {
  PairedBatch examples;
  std::vector<std::size_t> kept;  // indices into the input pairs
};

/// Encodes pairs (Korean framed BOS ... EOS), skipping those longer than
/// the model's position tables.
EncodedPairs encode_pairs(const std::vector<ParallelPair>& pairs, const Tokenizer& hanja, const Tokenizer& korean,
                          const ModelConfig& model);

/// Restoration sentences are the Hanja side of paired and unpaired training
/// sentences (H together with the unpaired set).
TrainingData make_training_data(const CorpusSplits& splits, const Tokenizer& hanja, const Tokenizer& korean,
                                const ModelConfig& model);

}  // namespace hmt
