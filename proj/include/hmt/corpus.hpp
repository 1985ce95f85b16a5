// SPDX-License-Identifier: Apache-2.0
//
// Corpus records, length filtering, train/test splitting and n-gram masking.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hmt/batch.hpp"
#include "hmt/random.hpp"
#include "hmt/tokenizer.hpp"

namespace hmt {

/// One line of a corpus file: {id, side, text, date?, pair_id?}.
struct CorpusRecord {
  std::string id;
  Side side = Side::kHanja;
  std::string text;
  std::optional<std::string> date;
  std::optional<std::string> pair_id;

  bool operator==(const CorpusRecord&) const = default;
};

std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const std::vector<CorpusRecord>& records);
CorpusRecord parse_corpus_line(const std::string& line);
std::string format_corpus_line(const CorpusRecord& record);

struct Sentence {
  std::string text;
  std::vector<TokenId> ids;
  Side side = Side::kHanja;
  std::optional<std::string> date;
  std::optional<std::string> pair_id;
};

/// Tokenizes a record with the tokenizer of its side. Korean sentences get
/// BOS/EOS framing when `frame_korean` is set.
Sentence encode_sentence(const CorpusRecord& record, const Tokenizer& tokenizer,
                         bool frame_korean = false);

struct LengthBounds {
  std::size_t min_hanja = 4;
  std::size_t max_hanja = 350;
  std::size_t min_korean = 4;
  std::size_t max_korean = 300;

  bool keep_hanja(std::size_t n) const { return n >= min_hanja && n <= max_hanja; }
  bool keep_korean(std::size_t n) const { return n >= min_korean && n <= max_korean; }

  bool operator==(const LengthBounds&) const = default;
};

struct ParallelPair {
  CorpusRecord hanja;
  CorpusRecord korean;
};

/// Paired (h_i, k_i) records plus the Hanja records that have no translation.
struct ParallelCorpus {
  std::vector<ParallelPair> paired;
  std::vector<CorpusRecord> unpaired;
};

/// Groups records by pair_id. Every pair_id must name exactly one Hanja and
/// one Korean record; Hanja records without a pair_id are unpaired.
ParallelCorpus group_pairs(const std::vector<CorpusRecord>& records);

struct SplitOptions {
  LengthBounds bounds;
  std::size_t paired_test_size = 0;
  std::size_t unpaired_test_size = 0;
  std::uint64_t seed = 0;
};

struct CorpusSplits {
  std::vector<ParallelPair> paired_train, paired_test;
  std::vector<CorpusRecord> unpaired_train, unpaired_test;
  std::size_t dropped_paired = 0;
  std::size_t dropped_unpaired = 0;
};

/// Drops sentences outside the token-length bounds (a pair goes if either
/// side fails), then draws the test sets uniformly with the given seed.
CorpusSplits filter_and_split(const ParallelCorpus& corpus, const Tokenizer& hanja,
                              const Tokenizer& korean, const SplitOptions& options);

struct MaskingOptions {
  double mask_rate = 0.15;
  /// Relative weights of span lengths 1, 2, 3.
  std::vector<double> ngram_weights = {1.0, 1.0, 1.0};

  bool operator==(const MaskingOptions&) const = default;
};

/// Covers ceil(mask_rate * len) positions with non-overlapping spans whose
/// lengths are drawn from ngram_weights (clipped to what is still needed).
MaskedSentence mask_ngram(std::span<const TokenId> ids, const MaskingOptions& options, Rng& rng);

}  // namespace hmt
