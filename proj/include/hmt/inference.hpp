// SPDX-License-Identifier: Apache-2.0
//
// Top-K restoration of damaged positions and beam-search translation with
// length normalization.
#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmt/corpus.hpp"
#include "hmt/model.hpp"

namespace hmt {

/// raw / ((5 + length) / 6)^alpha. Throws ValueError for length 0.
double length_normalized_score(double raw_logprob, std::size_t length, double alpha);

struct Hypothesis {
  std::vector<TokenId> tokens;  // BOS first
  double raw_logprob = 0.0;
  bool finished = false;
  double score = 0.0;

  /// Generated tokens, EOS included, BOS excluded.
  std::size_t length() const { return tokens.empty() ? 0 : tokens.size() - 1; }
  bool operator==(const Hypothesis&) const = default;
};

struct DecodeOptions {
  std::size_t beam_size = 3;
  std::size_t max_len = 300;
  double alpha = 0.6;

  void validate() const;
  bool operator==(const DecodeOptions&) const = default;
};

nlohmann::json to_json(const DecodeOptions& options);
DecodeOptions decode_options_from_json(const nlohmann::json& j);

/// Argmax decoding; ties go to the smaller token id.
Hypothesis greedy_decode(const Model& model, std::span<const TokenId> source, std::size_t max_len,
                         double alpha);

struct BeamResult {
  Hypothesis best;
  /// Every finished hypothesis, best normalized score first.
  std::vector<Hypothesis> finished;
};

/// Standard beam search: each step ranks all (hypothesis, token) extensions
/// by raw log-probability (ties: hypothesis order, then token id); EOS
/// extensions within the top beam_size become finished, the best beam_size
/// other extensions stay live. Stops once beam_size hypotheses are finished
/// or max_len tokens were generated.
BeamResult beam_decode(const Model& model, std::span<const TokenId> source, const DecodeOptions& options);

struct RestorationCandidate {
  TokenId token = special::kUnk;
  double logprob = 0.0;
  std::size_t rank = 0;  // 1-based
};

struct PositionCandidates {
  std::size_t position = 0;  // token index in the source
  std::vector<RestorationCandidate> candidates;
};

enum class RestoreMode {
  kJoint,   // all damaged positions masked in one forward pass
  kRefill,  // left to right, each filled with its rank-1 candidate before the next
};

/// K ranked candidates (special tokens excluded) for every MASK position of
/// `ids`. Ties in log-probability go to the smaller token id.
std::vector<PositionCandidates> restore_topk(const Model& model, std::span<const TokenId> ids, std::size_t k,
                                             RestoreMode mode = RestoreMode::kJoint);

/// Damage marks are the character U+25A1 (□) or the literal token [MASK].
inline constexpr std::string_view kDamageMark = "\xE2\x96\xA1";
inline constexpr std::string_view kMaskToken = "[MASK]";

struct DamagedText {
  std::vector<std::string> chars;       // one entry per Hanja token; damaged slots hold kDamageMark
  std::vector<std::size_t> positions;   // indices of damaged slots
};

/// Splits text into Hanja characters, normalizing both mark spellings.
DamagedText parse_damaged_text(std::string_view text);
/// Marks extra slots (given as character offsets into the normalized text)
/// as damaged. Throws NotFoundError for an offset past the end.
void mark_damaged(DamagedText& text, const std::vector<std::size_t>& offsets);
std::vector<TokenId> encode_damaged(const DamagedText& text, const Tokenizer& hanja);

/// One line of batch translation output.
struct TranslationRecord {
  std::string id;
  std::string source;
  std::string hypothesis;
  double raw_logprob = 0.0;
  double score = 0.0;
};

nlohmann::json to_json(const TranslationRecord& r);
TranslationRecord translation_record_from_json(const nlohmann::json& j);

/// Encodes, decodes (beam_size 1 means greedy) and detokenizes one sentence.
TranslationRecord translate_text(const Model& model, const Tokenizer& hanja, const Tokenizer& korean,
                                 const std::string& id, const std::string& text, const DecodeOptions& options);

}  // namespace hmt
