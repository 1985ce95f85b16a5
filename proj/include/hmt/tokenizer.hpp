// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hmt/unigram.hpp"
#include "hmt/vocab.hpp"

namespace hmt {

/// Side-aware text <-> id conversion. Hanja text is split into characters
/// (spaces and punctuation included); Korean text is segmented by the
/// unigram model formed from the vocabulary's scored pieces.
class Tokenizer {
 public:
  explicit Tokenizer(Vocab vocab);

  const Vocab& vocab() const { return vocab_; }
  Side side() const { return vocab_.side(); }

  std::vector<std::string> pieces(std::string_view text) const;
  /// Unknown pieces map to UNK. With `frame`, wraps the ids in BOS ... EOS.
  std::vector<TokenId> encode(std::string_view text, bool frame = false) const;
  /// Concatenates tokens, skipping PAD/BOS/EOS. Korean boundary markers
  /// become single spaces.
  std::string decode(std::span<const TokenId> ids) const;
  /// Token strings without joining, specials skipped except UNK/MASK.
  std::vector<std::string> tokens(std::span<const TokenId> ids) const;

 private:
  Vocab vocab_;
  std::shared_ptr<const UnigramModel> subwords_;
};

/// Korean vocabulary from a trained unigram model: pieces ranked by their
/// Viterbi frequency over `corpus`, capped at `max_size` entries including
/// specials, each row carrying the piece log-probability.
Vocab build_korean_vocab(const UnigramModel& model, const std::vector<std::string>& corpus,
                         std::size_t max_size);

}  // namespace hmt
