// SPDX-License-Identifier: Apache-2.0
//
// Unigram-language-model subword segmentation: EM over the segmentation
// lattice with iterative pruning of the least useful pieces.
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace hmt {

/// Marks the start of every whitespace-separated word ("▁").
inline constexpr char32_t kWordBoundary = U'▁';
inline constexpr std::string_view kWordBoundaryUtf8 = "\xE2\x96\x81";

/// Collapses whitespace and prefixes each word with the boundary marker.
std::u32string normalize_for_subwords(std::string_view text);
/// Inverse of normalize_for_subwords for a concatenation of pieces.
std::string denormalize_subwords(std::string_view pieces);

struct UnigramTrainerOptions {
  /// Number of pieces in the final model (specials not included).
  std::size_t vocab_size = 8000;
  std::size_t max_piece_length = 8;
  std::size_t seed_size = 200000;
  std::size_t em_rounds = 2;
  /// Fraction of pieces kept by each pruning step.
  double shrink_factor = 0.8;
};

class UnigramModel {
 public:
  struct Piece {
    std::u32string text;
    double logprob = 0.0;
  };

  UnigramModel() = default;
  explicit UnigramModel(std::vector<Piece> pieces);

  const std::vector<Piece>& pieces() const { return pieces_; }
  std::size_t size() const { return pieces_.size(); }

  /// Viterbi-best segmentation of raw text, one UTF-8 string per piece.
  /// Characters the model cannot cover come back as single-character pieces.
  std::vector<std::string> segment(std::string_view text) const;
  /// Viterbi over already-normalized code points; -1 marks an uncovered char.
  std::vector<int> viterbi(std::u32string_view normalized, int excluded = -1) const;
  double total_logprob(std::u32string_view normalized) const;
  /// Pieces matching `text` at `pos`, as (piece index, length) pairs.
  std::vector<std::pair<int, std::size_t>> matches_at(std::u32string_view text,
                                                      std::size_t pos) const;

  std::unordered_map<std::string, double> logprob_table() const;

 private:
  struct TrieNode {
    std::unordered_map<char32_t, int> next;
    int piece = -1;
  };
  void build_trie();

  std::vector<Piece> pieces_;
  std::vector<TrieNode> trie_;
  double unknown_logprob_ = -100.0;
};

/// Trains on raw sentences. Throws ValueError on an empty corpus or when the
/// requested size is smaller than the number of distinct characters.
UnigramModel train_unigram(const std::vector<std::string>& corpus,
                           const UnigramTrainerOptions& options);

}  // namespace hmt
