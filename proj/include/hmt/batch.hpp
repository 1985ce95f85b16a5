// SPDX-License-Identifier: Apache-2.0
//
// Token-level batch types shared by the corpus, model and training code.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace hmt {

using TokenId = std::int32_t;

enum class Side { kHanja, kKorean };

const char* side_name(Side side);
Side side_from_name(const char* name);

/// Reserved ids, identical for both vocabularies.
namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kMask = 2;
inline constexpr TokenId kBos = 3;
inline constexpr TokenId kEos = 4;
inline constexpr TokenId kCount = 5;
}  // namespace special

/// Target value for positions that carry no loss.
inline constexpr TokenId kIgnoreId = -1;

/// Right-padded batch of token sequences, packed row-major as [batch, length].
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> pad;  // 1 marks a PAD position
  std::vector<std::size_t> lengths;

  static TokenBatch pack(const std::vector<std::vector<TokenId>>& sequences);
  std::size_t rows() const { return batch * length; }
};

/// One sentence after masking: inputs carry MASK substitutions, targets hold
/// the original token at masked positions and kIgnoreId elsewhere.
struct MaskedSentence {
  struct Span {
    std::size_t start = 0;
    std::size_t length = 0;
  };
  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
  std::vector<Span> spans;

  std::size_t masked_count() const;
};

using MaskedBatch = std::vector<MaskedSentence>;

/// Hanja source ids and BOS...EOS framed Korean target ids.
struct PairedExample {
  std::vector<TokenId> source;
  std::vector<TokenId> target;
};

using PairedBatch = std::vector<PairedExample>;

}  // namespace hmt
