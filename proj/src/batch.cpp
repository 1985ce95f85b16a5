// SPDX-License-Identifier: Apache-2.0
#include "hmt/batch.hpp"

#include <algorithm>
#include <cstring>
#include <string>

#include "hmt/error.hpp"

namespace hmt {

const char* side_name(Side side) { return side == Side::kHanja ? "hanja" : "korean"; }

Side side_from_name(const char* name) {
  if (std::strcmp(name, "hanja") == 0) return Side::kHanja;
  if (std::strcmp(name, "korean") == 0) return Side::kKorean;
  throw ValueError(std::string("unknown side '") + name + "' (expected hanja|korean)");
}

TokenBatch TokenBatch::pack(const std::vector<std::vector<TokenId>>& sequences) {
  if (sequences.empty()) throw ValueError("pack: no sequences");
  TokenBatch b;
  b.batch = sequences.size();
  for (const auto& s : sequences) b.length = std::max(b.length, s.size());
  if (b.length == 0) throw ValueError("pack: all sequences are empty");
  b.ids.assign(b.batch * b.length, special::kPad);
  b.pad.assign(b.batch * b.length, 1);
  for (std::size_t i = 0; i < b.batch; ++i) {
    const auto& s = sequences[i];
    std::copy(s.begin(), s.end(), b.ids.begin() + static_cast<std::ptrdiff_t>(i * b.length));
    std::fill_n(b.pad.begin() + static_cast<std::ptrdiff_t>(i * b.length), s.size(), 0);
    b.lengths.push_back(s.size());
  }
  return b;
}

std::size_t MaskedSentence::masked_count() const {
  return static_cast<std::size_t>(
      std::count_if(targets.begin(), targets.end(), [](TokenId t) { return t != kIgnoreId; }));
}

}  // namespace hmt
