// SPDX-License-Identifier: Apache-2.0
#include "hmt/tokenizer.hpp"

#include "hmt/error.hpp"
#include "hmt/utf8.hpp"

namespace hmt {

Tokenizer::Tokenizer(Vocab vocab) : vocab_(std::move(vocab)) {
  if (vocab_.side() == Side::kKorean) {
    std::vector<UnigramModel::Piece> pieces;
    for (std::size_t i = special::kCount; i < vocab_.size(); ++i) {
      const auto id = static_cast<TokenId>(i);
      const auto lp = vocab_.logprob(id);
      if (!lp) throw FormatError("korean vocabulary row " + std::to_string(i) + " has no log-probability");
      pieces.push_back({utf8::decode(vocab_.token(id)), *lp});
    }
    subwords_ = std::make_shared<const UnigramModel>(std::move(pieces));
  }
}

std::vector<std::string> Tokenizer::pieces(std::string_view text) const {
  if (vocab_.side() == Side::kHanja) return utf8::split_chars(text);
  return subwords_->segment(text);
}

std::vector<TokenId> Tokenizer::encode(std::string_view text, bool frame) const {
  if (text.empty()) throw ValueError("encode: empty text");
  std::vector<TokenId> ids;
  if (frame) ids.push_back(special::kBos);
  for (const auto& p : pieces(text)) ids.push_back(vocab_.id(p));
  if (ids.size() == (frame ? 1u : 0u)) throw ValueError("encode: text has no tokens");
  if (frame) ids.push_back(special::kEos);
  return ids;
}

std::vector<std::string> Tokenizer::tokens(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  for (TokenId id : ids) {
    if (id == special::kPad || id == special::kBos || id == special::kEos) continue;
    out.push_back(vocab_.token(id));
  }
  return out;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string joined;
  for (const auto& t : tokens(ids)) joined += t;
  return vocab_.side() == Side::kKorean ? denormalize_subwords(joined) : joined;
}

Vocab build_korean_vocab(const UnigramModel& model, const std::vector<std::string>& corpus,
                         std::size_t max_size) {
  std::vector<std::vector<std::string>> segmented;
  segmented.reserve(corpus.size());
  for (const auto& line : corpus) segmented.push_back(model.segment(line));
  const auto logprobs = model.logprob_table();
  // Characters the model could not cover have no score and are left to UNK.
  for (auto& s : segmented) {
    std::erase_if(s, [&](const std::string& p) { return !logprobs.contains(p); });
  }
  return build_vocab(segmented, Side::kKorean, VocabOptions{0, max_size}, &logprobs);
}

}  // namespace hmt
