// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hmt/batch.hpp"

namespace hmt {

/// Dense id <-> token table. Ids 0..4 are the reserved specials; frequency
/// counting never produces them. Korean tokens additionally carry the
/// subword model's log-probability.
class Vocab {
 public:
  static constexpr int kFormatVersion = 1;

  explicit Vocab(Side side);

  Side side() const { return side_; }
  std::size_t size() const { return tokens_.size(); }

  /// Id of `token`, or UNK when absent.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::optional<double> logprob(TokenId id) const;

  /// Appends a token; throws if it is already present or is a special.
  TokenId add(std::string token, std::optional<double> logprob = std::nullopt);

  /// Header line, then one `token<TAB>id<TAB>logprob?` row per entry.
  std::string serialize() const;
  static Vocab parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);
  /// 64-bit FNV-1a of the serialized form, hex encoded.
  std::string hash() const;

  static bool is_special(std::string_view token);
  static const std::vector<std::string>& special_tokens();

 private:
  Side side_;
  std::vector<std::string> tokens_;
  std::vector<std::optional<double>> logprobs_;
  std::unordered_map<std::string, TokenId> index_;
};

struct VocabOptions {
  /// Tokens are kept only when their count is strictly greater than this.
  std::size_t min_count = 10;
  /// Upper bound on the vocabulary size including specials; 0 = unbounded.
  std::size_t max_size = 0;
};

/// Counts tokens over a tokenized corpus and keeps the frequent ones, most
/// frequent first (ties broken by token text). `logprobs`, when given,
/// supplies the subword score attached to each kept token.
Vocab build_vocab(const std::vector<std::vector<std::string>>& tokenized, Side side,
                  const VocabOptions& options,
                  const std::unordered_map<std::string, double>* logprobs = nullptr);

std::string fnv1a_hex(std::string_view bytes);

}  // namespace hmt
