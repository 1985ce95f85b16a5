// SPDX-License-Identifier: Apache-2.0
#include "hmt/unigram.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "hmt/error.hpp"
#include "hmt/utf8.hpp"

namespace hmt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Pieces whose expected count falls below this are dropped by the M-step.
constexpr double kExpectedFrequencyThreshold = 0.5;

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

double digamma(double x) {
  double result = 0.0;
  for (; x < 7; ++x) result -= 1 / x;
  x -= 1.0 / 2.0;
  const double xx = 1.0 / x;
  const double xx2 = xx * xx;
  const double xx4 = xx2 * xx2;
  result += std::log(x) + (1.0 / 24.0) * xx2 - (7.0 / 960.0) * xx4 + (31.0 / 8064.0) * xx4 * xx2 -
            (127.0 / 30720.0) * xx4 * xx4;
  return result;
}

using WordCounts = std::map<std::u32string, double>;

WordCounts count_words(const std::vector<std::string>& corpus) {
  WordCounts words;
  for (const auto& line : corpus) {
    const std::u32string norm = normalize_for_subwords(line);
    std::size_t start = 0;
    for (std::size_t i = 1; i <= norm.size(); ++i) {
      if (i == norm.size() || norm[i] == kWordBoundary) {
        words[norm.substr(start, i - start)] += 1.0;
        start = i;
      }
    }
  }
  return words;
}

bool is_single_char(const UnigramModel::Piece& p) { return p.text.size() == 1; }

// Forward-backward over every word lattice; returns expected piece counts.
std::vector<double> expected_counts(const UnigramModel& model, const WordCounts& words) {
  std::vector<double> counts(model.size(), 0.0);
  std::vector<double> alpha, beta;
  for (const auto& [word, freq] : words) {
    const std::size_t n = word.size();
    alpha.assign(n + 1, kNegInf);
    beta.assign(n + 1, kNegInf);
    alpha[0] = 0.0;
    std::vector<std::vector<std::pair<int, std::size_t>>> edges(n);
    for (std::size_t i = 0; i < n; ++i) edges[i] = model.matches_at(word, i);
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] == kNegInf) continue;
      for (auto [piece, len] : edges[i]) {
        alpha[i + len] = log_add(alpha[i + len], alpha[i] + model.pieces()[piece].logprob);
      }
    }
    beta[n] = 0.0;
    for (std::size_t i = n; i-- > 0;) {
      for (auto [piece, len] : edges[i]) {
        beta[i] = log_add(beta[i], beta[i + len] + model.pieces()[piece].logprob);
      }
    }
    const double z = alpha[n];
    if (z == kNegInf) continue;
    for (std::size_t i = 0; i < n; ++i) {
      for (auto [piece, len] : edges[i]) {
        const double lp = alpha[i] + model.pieces()[piece].logprob + beta[i + len] - z;
        counts[static_cast<std::size_t>(piece)] += freq * std::exp(lp);
      }
    }
  }
  return counts;
}

UnigramModel run_m_step(const UnigramModel& model, const std::vector<double>& counts) {
  std::vector<UnigramModel::Piece> kept;
  std::vector<double> kept_counts;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto& p = model.pieces()[i];
    double c = counts[i];
    if (!is_single_char(p) && c < kExpectedFrequencyThreshold) continue;
    if (is_single_char(p)) c = std::max(c, kExpectedFrequencyThreshold);
    kept.push_back(p);
    kept_counts.push_back(c);
  }
  double total = 0.0;
  for (double c : kept_counts) total += c;
  const double log_total = digamma(total);
  for (std::size_t i = 0; i < kept.size(); ++i) kept[i].logprob = digamma(kept_counts[i]) - log_total;
  return UnigramModel(std::move(kept));
}

UnigramModel prune(const UnigramModel& model, const WordCounts& words, std::size_t target,
                   double shrink_factor) {
  const std::size_t n = model.size();
  // Viterbi frequency of each piece over the corpus.
  std::vector<double> freq(n, 0.0);
  double total = 0.0;
  for (const auto& [word, f] : words) {
    for (int id : model.viterbi(word)) {
      if (id < 0) continue;
      freq[static_cast<std::size_t>(id)] += f;
      total += f;
    }
  }
  std::vector<std::pair<double, std::size_t>> candidates;
  std::vector<std::size_t> always_keep;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = model.pieces()[i];
    if (is_single_char(p)) {
      always_keep.push_back(i);
      continue;
    }
    if (freq[i] == 0.0) {
      candidates.emplace_back(kNegInf, i);
      continue;
    }
    const auto alternatives = model.viterbi(p.text, static_cast<int>(i));
    const double logprob_sp = std::log(freq[i]) - std::log(total);
    const double logsum_alt =
        std::log(total + freq[i] * (static_cast<double>(alternatives.size()) - 1.0));
    double logprob_alt = 0.0;
    for (int alt : alternatives) {
      const double fa = alt >= 0 ? freq[static_cast<std::size_t>(alt)] : 0.0;
      logprob_alt += std::log(fa + freq[i]) - logsum_alt;
    }
    candidates.emplace_back(freq[i] * (logprob_sp - logprob_alt), i);
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return model.pieces()[a.second].text < model.pieces()[b.second].text;
  });
  const std::size_t desired = std::min(
      n - 1, std::max(target, static_cast<std::size_t>(static_cast<double>(n) * shrink_factor)));
  const std::size_t room = desired > always_keep.size() ? desired - always_keep.size() : 0;
  std::set<std::size_t> keep(always_keep.begin(), always_keep.end());
  for (std::size_t k = 0; k < candidates.size() && k < room; ++k) keep.insert(candidates[k].second);
  std::vector<UnigramModel::Piece> pieces;
  for (std::size_t i : keep) pieces.push_back(model.pieces()[i]);
  return UnigramModel(std::move(pieces));
}

}  // namespace

std::u32string normalize_for_subwords(std::string_view text) {
  std::u32string out;
  bool in_space = true;
  for (char32_t cp : utf8::decode(text)) {
    if (utf8::is_space(cp)) {
      in_space = true;
      continue;
    }
    if (in_space) out.push_back(kWordBoundary);
    in_space = false;
    out.push_back(cp);
  }
  return out;
}

std::string denormalize_subwords(std::string_view pieces) {
  std::string out;
  for (char32_t cp : utf8::decode(pieces)) {
    if (cp == kWordBoundary) {
      if (!out.empty()) out.push_back(' ');
    } else {
      out += utf8::encode(cp);
    }
  }
  return out;
}

UnigramModel::UnigramModel(std::vector<Piece> pieces) : pieces_(std::move(pieces)) {
  std::sort(pieces_.begin(), pieces_.end(), [](const Piece& a, const Piece& b) {
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    return a.text < b.text;
  });
  double min_lp = 0.0;
  for (const auto& p : pieces_) min_lp = std::min(min_lp, p.logprob);
  unknown_logprob_ = min_lp - 10.0;
  build_trie();
}

void UnigramModel::build_trie() {
  trie_.assign(1, TrieNode{});
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    int node = 0;
    for (char32_t cp : pieces_[i].text) {
      auto it = trie_[static_cast<std::size_t>(node)].next.find(cp);
      if (it == trie_[static_cast<std::size_t>(node)].next.end()) {
        trie_.push_back(TrieNode{});
        const int child = static_cast<int>(trie_.size() - 1);
        trie_[static_cast<std::size_t>(node)].next.emplace(cp, child);
        node = child;
      } else {
        node = it->second;
      }
    }
    if (trie_[static_cast<std::size_t>(node)].piece >= 0) {
      throw ValueError("unigram: duplicate piece '" + utf8::encode(pieces_[i].text) + "'");
    }
    trie_[static_cast<std::size_t>(node)].piece = static_cast<int>(i);
  }
}

std::vector<std::pair<int, std::size_t>> UnigramModel::matches_at(std::u32string_view text,
                                                                  std::size_t pos) const {
  std::vector<std::pair<int, std::size_t>> out;
  int node = 0;
  for (std::size_t k = pos; k < text.size(); ++k) {
    const auto& next = trie_[static_cast<std::size_t>(node)].next;
    auto it = next.find(text[k]);
    if (it == next.end()) break;
    node = it->second;
    const int piece = trie_[static_cast<std::size_t>(node)].piece;
    if (piece >= 0) out.emplace_back(piece, k - pos + 1);
  }
  return out;
}

std::vector<int> UnigramModel::viterbi(std::u32string_view s, int excluded) const {
  const std::size_t n = s.size();
  std::vector<double> best(n + 1, kNegInf);
  std::vector<std::pair<std::size_t, int>> back(n + 1, {0, -1});
  best[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (best[i] == kNegInf) continue;
    bool single_char_covered = false;
    for (auto [piece, len] : matches_at(s, i)) {
      if (piece == excluded) continue;
      if (len == 1) single_char_covered = true;
      const double score = best[i] + pieces_[static_cast<std::size_t>(piece)].logprob;
      if (score > best[i + len]) {
        best[i + len] = score;
        back[i + len] = {i, piece};
      }
    }
    if (!single_char_covered) {
      const double score = best[i] + unknown_logprob_;
      if (score > best[i + 1]) {
        best[i + 1] = score;
        back[i + 1] = {i, -1};
      }
    }
  }
  std::vector<int> path;
  for (std::size_t pos = n; pos > 0; pos = back[pos].first) path.push_back(back[pos].second);
  std::reverse(path.begin(), path.end());
  return path;
}

double UnigramModel::total_logprob(std::u32string_view s) const {
  double total = 0.0;
  for (int id : viterbi(s)) total += id >= 0 ? pieces_[static_cast<std::size_t>(id)].logprob : unknown_logprob_;
  return total;
}

std::vector<std::string> UnigramModel::segment(std::string_view text) const {
  const std::u32string norm = normalize_for_subwords(text);
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (int id : viterbi(norm)) {
    if (id >= 0) {
      const auto& t = pieces_[static_cast<std::size_t>(id)].text;
      out.push_back(utf8::encode(t));
      pos += t.size();
    } else {
      out.push_back(utf8::encode(norm[pos]));
      ++pos;
    }
  }
  return out;
}

std::unordered_map<std::string, double> UnigramModel::logprob_table() const {
  std::unordered_map<std::string, double> out;
  for (const auto& p : pieces_) out.emplace(utf8::encode(p.text), p.logprob);
  return out;
}

UnigramModel train_unigram(const std::vector<std::string>& corpus, const UnigramTrainerOptions& options) {
  const WordCounts words = count_words(corpus);
  if (words.empty()) throw ValueError("train_unigram: empty corpus");
  if (options.max_piece_length == 0) throw ValueError("train_unigram: max_piece_length must be positive");

  // Seed: every character plus the most frequent longer substrings.
  std::map<std::u32string, double> substr_counts;
  std::map<char32_t, double> char_counts;
  for (const auto& [word, f] : words) {
    for (std::size_t i = 0; i < word.size(); ++i) {
      char_counts[word[i]] += f;
      for (std::size_t len = 2; len <= options.max_piece_length && i + len <= word.size(); ++len) {
        substr_counts[word.substr(i, len)] += f;
      }
    }
  }
  if (options.vocab_size < char_counts.size()) {
    throw ValueError("train_unigram: vocab_size " + std::to_string(options.vocab_size) +
                     " is smaller than the " + std::to_string(char_counts.size()) +
                     " distinct characters in the corpus");
  }
  std::vector<std::pair<double, std::u32string>> seeds;
  for (auto& [s, c] : substr_counts) {
    if (c >= 2.0) seeds.emplace_back(c * static_cast<double>(s.size()), s);
  }
  std::stable_sort(seeds.begin(), seeds.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  if (seeds.size() > options.seed_size) seeds.resize(options.seed_size);

  std::vector<UnigramModel::Piece> pieces;
  double total = 0.0;
  for (auto& [cp, c] : char_counts) total += c;
  for (auto& [score, s] : seeds) total += substr_counts[s];
  for (auto& [cp, c] : char_counts) pieces.push_back({std::u32string(1, cp), std::log(c) - std::log(total)});
  for (auto& [score, s] : seeds) pieces.push_back({s, std::log(substr_counts[s]) - std::log(total)});
  UnigramModel model(std::move(pieces));

  auto run_em = [&]() {
    for (std::size_t r = 0; r < options.em_rounds; ++r) {
      model = run_m_step(model, expected_counts(model, words));
    }
  };
  while (true) {
    run_em();
    if (model.size() <= options.vocab_size) break;
    model = prune(model, words, options.vocab_size, options.shrink_factor);
  }
  return model;
}

}  // namespace hmt
