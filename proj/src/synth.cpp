// SPDX-License-Identifier: Apache-2.0
#include "hmt/synth.hpp"

#include <algorithm>
#include <cstdio>

#include "hmt/error.hpp"
#include "hmt/random.hpp"
#include "hmt/utf8.hpp"

namespace hmt {

namespace {

// CJK unified ideographs from U+4E00, skipping none; these only need to be
// distinct single characters.
std::string hanja_char(std::size_t i) { return utf8::encode(static_cast<char32_t>(0x4E00 + 7 * i)); }

// Open Hangul syllables (no final consonant) starting at U+AC00.
std::string korean_syllable(std::size_t i) { return utf8::encode(static_cast<char32_t>(0xAC00 + 28 * i)); }

std::size_t length_between(Rng& rng, std::size_t lo, std::size_t hi) {
  if (lo == 0 || lo > hi) throw ValueError("synth: invalid sentence length range");
  return lo + uniform_index(rng, hi - lo + 1);
}

std::vector<std::size_t> reorder(std::vector<std::size_t> seq, std::size_t window) {
  if (window < 2) return seq;
  for (std::size_t i = 0; i < seq.size(); i += window) {
    const auto end = std::min(seq.size(), i + window);
    std::reverse(seq.begin() + static_cast<std::ptrdiff_t>(i), seq.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return seq;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string make_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%06zu", prefix, i);
  return buf;
}

std::string make_date(Rng& rng) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu-%02zu-%02zu", 1600 + uniform_index(rng, 10), 1 + uniform_index(rng, 12),
                1 + uniform_index(rng, 28));
  return buf;
}

void add_pair(std::vector<CorpusRecord>& out, const std::string& id, std::string hanja, std::string korean,
              std::optional<std::string> date) {
  out.push_back({id + "h", Side::kHanja, std::move(hanja), date, id});
  out.push_back({id + "k", Side::kKorean, std::move(korean), date, id});
}

}  // namespace

std::vector<CorpusRecord> cipher_corpus(const CipherOptions& o) {
  if (o.symbols == 0) throw ValueError("cipher_corpus: symbols must be positive");
  Rng rng(o.seed);
  std::vector<CorpusRecord> out;
  for (std::size_t s = 0; s < o.paired + o.unpaired; ++s) {
    std::vector<std::size_t> seq(length_between(rng, o.min_len, o.max_len));
    for (auto& t : seq) t = uniform_index(rng, o.symbols);
    std::vector<std::string> h, k;
    for (auto t : seq) h.push_back(hanja_char(t));
    for (auto t : reorder(seq, o.reorder_window)) k.push_back(korean_syllable(t));
    std::optional<std::string> date;
    if (o.dated) date = make_date(rng);
    if (s < o.paired) {
      add_pair(out, make_id("c", s), join(h, ""), join(k, " "), date);
    } else {
      out.push_back({make_id("c", s) + "h", Side::kHanja, join(h, ""), date, std::nullopt});
    }
  }
  return out;
}

std::vector<CorpusRecord> alternating_corpus(const AlternatingOptions& o) {
  if (o.patterns == 0) throw ValueError("alternating_corpus: patterns must be positive");
  Rng rng(o.seed);
  std::vector<CorpusRecord> out;
  for (std::size_t s = 0; s < o.sentences; ++s) {
    const std::size_t p = uniform_index(rng, o.patterns);
    const std::size_t len = length_between(rng, o.min_len, o.max_len);
    const std::size_t phase = uniform_index(rng, 2);
    std::string text;
    for (std::size_t i = 0; i < len; ++i) text += hanja_char(2 * p + (i + phase) % 2);
    out.push_back({make_id("a", s), Side::kHanja, std::move(text), std::nullopt, std::nullopt});
  }
  return out;
}

LowResourceCorpus low_resource_corpus(const LowResourceOptions& o) {
  if (o.concepts < 2 || o.successors == 0) throw ValueError("low_resource_corpus: need concepts and successors");
  Rng rng(o.seed);
  // Successor graph and Korean words (one or two syllables) per concept.
  std::vector<std::vector<std::size_t>> next(o.concepts);
  for (auto& n : next) {
    for (std::size_t j = 0; j < o.successors; ++j) n.push_back(uniform_index(rng, o.concepts));
  }
  std::vector<std::string> words(o.concepts);
  for (std::size_t c = 0; c < o.concepts; ++c) {
    words[c] = korean_syllable(c);
    if (c % 3 == 0) words[c] += korean_syllable(o.concepts + c);
  }
  auto form = [&](std::size_t c, std::size_t v) { return hanja_char(c * (o.variants + 1) + v); };

  auto sentence = [&](double rate) {
    std::vector<std::size_t> seq = {uniform_index(rng, o.concepts)};
    const std::size_t len = length_between(rng, o.min_len, o.max_len);
    while (seq.size() < len) seq.push_back(next[seq.back()][uniform_index(rng, o.successors)]);
    std::string h;
    for (auto c : seq) {
      const std::size_t v = o.variants && uniform_real(rng) < rate ? 1 + uniform_index(rng, o.variants) : 0;
      h += form(c, v);
    }
    std::vector<std::string> k;
    for (auto c : reorder(seq, o.reorder_window)) k.push_back(words[c]);
    return std::pair{h, join(k, " ")};
  };

  LowResourceCorpus out;
  std::size_t id = 0;
  for (std::size_t i = 0; i < o.paired; ++i) {
    auto [h, k] = sentence(o.paired_variant_rate);
    add_pair(out.train, make_id("p", id++), h, k, std::nullopt);
  }
  for (std::size_t i = 0; i < o.unpaired; ++i) {
    out.train.push_back({make_id("u", id++) + "h", Side::kHanja, sentence(o.variant_rate).first, std::nullopt,
                         std::nullopt});
  }
  for (std::size_t i = 0; i < o.test; ++i) {
    auto [h, k] = sentence(o.variant_rate);
    add_pair(out.test, make_id("t", id++), h, k, std::nullopt);
  }
  return out;
}

std::vector<CorpusRecord> bundled_corpus(std::uint64_t seed) {
  CipherOptions o;
  o.symbols = 60;
  o.paired = 300;
  o.unpaired = 700;
  o.dated = true;
  o.seed = seed;
  return cipher_corpus(o);
}

}  // namespace hmt
