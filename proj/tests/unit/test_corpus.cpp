// Vocabulary, subword tokenizer, corpus records, filtering and masking.
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "hmt/corpus.hpp"
#include "hmt/error.hpp"
#include "hmt/unigram.hpp"
#include "hmt/utf8.hpp"

using namespace hmt;

namespace {

std::vector<std::vector<std::string>> repeat_chars(const std::map<std::string, int>& counts) {
  std::vector<std::vector<std::string>> out(1);
  for (const auto& [tok, n] : counts) {
    for (int i = 0; i < n; ++i) out[0].push_back(tok);
  }
  return out;
}

Tokenizer hanja_tokenizer(const std::string& chars) {
  Vocab v(Side::kHanja);
  for (const auto& c : utf8::split_chars(chars)) v.add(c);
  return Tokenizer(std::move(v));
}

Tokenizer korean_tokenizer(const std::vector<std::string>& corpus, std::size_t pieces) {
  UnigramTrainerOptions o;
  o.vocab_size = pieces;
  auto model = train_unigram(corpus, o);
  return Tokenizer(build_korean_vocab(model, corpus, 0));
}

}  // namespace

TEST_CASE("vocab keeps tokens counted more than min_count times") {
  auto v = build_vocab(repeat_chars({{"王", 11}, {"臣", 10}, {"日", 30}}), Side::kHanja, {10, 0});
  CHECK(v.contains("王"));
  CHECK_FALSE(v.contains("臣"));
  CHECK(v.id("臣") == special::kUnk);
  CHECK(v.token(special::kCount) == "日");
  CHECK(v.size() == 2 + special::kCount);
}

TEST_CASE("vocab of five characters twenty times each") {
  auto v = build_vocab(repeat_chars({{"a", 20}, {"b", 20}, {"c", 20}, {"d", 20}, {"e", 20}}), Side::kHanja, {});
  CHECK(v.size() == 5 + 5);
  CHECK(v.token(5) == "a");
  CHECK(v.token(9) == "e");
}

TEST_CASE("vocab max_size truncates by frequency and includes specials") {
  auto v = build_vocab(repeat_chars({{"x", 3}, {"y", 9}, {"z", 5}}), Side::kKorean, {0, 7});
  CHECK(v.size() == 7);
  CHECK(v.token(5) == "y");
  CHECK(v.token(6) == "z");
}

TEST_CASE("vocab errors") {
  CHECK_THROWS_AS(build_vocab({}, Side::kHanja, {}), ValueError);
  Vocab v(Side::kHanja);
  CHECK_THROWS_AS(v.add("[MASK]"), ValueError);
  v.add("a");
  CHECK_THROWS_AS(v.add("a"), ValueError);
  CHECK_THROWS_AS(v.token(99), NotFoundError);
}

TEST_CASE("vocab serialization round trip keeps ids and scores") {
  Vocab v(Side::kKorean);
  v.add("▁가", -1.25);
  v.add("tab\there", -3.5);
  v.add("back\\slash");
  const auto text = v.serialize();
  CHECK(text.rfind("#hmt-vocab\tside=korean\tsize=8\tversion=1\n", 0) == 0);
  auto back = Vocab::parse(text);
  CHECK(back.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    CHECK(back.token(id) == v.token(id));
    CHECK(back.logprob(id) == v.logprob(id));
  }
  CHECK(back.hash() == v.hash());
  CHECK_THROWS_AS(Vocab::parse("#hmt-vocab\tside=korean\tsize=9\tversion=1\n"), FormatError);
  CHECK_THROWS_AS(Vocab::parse("garbage"), FormatError);
}

TEST_CASE("fnv1a matches the reference vectors") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("unigram training discovers the repeated unit") {
  std::vector<std::string> corpus(100, "abab abab");
  UnigramTrainerOptions o;
  o.vocab_size = 8;
  auto model = train_unigram(corpus, o);
  CHECK(model.size() <= 8);
  std::set<std::string> pieces;
  for (const auto& p : model.pieces()) pieces.insert(utf8::encode(p.text));
  CHECK((pieces.contains("ab") || pieces.contains("abab") || pieces.contains("▁abab")));
  const auto seg = model.segment("abab abab");
  CHECK(seg.size() <= 4);
}

TEST_CASE("unigram segmentation is lossless") {
  std::vector<std::string> corpus = {"나라에 큰 비가 내렸다", "임금이 신하를 불렀다", "큰 비가 그쳤다",
                                     "신하가 나라를 걱정하였다", "비가 내렸다"};
  UnigramTrainerOptions o;
  o.vocab_size = 40;
  auto model = train_unigram(corpus, o);
  for (const std::string s : {"나라에 큰 비가 내렸다", "임금이  신하를 걱정하였다", "낯선 글자 xyz"}) {
    std::string joined;
    for (const auto& p : model.segment(s)) joined += p;
    std::string collapsed;
    bool space = false;
    for (char c : s) {
      if (c == ' ') {
        space = true;
        continue;
      }
      if (space && !collapsed.empty()) collapsed += ' ';
      space = false;
      collapsed += c;
    }
    CHECK(denormalize_subwords(joined) == collapsed);
  }
}

TEST_CASE("single-character words give a character-only inventory") {
  std::vector<std::string> corpus(50, "a b c");
  UnigramTrainerOptions o;
  o.vocab_size = 4;
  auto model = train_unigram(corpus, o);
  CHECK(model.size() == 4);
  for (const auto& p : model.pieces()) CHECK(p.text.size() == 1);
}

TEST_CASE("unigram training errors") {
  UnigramTrainerOptions o;
  o.vocab_size = 2;
  CHECK_THROWS_AS(train_unigram({"abc def"}, o), ValueError);
  CHECK_THROWS_AS(train_unigram({}, o), ValueError);
}

TEST_CASE("hanja encoding is one id per character with UNK for unseen ones") {
  auto tok = hanja_tokenizer("王曰可臣");
  auto ids = tok.encode("王曰可臣");
  CHECK(ids.size() == 4);
  CHECK(tok.decode(ids) == "王曰可臣");
  auto unk = tok.encode("王曰不可");
  CHECK(unk[2] == special::kUnk);
  CHECK_THROWS_AS(tok.encode(""), ValueError);
}

TEST_CASE("korean encode/decode round trip and framing") {
  std::vector<std::string> corpus = {"임금이 신하를 불렀다", "신하가 임금을 뵈었다", "임금이 비를 걱정하였다"};
  auto tok = korean_tokenizer(corpus, 30);
  for (const auto& s : corpus) CHECK(tok.decode(tok.encode(s)) == s);
  auto framed = tok.encode(corpus[0], true);
  CHECK(framed.front() == special::kBos);
  CHECK(framed.back() == special::kEos);
  CHECK(tok.decode(framed) == corpus[0]);
}

TEST_CASE("corpus lines round trip and reject unknown fields") {
  CorpusRecord r{"h1", Side::kHanja, "王曰可", std::string("1623-04-11"), std::string("p1")};
  CHECK(parse_corpus_line(format_corpus_line(r)) == r);
  CorpusRecord bare{"k9", Side::kKorean, "왕이 말하였다", std::nullopt, std::nullopt};
  CHECK(parse_corpus_line(format_corpus_line(bare)) == bare);
  CHECK_THROWS_AS(parse_corpus_line(R"({"id":"a","side":"hanja","text":"x","extra":1})"), FormatError);
  CHECK_THROWS_AS(parse_corpus_line(R"({"id":"a","side":"latin","text":"x"})"), Error);
  CHECK_THROWS_AS(parse_corpus_line("not json"), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "hmt_corpus_roundtrip.jsonl";
  write_corpus(path, {r, bare});
  CHECK(read_corpus(path) == std::vector<CorpusRecord>{r, bare});
  std::filesystem::remove(path);
}

TEST_CASE("pairs are grouped by pair_id") {
  std::vector<CorpusRecord> recs = {
      {"h1", Side::kHanja, "王曰", std::nullopt, std::string("p1")},
      {"h2", Side::kHanja, "臣曰", std::nullopt, std::nullopt},
      {"k1", Side::kKorean, "왕이", std::nullopt, std::string("p1")},
  };
  auto pc = group_pairs(recs);
  CHECK(pc.paired.size() == 1);
  CHECK(pc.paired[0].korean.id == "k1");
  CHECK(pc.unpaired.size() == 1);
  recs.push_back({"k2", Side::kKorean, "신하", std::nullopt, std::string("p1")});
  CHECK_THROWS_AS(group_pairs(recs), FormatError);
}

namespace {

std::string hanja_of_length(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += "王";
  return s;
}

ParallelCorpus lengths_corpus(const std::vector<std::size_t>& unpaired_lengths) {
  ParallelCorpus pc;
  for (std::size_t i = 0; i < unpaired_lengths.size(); ++i) {
    pc.unpaired.push_back({"u" + std::to_string(i), Side::kHanja, hanja_of_length(unpaired_lengths[i]),
                           std::nullopt, std::nullopt});
  }
  return pc;
}

}  // namespace

TEST_CASE("length filter bounds are tight") {
  auto hanja = hanja_tokenizer("王");
  auto korean = korean_tokenizer({"가 나 다 라"}, 8);
  auto splits = filter_and_split(lengths_corpus({3, 4, 350, 351}), hanja, korean, {});
  CHECK(splits.unpaired_train.size() == 2);
  CHECK(splits.dropped_unpaired == 2);
  CHECK(utf8::split_chars(splits.unpaired_train[0].text).size() == 4);
  CHECK(utf8::split_chars(splits.unpaired_train[1].text).size() == 350);

  LengthBounds b;
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = uniform_index(rng, 400);
    CHECK(b.keep_hanja(n) == (n >= 4 && n <= 350));
    CHECK(b.keep_korean(n) == (n >= 4 && n <= 300));
  }
}

TEST_CASE("a pair is dropped when either side fails the bounds") {
  auto hanja = hanja_tokenizer("王臣");
  auto korean = korean_tokenizer({"가 나 다 라 마"}, 10);
  ParallelCorpus pc;
  pc.paired.push_back({{"h1", Side::kHanja, "王臣王臣", std::nullopt, std::string("1")},
                       {"k1", Side::kKorean, "가 나 다 라", std::nullopt, std::string("1")}});
  pc.paired.push_back({{"h2", Side::kHanja, "王臣王臣", std::nullopt, std::string("2")},
                       {"k2", Side::kKorean, "가", std::nullopt, std::string("2")}});
  auto s = filter_and_split(pc, hanja, korean, {});
  CHECK(s.paired_train.size() == 1);
  CHECK(s.dropped_paired == 1);
}

TEST_CASE("splits are deterministic, disjoint and validated") {
  auto hanja = hanja_tokenizer("王");
  auto korean = korean_tokenizer({"가 나 다 라"}, 8);
  std::vector<std::size_t> lengths;
  for (std::size_t i = 0; i < 40; ++i) lengths.push_back(4 + i);
  const auto pc = lengths_corpus(lengths);
  SplitOptions o;
  o.unpaired_test_size = 10;
  o.seed = 17;
  auto a = filter_and_split(pc, hanja, korean, o);
  auto b = filter_and_split(pc, hanja, korean, o);
  CHECK(a.unpaired_test == b.unpaired_test);
  CHECK(a.unpaired_test.size() == 10);
  CHECK(a.unpaired_train.size() == 30);
  std::set<std::string> train_ids;
  for (const auto& r : a.unpaired_train) train_ids.insert(r.id);
  for (const auto& r : a.unpaired_test) CHECK_FALSE(train_ids.contains(r.id));
  o.seed = 18;
  CHECK(filter_and_split(pc, hanja, korean, o).unpaired_test != a.unpaired_test);
  o.unpaired_test_size = 40;
  CHECK_THROWS_AS(filter_and_split(pc, hanja, korean, o), ValueError);
}

TEST_CASE("n-gram masking covers ceil(rate * len) positions") {
  std::vector<TokenId> ids = {10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  Rng rng(1);
  for (int rep = 0; rep < 200; ++rep) {
    auto m = mask_ngram(ids, {}, rng);
    CHECK(m.masked_count() == 2);
    for (std::size_t t = 0; t < ids.size(); ++t) {
      if (m.targets[t] == kIgnoreId) {
        CHECK(m.inputs[t] == ids[t]);
      } else {
        CHECK(m.inputs[t] == special::kMask);
        CHECK(m.targets[t] == ids[t]);
      }
    }
  }
}

TEST_CASE("trigram spans mask consecutive positions") {
  std::vector<TokenId> ids(20);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(5 + i);
  MaskingOptions o;
  o.mask_rate = 0.15;
  o.ngram_weights = {0.0, 0.0, 1.0};
  Rng rng(4);
  auto m = mask_ngram(ids, o, rng);
  REQUIRE(m.spans.size() == 1);
  const auto k = m.spans[0].start;
  CHECK(m.spans[0].length == 3);
  for (std::size_t t = k; t < k + 3; ++t) {
    CHECK(m.inputs[t] == special::kMask);
    CHECK(m.targets[t] == ids[t]);
  }
  CHECK(m.masked_count() == 3);
}

TEST_CASE("spans never overlap and masking errors") {
  std::vector<TokenId> ids(7, 9);
  Rng rng(5);
  MaskingOptions o;
  o.mask_rate = 0.9;
  for (int rep = 0; rep < 100; ++rep) {
    auto m = mask_ngram(ids, o, rng);
    std::size_t covered = 0;
    for (const auto& s : m.spans) covered += s.length;
    CHECK(covered == m.masked_count());
    CHECK(m.masked_count() == 7);
  }
  o.mask_rate = 0.0;
  CHECK_THROWS_AS(mask_ngram(ids, o, rng), ValueError);
  o.mask_rate = 1.0;
  CHECK_THROWS_AS(mask_ngram(ids, o, rng), ValueError);
}

TEST_CASE("masked fraction over many sentences stays near the rate") {
  Rng rng(6);
  std::size_t masked = 0, total = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t len = 4 + uniform_index(rng, 347);
    std::vector<TokenId> ids(len, 7);
    masked += mask_ngram(ids, {}, rng).masked_count();
    total += len;
  }
  const double frac = static_cast<double>(masked) / static_cast<double>(total);
  CHECK(frac > 0.15 * 0.8);
  CHECK(frac < 0.15 * 1.2);
}
