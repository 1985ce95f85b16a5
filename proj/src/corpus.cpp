// SPDX-License-Identifier: Apache-2.0
#include "hmt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "hmt/error.hpp"

namespace hmt {

using nlohmann::json;

CorpusRecord parse_corpus_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("corpus: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("corpus: each line must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "id" && key != "side" && key != "text" && key != "date" && key != "pair_id") {
      throw FormatError("corpus: unknown field '" + key + "'");
    }
  }
  CorpusRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.side = side_from_name(j.at("side").get<std::string>().c_str());
    r.text = j.at("text").get<std::string>();
    if (j.contains("date") && !j["date"].is_null()) r.date = j["date"].get<std::string>();
    if (j.contains("pair_id") && !j["pair_id"].is_null()) r.pair_id = j["pair_id"].get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("corpus: ") + e.what());
  }
  return r;
}

std::string format_corpus_line(const CorpusRecord& r) {
  json j = {{"id", r.id}, {"side", side_name(r.side)}, {"text", r.text}};
  if (r.date) j["date"] = *r.date;
  if (r.pair_id) j["pair_id"] = *r.pair_id;
  return j.dump();
}

std::vector<CorpusRecord> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot read corpus " + path.string());
  std::vector<CorpusRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(parse_corpus_line(line));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<CorpusRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) out << format_corpus_line(r) << '\n';
}

Sentence encode_sentence(const CorpusRecord& record, const Tokenizer& tokenizer, bool frame_korean) {
  if (tokenizer.side() != record.side) {
    throw ValueError(std::string("encode_sentence: ") + side_name(record.side) + " record given a " +
                     side_name(tokenizer.side()) + " tokenizer");
  }
  Sentence s;
  s.text = record.text;
  s.side = record.side;
  s.date = record.date;
  s.pair_id = record.pair_id;
  s.ids = tokenizer.encode(record.text, frame_korean && record.side == Side::kKorean);
  return s;
}

ParallelCorpus group_pairs(const std::vector<CorpusRecord>& records) {
  std::map<std::string, std::pair<const CorpusRecord*, const CorpusRecord*>> groups;
  std::vector<std::string> order;
  ParallelCorpus out;
  for (const auto& r : records) {
    if (!r.pair_id) {
      if (r.side == Side::kKorean) throw FormatError("corpus: Korean record '" + r.id + "' has no pair_id");
      out.unpaired.push_back(r);
      continue;
    }
    auto [it, inserted] = groups.try_emplace(*r.pair_id, nullptr, nullptr);
    if (inserted) order.push_back(*r.pair_id);
    auto& slot = r.side == Side::kHanja ? it->second.first : it->second.second;
    if (slot) throw FormatError("corpus: pair_id '" + *r.pair_id + "' has two " + side_name(r.side) + " records");
    slot = &r;
  }
  for (const auto& pid : order) {
    const auto& [h, k] = groups.at(pid);
    if (!h || !k) throw FormatError("corpus: pair_id '" + pid + "' is missing one side");
    out.paired.push_back({*h, *k});
  }
  return out;
}

namespace {

template <typename T>
void split_off(std::vector<T>& pool, std::size_t test_size, Rng& rng, std::vector<T>& train,
               std::vector<T>& test, const char* what) {
  if (test_size == 0) {
    train = std::move(pool);
    return;
  }
  if (test_size >= pool.size()) {
    throw ValueError(std::string("filter_and_split: test size ") + std::to_string(test_size) +
                     " is not smaller than the " + std::to_string(pool.size()) + " surviving " + what +
                     " sentences");
  }
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  shuffle(idx, rng);
  std::vector<bool> in_test(pool.size(), false);
  for (std::size_t i = 0; i < test_size; ++i) in_test[idx[i]] = true;
  for (std::size_t i = 0; i < pool.size(); ++i) (in_test[i] ? test : train).push_back(std::move(pool[i]));
}

}  // namespace

CorpusSplits filter_and_split(const ParallelCorpus& corpus, const Tokenizer& hanja, const Tokenizer& korean,
                              const SplitOptions& options) {
  const auto& b = options.bounds;
  if (b.min_hanja == 0 || b.min_korean == 0 || b.max_hanja < b.min_hanja || b.max_korean < b.min_korean) {
    throw ValueError("filter_and_split: invalid length bounds");
  }
  CorpusSplits out;
  std::vector<ParallelPair> paired;
  for (const auto& p : corpus.paired) {
    if (b.keep_hanja(hanja.pieces(p.hanja.text).size()) && b.keep_korean(korean.pieces(p.korean.text).size())) {
      paired.push_back(p);
    } else {
      ++out.dropped_paired;
    }
  }
  std::vector<CorpusRecord> unpaired;
  for (const auto& r : corpus.unpaired) {
    if (b.keep_hanja(hanja.pieces(r.text).size())) {
      unpaired.push_back(r);
    } else {
      ++out.dropped_unpaired;
    }
  }
  Rng rng(options.seed);
  split_off(paired, options.paired_test_size, rng, out.paired_train, out.paired_test, "paired");
  split_off(unpaired, options.unpaired_test_size, rng, out.unpaired_train, out.unpaired_test, "unpaired");
  return out;
}

MaskedSentence mask_ngram(std::span<const TokenId> ids, const MaskingOptions& options, Rng& rng) {
  if (!(options.mask_rate > 0.0 && options.mask_rate < 1.0)) {
    throw ValueError("mask_ngram: mask_rate must lie in (0, 1)");
  }
  if (ids.empty()) throw ValueError("mask_ngram: empty sentence");
  if (options.ngram_weights.empty()) throw ValueError("mask_ngram: no n-gram weights");
  const std::size_t len = ids.size();
  const auto target = static_cast<std::size_t>(std::ceil(options.mask_rate * static_cast<double>(len)));
  MaskedSentence out;
  out.inputs.assign(ids.begin(), ids.end());
  out.targets.assign(len, kIgnoreId);
  std::vector<bool> covered(len, false);
  std::size_t count = 0;
  while (count < target) {
    std::size_t n = weighted_index(rng, options.ngram_weights) + 1;
    n = std::min(n, target - count);
    // Shrink the span until some free window of that length exists.
    std::vector<std::size_t> starts;
    for (; n >= 1; --n) {
      starts.clear();
      for (std::size_t s = 0; s + n <= len; ++s) {
        bool free = true;
        for (std::size_t k = s; k < s + n && free; ++k) free = !covered[k];
        if (free) starts.push_back(s);
      }
      if (!starts.empty()) break;
    }
    const std::size_t start = starts[uniform_index(rng, starts.size())];
    for (std::size_t k = start; k < start + n; ++k) {
      covered[k] = true;
      out.targets[k] = ids[k];
      out.inputs[k] = special::kMask;
    }
    out.spans.push_back({start, n});
    count += n;
  }
  std::sort(out.spans.begin(), out.spans.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  return out;
}

}  // namespace hmt
