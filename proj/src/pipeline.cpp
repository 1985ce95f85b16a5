// SPDX-License-Identifier: Apache-2.0
#include "hmt/pipeline.hpp"

#include <fstream>

#include "hmt/checkpoint.hpp"
#include "hmt/error.hpp"
#include "hmt/utf8.hpp"

namespace hmt {

namespace fs = std::filesystem;
using nlohmann::json;

json to_json(const CorpusConfig& c) {
  return {{"path", c.path},
          {"min_hanja", c.bounds.min_hanja},
          {"max_hanja", c.bounds.max_hanja},
          {"min_korean", c.bounds.min_korean},
          {"max_korean", c.bounds.max_korean},
          {"paired_test_size", c.paired_test_size},
          {"unpaired_test_size", c.unpaired_test_size},
          {"hanja_min_count", c.hanja_min_count},
          {"hanja_max_size", c.hanja_max_size},
          {"korean_vocab_size", c.korean_vocab_size},
          {"subword_max_piece_length", c.subword_max_piece_length},
          {"subword_em_rounds", c.subword_em_rounds}};
}

CorpusConfig corpus_config_from_json(const json& j) {
  if (!j.is_object()) throw ValueError("corpus config must be an object");
  CorpusConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "path") c.path = v.get<std::string>();
      else if (key == "min_hanja") c.bounds.min_hanja = v.get<std::size_t>();
      else if (key == "max_hanja") c.bounds.max_hanja = v.get<std::size_t>();
      else if (key == "min_korean") c.bounds.min_korean = v.get<std::size_t>();
      else if (key == "max_korean") c.bounds.max_korean = v.get<std::size_t>();
      else if (key == "paired_test_size") c.paired_test_size = v.get<std::size_t>();
      else if (key == "unpaired_test_size") c.unpaired_test_size = v.get<std::size_t>();
      else if (key == "hanja_min_count") c.hanja_min_count = v.get<std::size_t>();
      else if (key == "hanja_max_size") c.hanja_max_size = v.get<std::size_t>();
      else if (key == "korean_vocab_size") c.korean_vocab_size = v.get<std::size_t>();
      else if (key == "subword_max_piece_length") c.subword_max_piece_length = v.get<std::size_t>();
      else if (key == "subword_em_rounds") c.subword_em_rounds = v.get<std::size_t>();
      else throw ValueError("unknown corpus key '" + key + "'");
    } catch (const json::exception& e) {
      throw ValueError("corpus." + key + ": " + e.what());
    }
  }
  return c;
}

std::vector<CorpusRecord> split_records(const std::vector<ParallelPair>& paired,
                                        const std::vector<CorpusRecord>& unpaired) {
  std::vector<CorpusRecord> out;
  for (const auto& p : paired) {
    out.push_back(p.hanja);
    out.push_back(p.korean);
  }
  out.insert(out.end(), unpaired.begin(), unpaired.end());
  return out;
}

PreparedCorpus prepare_corpus(const std::vector<CorpusRecord>& records, const CorpusConfig& config,
                              std::uint64_t seed) {
  const ParallelCorpus corpus = group_pairs(records);
  if (corpus.paired.empty()) throw ValueError("prepare: corpus has no Hanja/Korean pairs");
  if (config.korean_vocab_size <= special::kCount) throw ValueError("prepare: korean_vocab_size too small");

  std::vector<std::string> korean_text;
  for (const auto& p : corpus.paired) korean_text.push_back(p.korean.text);
  UnigramTrainerOptions uo;
  uo.vocab_size = config.korean_vocab_size - special::kCount;
  uo.max_piece_length = config.subword_max_piece_length;
  uo.em_rounds = config.subword_em_rounds;
  const UnigramModel subwords = train_unigram(korean_text, uo);

  // Length filtering only needs segmentations, so provisional vocabularies
  // over the whole corpus serve until the split exists.
  std::vector<std::vector<std::string>> all_hanja;
  for (const auto& r : records) {
    if (r.side == Side::kHanja) all_hanja.push_back(utf8::split_chars(r.text));
  }
  const Tokenizer provisional_h(build_vocab(all_hanja, Side::kHanja, VocabOptions{0, 0}));
  const Tokenizer provisional_k(build_korean_vocab(subwords, korean_text, 0));
  SplitOptions so;
  so.bounds = config.bounds;
  so.paired_test_size = config.paired_test_size;
  so.unpaired_test_size = config.unpaired_test_size;
  so.seed = seed;

  PreparedCorpus out;
  out.splits = filter_and_split(corpus, provisional_h, provisional_k, so);

  std::vector<std::vector<std::string>> train_hanja;
  std::vector<std::string> train_korean;
  for (const auto& p : out.splits.paired_train) {
    train_hanja.push_back(provisional_h.pieces(p.hanja.text));
    train_korean.push_back(p.korean.text);
  }
  for (const auto& r : out.splits.unpaired_train) train_hanja.push_back(provisional_h.pieces(r.text));
  out.hanja = build_vocab(train_hanja, Side::kHanja, VocabOptions{config.hanja_min_count, config.hanja_max_size});
  out.korean = build_korean_vocab(subwords, train_korean, config.korean_vocab_size);
  return out;
}

json prepared_summary(const PreparedCorpus& p) {
  return {{"hanja_vocab_size", p.hanja.size()},
          {"korean_vocab_size", p.korean.size()},
          {"hanja_vocab_hash", p.hanja.hash()},
          {"korean_vocab_hash", p.korean.hash()},
          {"paired_train", p.splits.paired_train.size()},
          {"paired_test", p.splits.paired_test.size()},
          {"unpaired_train", p.splits.unpaired_train.size()},
          {"unpaired_test", p.splits.unpaired_test.size()},
          {"dropped_paired", p.splits.dropped_paired},
          {"dropped_unpaired", p.splits.dropped_unpaired}};
}

void save_prepared(const PreparedCorpus& p, const fs::path& dir) {
  fs::create_directories(dir);
  p.hanja.save(dir / "hanja.vocab");
  p.korean.save(dir / "korean.vocab");
  write_corpus(dir / "train.jsonl", split_records(p.splits.paired_train, p.splits.unpaired_train));
  write_corpus(dir / "test.jsonl", split_records(p.splits.paired_test, p.splits.unpaired_test));
  write_file_atomic(dir / "summary.json", prepared_summary(p).dump(2) + "\n");
}

PreparedCorpus load_prepared(const fs::path& dir) {
  for (const char* f : {"hanja.vocab", "korean.vocab", "train.jsonl", "test.jsonl"}) {
    if (!fs::exists(dir / f)) throw NotFoundError("prepared corpus: missing " + (dir / f).string());
  }
  PreparedCorpus p;
  p.hanja = Vocab::load(dir / "hanja.vocab");
  p.korean = Vocab::load(dir / "korean.vocab");
  const auto train = group_pairs(read_corpus(dir / "train.jsonl"));
  const auto test = group_pairs(read_corpus(dir / "test.jsonl"));
  p.splits.paired_train = train.paired;
  p.splits.unpaired_train = train.unpaired;
  p.splits.paired_test = test.paired;
  p.splits.unpaired_test = test.unpaired;
  return p;
}

ModelConfig with_vocab_sizes(ModelConfig config, const Vocab& hanja, const Vocab& korean) {
  config.vocab_hanja = hanja.size();
  config.vocab_korean = korean.size();
  return config;
}

EncodedPairs encode_pairs(const std::vector<ParallelPair>& pairs, const Tokenizer& hanja, const Tokenizer& korean,
                          const ModelConfig& model) {
  EncodedPairs out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto src = hanja.encode(pairs[i].hanja.text);
    auto tgt = korean.encode(pairs[i].korean.text, true);
    if (src.empty() || src.size() > model.max_len_hanja || tgt.size() - 2 > model.max_len_korean) continue;
    out.examples.push_back({std::move(src), std::move(tgt)});
    out.kept.push_back(i);
  }
  return out;
}

TrainingData make_training_data(const CorpusSplits& splits, const Tokenizer& hanja, const Tokenizer& korean,
                                const ModelConfig& model) {
  TrainingData d;
  d.paired = encode_pairs(splits.paired_train, hanja, korean, model).examples;
  for (const auto& p : d.paired) d.restoration.push_back(p.source);
  for (const auto& r : splits.unpaired_train) {
    auto ids = hanja.encode(r.text);
    if (!ids.empty() && ids.size() <= model.max_len_hanja) d.restoration.push_back(std::move(ids));
  }
  return d;
}

}  // namespace hmt
