// SPDX-License-Identifier: Apache-2.0
//
// Seeded generators for toy Hanja/Korean corpora: a token-level cipher with
// local reordering, an alternating-pattern restoration corpus and a
// low-resource setup where spelling variants are common only in unpaired text.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmt/corpus.hpp"

namespace hmt {

struct CipherOptions {
  std::size_t symbols = 45;
  std::size_t paired = 500;
  std::size_t unpaired = 0;
  std::size_t min_len = 4;
  std::size_t max_len = 12;
  /// Korean word order reverses each block of this many tokens.
  std::size_t reorder_window = 2;
  bool dated = false;
  std::uint64_t seed = 0;
};

/// Every Hanja character maps to one Korean syllable word; sentences are
/// uniform random strings.
std::vector<CorpusRecord> cipher_corpus(const CipherOptions& options);

struct AlternatingOptions {
  std::size_t patterns = 8;  // distinct two-character patterns
  std::size_t sentences = 400;
  std::size_t min_len = 6;
  std::size_t max_len = 16;
  std::uint64_t seed = 0;
};

/// Unpaired Hanja sentences "ABAB..." where (A, B) is one of `patterns`
/// disjoint character pairs.
std::vector<CorpusRecord> alternating_corpus(const AlternatingOptions& options);

struct LowResourceOptions {
  std::size_t concepts = 60;
  std::size_t variants = 2;            // extra spellings per concept
  double variant_rate = 0.5;           // in unpaired and test sentences
  double paired_variant_rate = 0.05;   // in training pairs
  std::size_t successors = 4;          // allowed next concepts per concept
  std::size_t paired = 200;
  std::size_t unpaired = 2000;
  std::size_t test = 100;
  std::size_t min_len = 5;
  std::size_t max_len = 12;
  std::size_t reorder_window = 2;
  std::uint64_t seed = 0;
};

struct LowResourceCorpus {
  std::vector<CorpusRecord> train;  // paired + unpaired
  std::vector<CorpusRecord> test;   // paired held-out
};

/// Sentences walk a sparse concept transition graph; each concept is
/// written with its canonical character or one of its variants. Variants
/// are rare in the training pairs, so translating them well needs the
/// distributional signal of the unpaired text.
LowResourceCorpus low_resource_corpus(const LowResourceOptions& options);

/// The 1000-sentence corpus shipped for examples: 300 pairs and 700
/// unpaired Hanja sentences with dates in 1600-1609.
std::vector<CorpusRecord> bundled_corpus(std::uint64_t seed = 2023);

}  // namespace hmt
