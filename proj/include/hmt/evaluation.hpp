// SPDX-License-Identifier: Apache-2.0
//
// Corpus metrics over token sequences: BLEU, ROUGE-L, HITS@K and chrF.
#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmt/batch.hpp"

namespace hmt {

using Segment = std::vector<std::string>;

struct EvalReport {
  std::string metric;
  double value = 0.0;
  std::vector<double> per_segment;
  std::size_t segments = 0;
  nlohmann::json config = nlohmann::json::object();
};

nlohmann::json to_json(const EvalReport& report);

enum class BleuSmoothing { kNone, kAddOne };

/// Corpus BLEU: clipped n-gram counts pooled over all segments, geometric
/// mean of the n = 1..max_n precisions, one brevity penalty for the corpus.
/// per_segment holds sentence-level BLEU with the same settings.
EvalReport bleu(const std::vector<Segment>& hypotheses, const std::vector<Segment>& references,
                std::size_t max_n = 4, BleuSmoothing smoothing = BleuSmoothing::kNone);

/// Mean over segments of the LCS F-measure (1 + b^2) P R / (R + b^2 P).
EvalReport rouge_l(const std::vector<Segment>& hypotheses, const std::vector<Segment>& references,
                   double beta = 1.2);

std::size_t lcs_length(const Segment& a, const Segment& b);

/// Fraction of positions whose truth is among the first K candidates, one
/// report per K. Every list must hold at least max(Ks) candidates.
std::vector<EvalReport> hits_at_k(const std::vector<std::vector<TokenId>>& candidates,
                                  const std::vector<TokenId>& truths,
                                  const std::vector<std::size_t>& ks = {1, 5, 10});

/// Character n-gram F-score (n = 1..6, beta = 2) over whitespace-free
/// strings. Offered in place of METEOR, which has no reference implementation here.
EvalReport chrf(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                std::size_t max_n = 6, double beta = 2.0);

Segment split_whitespace(std::string_view text);

}  // namespace hmt
