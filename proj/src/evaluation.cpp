// SPDX-License-Identifier: Apache-2.0
#include "hmt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hmt/error.hpp"
#include "hmt/utf8.hpp"

namespace hmt {

using nlohmann::json;

json to_json(const EvalReport& r) {
  return {{"metric", r.metric},
          {"value", r.value},
          {"segments", r.segments},
          {"per_segment", r.per_segment},
          {"config", r.config}};
}

namespace {

void check_pairs(std::size_t hyps, std::size_t refs, const char* metric) {
  if (hyps == 0) throw ValueError(std::string(metric) + ": no hypotheses");
  if (hyps != refs) {
    throw DimensionError(std::string(metric) + ": " + std::to_string(hyps) + " hypotheses but " +
                         std::to_string(refs) + " references");
  }
}

template <typename T>
std::map<std::vector<T>, std::size_t> ngram_counts(const std::vector<T>& tokens, std::size_t n) {
  std::map<std::vector<T>, std::size_t> out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++out[std::vector<T>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                         tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

struct NgramStats {
  std::vector<double> matches, totals;
  double hyp_len = 0.0, ref_len = 0.0;
};

void add_segment(NgramStats& s, const Segment& hyp, const Segment& ref, std::size_t max_n) {
  for (std::size_t n = 1; n <= max_n; ++n) {
    const auto h = ngram_counts(hyp, n);
    const auto r = ngram_counts(ref, n);
    for (const auto& [gram, count] : h) {
      auto it = r.find(gram);
      if (it != r.end()) s.matches[n - 1] += static_cast<double>(std::min(count, it->second));
      s.totals[n - 1] += static_cast<double>(count);
    }
  }
  s.hyp_len += static_cast<double>(hyp.size());
  s.ref_len += static_cast<double>(ref.size());
}

double bleu_from(const NgramStats& s, std::size_t max_n, BleuSmoothing smoothing) {
  if (s.hyp_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    double m = s.matches[n], t = s.totals[n];
    if (smoothing == BleuSmoothing::kAddOne && n > 0) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double bp = s.hyp_len > s.ref_len ? 1.0 : std::exp(1.0 - s.ref_len / s.hyp_len);
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

}  // namespace

EvalReport bleu(const std::vector<Segment>& hyps, const std::vector<Segment>& refs, std::size_t max_n,
                BleuSmoothing smoothing) {
  check_pairs(hyps.size(), refs.size(), "bleu");
  if (max_n == 0) throw ValueError("bleu: max_n must be at least 1");
  EvalReport r;
  r.metric = "bleu";
  r.segments = hyps.size();
  r.config = {{"max_n", max_n},
              {"smoothing", smoothing == BleuSmoothing::kNone ? "none" : "add_one"},
              {"tokenization", "subword"}};
  NgramStats corpus{std::vector<double>(max_n, 0.0), std::vector<double>(max_n, 0.0)};
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    NgramStats seg{std::vector<double>(max_n, 0.0), std::vector<double>(max_n, 0.0)};
    add_segment(seg, hyps[i], refs[i], max_n);
    r.per_segment.push_back(bleu_from(seg, max_n, smoothing));
    add_segment(corpus, hyps[i], refs[i], max_n);
  }
  r.value = bleu_from(corpus, max_n, smoothing);
  return r;
}

std::size_t lcs_length(const Segment& a, const Segment& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

EvalReport rouge_l(const std::vector<Segment>& hyps, const std::vector<Segment>& refs, double beta) {
  check_pairs(hyps.size(), refs.size(), "rouge_l");
  if (!(beta > 0.0)) throw ValueError("rouge_l: beta must be positive");
  EvalReport r;
  r.metric = "rouge_l";
  r.segments = hyps.size();
  r.config = {{"beta", beta}};
  double total = 0.0;
  const double b2 = beta * beta;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const double lcs = static_cast<double>(lcs_length(hyps[i], refs[i]));
    double f = 0.0;
    if (lcs > 0.0) {
      const double p = lcs / static_cast<double>(hyps[i].size());
      const double rec = lcs / static_cast<double>(refs[i].size());
      f = (1.0 + b2) * p * rec / (rec + b2 * p);
    }
    r.per_segment.push_back(f);
    total += f;
  }
  r.value = total / static_cast<double>(hyps.size());
  return r;
}

std::vector<EvalReport> hits_at_k(const std::vector<std::vector<TokenId>>& candidates,
                                  const std::vector<TokenId>& truths, const std::vector<std::size_t>& ks) {
  check_pairs(candidates.size(), truths.size(), "hits_at_k");
  if (ks.empty()) throw ValueError("hits_at_k: no K values");
  const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
  if (*std::min_element(ks.begin(), ks.end()) == 0) throw ValueError("hits_at_k: K must be at least 1");
  for (const auto& c : candidates) {
    if (c.size() < max_k) {
      throw ValueError("hits_at_k: candidate list of " + std::to_string(c.size()) + " is shorter than K=" +
                       std::to_string(max_k));
    }
  }
  std::vector<EvalReport> out;
  for (std::size_t k : ks) {
    EvalReport r;
    r.metric = "hits@" + std::to_string(k);
    r.segments = candidates.size();
    r.config = {{"k", k}};
    double hits = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const auto end = candidates[i].begin() + static_cast<std::ptrdiff_t>(k);
      const bool hit = std::find(candidates[i].begin(), end, truths[i]) != end;
      r.per_segment.push_back(hit ? 1.0 : 0.0);
      hits += hit ? 1.0 : 0.0;
    }
    r.value = hits / static_cast<double>(candidates.size());
    out.push_back(std::move(r));
  }
  return out;
}

EvalReport chrf(const std::vector<std::string>& hyps, const std::vector<std::string>& refs, std::size_t max_n,
                double beta) {
  check_pairs(hyps.size(), refs.size(), "chrf");
  EvalReport r;
  r.metric = "chrf";
  r.segments = hyps.size();
  r.config = {{"max_n", max_n}, {"beta", beta}, {"reference_metric", false}};
  auto chars = [](const std::string& s) {
    std::u32string out;
    for (char32_t c : utf8::decode(s)) {
      if (!utf8::is_space(c)) out.push_back(c);
    }
    return std::vector<char32_t>(out.begin(), out.end());
  };
  double total = 0.0;
  const double b2 = beta * beta;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto h = chars(hyps[i]), ref = chars(refs[i]);
    double p_sum = 0.0, r_sum = 0.0;
    std::size_t orders = 0;
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto hc = ngram_counts(h, n), rc = ngram_counts(ref, n);
      double match = 0.0, ht = 0.0, rt = 0.0;
      for (const auto& [g, c] : hc) {
        ht += static_cast<double>(c);
        auto it = rc.find(g);
        if (it != rc.end()) match += static_cast<double>(std::min(c, it->second));
      }
      for (const auto& [g, c] : rc) rt += static_cast<double>(c);
      if (ht == 0.0 || rt == 0.0) continue;
      p_sum += match / ht;
      r_sum += match / rt;
      ++orders;
    }
    double f = 0.0;
    if (orders > 0) {
      const double p = p_sum / static_cast<double>(orders), rec = r_sum / static_cast<double>(orders);
      if (p + rec > 0.0) f = (1.0 + b2) * p * rec / (b2 * p + rec);
    }
    r.per_segment.push_back(f);
    total += f;
  }
  r.value = total / static_cast<double>(hyps.size());
  return r;
}

Segment split_whitespace(std::string_view text) {
  Segment out;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace hmt
