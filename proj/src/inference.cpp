// SPDX-License-Identifier: Apache-2.0
#include "hmt/inference.hpp"

#include <algorithm>
#include <cmath>

#include "hmt/error.hpp"
#include "hmt/utf8.hpp"

namespace hmt {

using nlohmann::json;

double length_normalized_score(double raw_logprob, std::size_t length, double alpha) {
  if (length == 0) throw ValueError("length_normalized_score: length must be at least 1");
  return raw_logprob / std::pow((5.0 + static_cast<double>(length)) / 6.0, alpha);
}

void DecodeOptions::validate() const {
  if (beam_size == 0) throw ValueError("decode: beam_size must be at least 1");
  if (max_len == 0) throw ValueError("decode: max_len must be at least 1");
  if (!(alpha >= 0.0)) throw ValueError("decode: alpha must be non-negative");
}

json to_json(const DecodeOptions& o) {
  return {{"beam_size", o.beam_size}, {"max_len", o.max_len}, {"alpha", o.alpha}};
}

DecodeOptions decode_options_from_json(const json& j) {
  if (!j.is_object()) throw ValueError("decode: section must be an object");
  DecodeOptions o;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "beam_size") o.beam_size = v.get<std::size_t>();
      else if (key == "max_len") o.max_len = v.get<std::size_t>();
      else if (key == "alpha") o.alpha = v.get<double>();
      else throw ValueError("decode: unknown key '" + key + "'");
    } catch (const json::exception& e) {
      throw ValueError("decode: bad value for '" + key + "': " + e.what());
    }
  }
  o.validate();
  return o;
}

namespace {

bool generable(TokenId id) { return id != special::kPad && id != special::kBos && id != special::kMask; }

/// Encoded source kept for the whole search.
struct Source {
  TokenBatch batch;
  Tensor states;  // [len, d_model]
};

Source encode(const Model& model, std::span<const TokenId> ids) {
  if (ids.empty()) throw ValueError("decode: empty source");
  Source s;
  s.batch = TokenBatch::pack({std::vector<TokenId>(ids.begin(), ids.end())});
  Graph g(Graph::Mode::kEval);
  s.states = model.encode_source(g, s.batch);
  return s;
}

/// Log-probabilities of the next token for equally long prefixes, computed
/// in one batched decoder pass.
std::vector<std::vector<double>> next_logprobs(const Model& model, const Source& src,
                                               const std::vector<std::vector<TokenId>>& prefixes) {
  const std::size_t n = prefixes.size();
  const std::size_t len = src.batch.length, d = src.states.cols();
  Tensor states({n * len, d});
  TokenBatch source;
  source.batch = n;
  source.length = len;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(src.states.data().begin(), src.states.data().end(),
              states.data().begin() + static_cast<std::ptrdiff_t>(i * len * d));
    source.ids.insert(source.ids.end(), src.batch.ids.begin(), src.batch.ids.end());
    source.pad.insert(source.pad.end(), src.batch.pad.begin(), src.batch.pad.end());
    source.lengths.push_back(src.batch.lengths[0]);
  }
  Graph g(Graph::Mode::kEval);
  const TokenBatch target = TokenBatch::pack(prefixes);
  Tensor logits = model.decode_logits(g, states, source, target);
  const std::size_t V = logits.cols();
  std::vector<std::vector<double>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row = i * target.length + prefixes[i].size() - 1;
    auto lp = log_softmax(logits.data().subspan(row * V, V));
    out[i].assign(lp.begin(), lp.end());
  }
  return out;
}

void finalize(Hypothesis& h, double alpha) {
  h.finished = true;
  h.score = length_normalized_score(h.raw_logprob, h.length(), alpha);
}

bool better_finished(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.raw_logprob != b.raw_logprob) return a.raw_logprob > b.raw_logprob;
  return a.tokens < b.tokens;
}

}  // namespace

Hypothesis greedy_decode(const Model& model, std::span<const TokenId> source, std::size_t max_len, double alpha) {
  if (max_len == 0) throw ValueError("decode: max_len must be at least 1");
  const Source src = encode(model, source);
  Hypothesis h;
  h.tokens = {special::kBos};
  while (true) {
    const auto lp = next_logprobs(model, src, {h.tokens})[0];
    TokenId best = -1;
    for (std::size_t v = 0; v < lp.size(); ++v) {
      const auto id = static_cast<TokenId>(v);
      if (generable(id) && (best < 0 || lp[v] > lp[static_cast<std::size_t>(best)])) best = id;
    }
    h.tokens.push_back(best);
    h.raw_logprob += lp[static_cast<std::size_t>(best)];
    if (best == special::kEos || h.length() == max_len) break;
  }
  finalize(h, alpha);
  return h;
}

BeamResult beam_decode(const Model& model, std::span<const TokenId> source, const DecodeOptions& options) {
  options.validate();
  const Source src = encode(model, source);
  const std::size_t k = options.beam_size;
  std::vector<Hypothesis> live(1);
  live[0].tokens = {special::kBos};
  std::vector<Hypothesis> finished;

  struct Extension {
    std::size_t hyp;
    TokenId token;
    double raw;
  };
  while (!live.empty() && finished.size() < k) {
    // One row per call: GEMM rounding depends on the batch shape, and a
    // hypothesis must score the same here as under greedy decoding.
    std::vector<std::vector<double>> lps;
    for (const auto& h : live) lps.push_back(next_logprobs(model, src, {h.tokens})[0]);
    std::vector<Extension> ext;
    for (std::size_t i = 0; i < live.size(); ++i) {
      for (std::size_t v = 0; v < lps[i].size(); ++v) {
        const auto id = static_cast<TokenId>(v);
        if (generable(id)) ext.push_back({i, id, live[i].raw_logprob + lps[i][v]});
      }
    }
    const std::size_t keep = std::min(ext.size(), 2 * k);
    std::partial_sort(ext.begin(), ext.begin() + static_cast<std::ptrdiff_t>(keep), ext.end(),
                      [](const Extension& a, const Extension& b) {
                        if (a.raw != b.raw) return a.raw > b.raw;
                        if (a.hyp != b.hyp) return a.hyp < b.hyp;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t r = 0; r < keep && next.size() < k; ++r) {
      const auto& e = ext[r];
      Hypothesis h;
      h.tokens = live[e.hyp].tokens;
      h.tokens.push_back(e.token);
      h.raw_logprob = e.raw;
      if (e.token == special::kEos) {
        if (r < k) {
          finalize(h, options.alpha);
          finished.push_back(std::move(h));
        }
        continue;
      }
      if (h.length() == options.max_len) {
        finalize(h, options.alpha);
        finished.push_back(std::move(h));
        continue;
      }
      next.push_back(std::move(h));
    }
    live = std::move(next);
  }
  std::stable_sort(finished.begin(), finished.end(), better_finished);
  BeamResult out;
  out.best = finished.front();
  out.finished = std::move(finished);
  return out;
}

std::vector<PositionCandidates> restore_topk(const Model& model, std::span<const TokenId> ids, std::size_t k,
                                             RestoreMode mode) {
  if (k == 0) throw ValueError("restore_topk: K must be at least 1");
  const std::size_t vocab = model.config().vocab_hanja;
  if (k > vocab - special::kCount) {
    throw ValueError("restore_topk: K=" + std::to_string(k) + " exceeds the " +
                     std::to_string(vocab - special::kCount) + " non-special Hanja tokens");
  }
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == special::kMask) positions.push_back(i);
  }
  if (positions.empty()) throw ValueError("restore_topk: no damaged positions");

  std::vector<TokenId> work(ids.begin(), ids.end());
  auto rank_position = [&](const std::vector<TokenId>& input, std::size_t pos) {
    Graph g(Graph::Mode::kEval);
    const TokenBatch batch = TokenBatch::pack({input});
    Tensor shared = model.encode_source(g, batch);
    Tensor restored = model.restore_encode(g, shared, batch);
    const std::vector<TokenId> row = {static_cast<TokenId>(pos)};
    Tensor logits = model.hanja_logits(g, g.gather_rows(restored, row));
    return log_softmax(logits.data());
  };
  auto top = [&](const std::vector<Real>& lp, std::size_t pos) {
    std::vector<TokenId> order;
    for (std::size_t v = special::kCount; v < lp.size(); ++v) order.push_back(static_cast<TokenId>(v));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](TokenId a, TokenId b) {
                        const auto la = lp[static_cast<std::size_t>(a)], lb = lp[static_cast<std::size_t>(b)];
                        return la != lb ? la > lb : a < b;
                      });
    PositionCandidates pc;
    pc.position = pos;
    for (std::size_t r = 0; r < k; ++r) {
      pc.candidates.push_back({order[r], static_cast<double>(lp[static_cast<std::size_t>(order[r])]), r + 1});
    }
    return pc;
  };

  std::vector<PositionCandidates> out;
  if (mode == RestoreMode::kJoint) {
    Graph g(Graph::Mode::kEval);
    const TokenBatch batch = TokenBatch::pack({work});
    Tensor shared = model.encode_source(g, batch);
    Tensor restored = model.restore_encode(g, shared, batch);
    std::vector<TokenId> rows(positions.begin(), positions.end());
    Tensor logits = model.hanja_logits(g, g.gather_rows(restored, rows));
    const std::size_t V = logits.cols();
    for (std::size_t i = 0; i < positions.size(); ++i) {
      out.push_back(top(log_softmax(logits.data().subspan(i * V, V)), positions[i]));
    }
  } else {
    for (std::size_t pos : positions) {
      auto pc = top(rank_position(work, pos), pos);
      work[pos] = pc.candidates.front().token;
      out.push_back(std::move(pc));
    }
  }
  return out;
}

DamagedText parse_damaged_text(std::string_view text) {
  DamagedText out;
  std::size_t i = 0;
  const auto chars = utf8::split_chars(text);
  while (i < chars.size()) {
    // "[MASK]" is six ASCII characters.
    if (chars[i] == "[" && i + kMaskToken.size() <= chars.size()) {
      std::string joined;
      for (std::size_t j = 0; j < kMaskToken.size(); ++j) joined += chars[i + j];
      if (joined == kMaskToken) {
        out.positions.push_back(out.chars.size());
        out.chars.emplace_back(kDamageMark);
        i += kMaskToken.size();
        continue;
      }
    }
    if (chars[i] == kDamageMark) out.positions.push_back(out.chars.size());
    out.chars.push_back(chars[i]);
    ++i;
  }
  return out;
}

void mark_damaged(DamagedText& text, const std::vector<std::size_t>& offsets) {
  for (std::size_t off : offsets) {
    if (off >= text.chars.size()) {
      throw NotFoundError("damage offset " + std::to_string(off) + " is past the end of the text");
    }
    text.chars[off] = std::string(kDamageMark);
  }
  text.positions.clear();
  for (std::size_t i = 0; i < text.chars.size(); ++i) {
    if (text.chars[i] == kDamageMark) text.positions.push_back(i);
  }
}

std::vector<TokenId> encode_damaged(const DamagedText& text, const Tokenizer& hanja) {
  if (hanja.side() != Side::kHanja) throw ValueError("encode_damaged: needs the Hanja tokenizer");
  if (text.chars.empty()) throw ValueError("encode_damaged: empty text");
  std::vector<TokenId> ids;
  for (const auto& c : text.chars) {
    ids.push_back(c == kDamageMark ? special::kMask : hanja.vocab().id(c));
  }
  return ids;
}

json to_json(const TranslationRecord& r) {
  return {{"id", r.id}, {"source", r.source}, {"hypothesis", r.hypothesis},
          {"raw_logprob", r.raw_logprob}, {"score", r.score}};
}

TranslationRecord translation_record_from_json(const json& j) {
  try {
    return {j.at("id").get<std::string>(), j.at("source").get<std::string>(),
            j.at("hypothesis").get<std::string>(), j.at("raw_logprob").get<double>(),
            j.at("score").get<double>()};
  } catch (const json::exception& e) {
    throw FormatError(std::string("translation record: ") + e.what());
  }
}

TranslationRecord translate_text(const Model& model, const Tokenizer& hanja, const Tokenizer& korean,
                                 const std::string& id, const std::string& text, const DecodeOptions& options) {
  const auto ids = hanja.encode(text);
  if (ids.size() > model.config().max_len_hanja) {
    throw ValueError("translate: source has " + std::to_string(ids.size()) + " tokens, model accepts " +
                     std::to_string(model.config().max_len_hanja));
  }
  const std::size_t max_len = std::min(options.max_len, model.config().max_len_korean);
  Hypothesis h;
  if (options.beam_size == 1) {
    h = greedy_decode(model, ids, max_len, options.alpha);
  } else {
    auto o = options;
    o.max_len = max_len;
    h = beam_decode(model, ids, o).best;
  }
  return {id, text, korean.decode(h.tokens), h.raw_logprob, h.score};
}

}  // namespace hmt
