// SPDX-License-Identifier: Apache-2.0
#include "hmt/losses.hpp"

#include "hmt/error.hpp"

namespace hmt {
inline namespace HMT_NN_NAMESPACE {

Tensor mlm_loss(Graph& g, const Model& model, const MaskedBatch& batch) {
  if (batch.empty()) throw ValueError("mlm_loss: empty batch");
  std::vector<std::vector<TokenId>> inputs;
  inputs.reserve(batch.size());
  for (const auto& s : batch) {
    if (s.masked_count() == 0) throw ValueError("mlm_loss: sentence without masked positions");
    if (s.inputs.size() != s.targets.size()) {
      throw DimensionError("mlm_loss: inputs and targets differ in length");
    }
    inputs.push_back(s.inputs);
  }
  const TokenBatch packed = TokenBatch::pack(inputs);

  // Only masked rows go through the output head.
  std::vector<TokenId> rows, targets;
  std::vector<Real> weights;
  const Real per_sentence = Real(1) / static_cast<Real>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = batch[b];
    const Real w = per_sentence / static_cast<Real>(s.masked_count());
    for (std::size_t t = 0; t < s.targets.size(); ++t) {
      if (s.targets[t] == kIgnoreId) continue;
      rows.push_back(static_cast<TokenId>(b * packed.length + t));
      targets.push_back(s.targets[t]);
      weights.push_back(w);
    }
  }
  Tensor shared = model.encode_source(g, packed);
  Tensor restored = model.restore_encode(g, shared, packed);
  Tensor logits = model.hanja_logits(g, g.gather_rows(restored, rows));
  return g.cross_entropy(logits, targets, kIgnoreId, weights);
}

Tensor translation_loss(Graph& g, const Model& model, const PairedBatch& batch) {
  if (batch.empty()) throw ValueError("translation_loss: empty batch");
  std::vector<std::vector<TokenId>> sources, target_in;
  std::vector<std::vector<TokenId>> target_out;
  for (const auto& ex : batch) {
    if (ex.target.size() < 2) throw ValueError("translation_loss: empty target sentence");
    if (ex.target.front() != special::kBos || ex.target.back() != special::kEos) {
      throw ValueError("translation_loss: target must be framed BOS ... EOS");
    }
    sources.push_back(ex.source);
    target_in.emplace_back(ex.target.begin(), ex.target.end() - 1);
    target_out.emplace_back(ex.target.begin() + 1, ex.target.end());
  }
  const TokenBatch src = TokenBatch::pack(sources);
  const TokenBatch tin = TokenBatch::pack(target_in);

  std::vector<TokenId> targets(tin.rows(), kIgnoreId);
  std::vector<Real> weights(tin.rows(), 0);
  const Real per_sentence = Real(1) / static_cast<Real>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& out = target_out[b];
    const Real w = per_sentence / static_cast<Real>(out.size());
    for (std::size_t t = 0; t < out.size(); ++t) {
      targets[b * tin.length + t] = out[t];
      weights[b * tin.length + t] = w;
    }
  }
  Tensor shared = model.encode_source(g, src);
  Tensor logits = model.decode_logits(g, shared, src, tin);
  return g.cross_entropy(logits, targets, kIgnoreId, weights);
}

}  // namespace HMT_NN_NAMESPACE
}  // namespace hmt
