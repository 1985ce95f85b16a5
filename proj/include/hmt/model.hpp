// SPDX-License-Identifier: Apache-2.0
//
// Multi-task Transformer: factorized Hanja/Korean embeddings, a shared
// encoder used by both tasks, a restoration encoder with a masked-token
// head, and a translation decoder with a Korean output head.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hmt/batch.hpp"
#include "hmt/model_config.hpp"
#include "hmt/tensor.hpp"

namespace hmt {
inline namespace HMT_NN_NAMESPACE {

enum class BlockInit { kNormal, kZeros, kOnes };

/// One stored parameter block. `group` names the sharing group; `uses` is the
/// number of layers that read this storage.
struct BlockSpec {
  std::string name;
  Shape shape;
  BlockInit init = BlockInit::kNormal;
  std::string group;
  std::size_t uses = 1;
};

/// Every block the model stores, in checkpoint order. Shared blocks appear
/// once regardless of how many layers reuse them.
std::vector<BlockSpec> parameter_layout(const ModelConfig& config);
std::size_t parameter_count(const ModelConfig& config);

struct AttentionParams {
  Tensor ln_gain, ln_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct FeedForwardParams {
  Tensor ln_gain, ln_bias;
  Tensor w1, b1, w2, b2;
};

struct EncoderLayerParams {
  AttentionParams attn;
  FeedForwardParams ffn;
};

struct DecoderLayerParams {
  AttentionParams self_attn;
  AttentionParams cross_attn;
  FeedForwardParams ffn;
};

struct EncoderStack {
  std::vector<EncoderLayerParams> layers;
  Tensor final_gain, final_bias;
};

struct DecoderStack {
  std::vector<DecoderLayerParams> layers;
  Tensor final_gain, final_bias;
};

/// E [V, d_emb] + learned positions [max_len, d_emb], projected by P.
struct EmbeddingParams {
  Tensor table, positions, proj, proj_bias;
};

/// d_model -> d_emb transform, GELU, layer norm, then logits against W [V, d_emb].
struct OutputHeadParams {
  Tensor transform, transform_bias, ln_gain, ln_bias, output;
};

struct NamedBlock {
  std::string name;
  std::string group;
  Tensor tensor;
};

class ModelParams {
 public:
  ModelParams() = default;
  /// Allocates every block of parameter_layout(config) and wires the layers
  /// so that shared groups alias a single storage.
  ModelParams(const ModelConfig& config, std::uint64_t seed);

  EmbeddingParams hanja_embedding, korean_embedding;
  EncoderStack shared;
  EncoderStack restore;
  DecoderStack decoder;
  OutputHeadParams hanja_head, korean_head;

  const std::vector<NamedBlock>& blocks() const { return blocks_; }
  std::vector<NamedBlock>& blocks() { return blocks_; }
  const Tensor& block(const std::string& name) const;
  std::size_t parameter_count() const;
  void clear_grads();
  /// Deep copy; the copy keeps the same sharing structure.
  ModelParams clone() const;

 private:
  void wire(const ModelConfig& config);

  std::vector<NamedBlock> blocks_;
  std::map<std::string, std::size_t> index_;
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);
  Model(ModelConfig config, ModelParams params);

  const ModelConfig& config() const { return config_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  /// (E[id] + pos[t]) P + b, shape [batch*length, d_model].
  Tensor embed(Graph& g, Side side, const TokenBatch& batch) const;
  /// f_S over embedded Hanja; PAD keys are never attended to.
  Tensor shared_encode(Graph& g, const Tensor& embedded, const TokenBatch& batch) const;
  /// f_R on top of shared states.
  Tensor restore_encode(Graph& g, const Tensor& shared_states, const TokenBatch& batch) const;
  /// Restoration head logits [rows, |V_h|] for any subset of restoration states.
  Tensor hanja_logits(Graph& g, const Tensor& states) const;
  /// f_R followed by the Hanja head over every position.
  Tensor restore_logits(Graph& g, const Tensor& shared_states, const TokenBatch& batch) const;
  /// f_D with teacher forcing: logits [batch*target_len, |V_k|] for every
  /// prefix position of `target_in` (BOS-initial, causally masked).
  Tensor decode_logits(Graph& g, const Tensor& shared_states, const TokenBatch& source,
                       const TokenBatch& target_in) const;
  /// Next-token logits for a single BOS-initial prefix.
  std::vector<Real> decode_step_logits(const Tensor& shared_states, const TokenBatch& source,
                                       std::span<const TokenId> prefix) const;

  /// Convenience: embed + shared_encode for a Hanja batch.
  Tensor encode_source(Graph& g, const TokenBatch& source) const;

 private:
  Tensor attention_block(Graph& g, const AttentionParams& p, const Tensor& x, const Tensor* memory,
                         const AttentionDims& dims, std::span<const std::uint8_t> key_pad,
                         bool causal) const;
  Tensor feed_forward_block(Graph& g, const FeedForwardParams& p, const Tensor& x) const;
  Tensor run_encoder(Graph& g, const EncoderStack& stack, const Tensor& x,
                     const TokenBatch& batch) const;
  Tensor output_head(Graph& g, const OutputHeadParams& p, const Tensor& states) const;

  ModelConfig config_;
  ModelParams params_;
};

}  // namespace HMT_NN_NAMESPACE
}  // namespace hmt
