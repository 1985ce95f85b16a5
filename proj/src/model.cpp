// SPDX-License-Identifier: Apache-2.0
#include "hmt/model.hpp"

#include <cmath>
#include <random>

#include "hmt/error.hpp"

namespace hmt {
inline namespace HMT_NN_NAMESPACE {

namespace {

constexpr double kInitStd = 0.02;

void add_attention_specs(std::vector<BlockSpec>& out, const std::string& prefix, std::size_t d,
                         std::size_t uses) {
  const std::string group = prefix;
  out.push_back({prefix + ".ln_g", {d}, BlockInit::kOnes, group, uses});
  out.push_back({prefix + ".ln_b", {d}, BlockInit::kZeros, group, uses});
  for (const char* m : {"q", "k", "v", "o"}) {
    out.push_back({prefix + ".w" + m, {d, d}, BlockInit::kNormal, group, uses});
    out.push_back({prefix + ".b" + m, {d}, BlockInit::kZeros, group, uses});
  }
}

void add_ffn_specs(std::vector<BlockSpec>& out, const std::string& prefix, std::size_t d,
                   std::size_t ffn, std::size_t uses) {
  const std::string group = prefix;
  out.push_back({prefix + ".ln_g", {d}, BlockInit::kOnes, group, uses});
  out.push_back({prefix + ".ln_b", {d}, BlockInit::kZeros, group, uses});
  out.push_back({prefix + ".w1", {d, ffn}, BlockInit::kNormal, group, uses});
  out.push_back({prefix + ".b1", {ffn}, BlockInit::kZeros, group, uses});
  out.push_back({prefix + ".w2", {ffn, d}, BlockInit::kNormal, group, uses});
  out.push_back({prefix + ".b2", {d}, BlockInit::kZeros, group, uses});
}

void add_ffn_stack(std::vector<BlockSpec>& out, const std::string& stack, const ModelConfig& c,
                   std::size_t layers) {
  if (c.sharing == SharingPolicy::kAll) {
    add_ffn_specs(out, stack + ".ffn", c.d_model, c.d_ffn, layers);
  } else {
    for (std::size_t i = 0; i < layers; ++i) {
      add_ffn_specs(out, stack + ".ffn." + std::to_string(i), c.d_model, c.d_ffn, 1);
    }
  }
}

void add_final_norm(std::vector<BlockSpec>& out, const std::string& stack, std::size_t d) {
  out.push_back({stack + ".final_ln_g", {d}, BlockInit::kOnes, stack + ".final", 1});
  out.push_back({stack + ".final_ln_b", {d}, BlockInit::kZeros, stack + ".final", 1});
}

void add_embedding(std::vector<BlockSpec>& out, const std::string& side, std::size_t vocab,
                   std::size_t positions, const ModelConfig& c) {
  const std::string group = side + ".embedding";
  out.push_back({side + ".embed", {vocab, c.d_emb}, BlockInit::kNormal, group, 1});
  out.push_back({side + ".pos", {positions, c.d_emb}, BlockInit::kNormal, group, 1});
  out.push_back({side + ".proj", {c.d_emb, c.d_model}, BlockInit::kNormal, group, 1});
  out.push_back({side + ".proj_b", {c.d_model}, BlockInit::kZeros, group, 1});
}

void add_head(std::vector<BlockSpec>& out, const std::string& name, std::size_t vocab,
              const ModelConfig& c) {
  out.push_back({name + ".transform", {c.d_model, c.d_emb}, BlockInit::kNormal, name, 1});
  out.push_back({name + ".transform_b", {c.d_emb}, BlockInit::kZeros, name, 1});
  out.push_back({name + ".ln_g", {c.d_emb}, BlockInit::kOnes, name, 1});
  out.push_back({name + ".ln_b", {c.d_emb}, BlockInit::kZeros, name, 1});
  out.push_back({name + ".output", {vocab, c.d_emb}, BlockInit::kNormal, name, 1});
}

std::size_t korean_positions(const ModelConfig& c) { return c.max_len_korean + 1; }

}  // namespace

std::vector<BlockSpec> parameter_layout(const ModelConfig& c) {
  c.validate();
  std::vector<BlockSpec> out;
  add_embedding(out, "hanja", c.vocab_hanja, c.max_len_hanja, c);
  add_embedding(out, "korean", c.vocab_korean, korean_positions(c), c);

  add_attention_specs(out, "shared.attn", c.d_model, c.layers_shared);
  add_ffn_stack(out, "shared", c, c.layers_shared);
  add_final_norm(out, "shared", c.d_model);

  add_attention_specs(out, "restore.attn", c.d_model, c.layers_restore);
  add_ffn_stack(out, "restore", c, c.layers_restore);
  add_final_norm(out, "restore", c.d_model);

  add_attention_specs(out, "decoder.self_attn", c.d_model, c.layers_decoder);
  add_attention_specs(out, "decoder.cross_attn", c.d_model, c.layers_decoder);
  add_ffn_stack(out, "decoder", c, c.layers_decoder);
  add_final_norm(out, "decoder", c.d_model);

  add_head(out, "hanja_head", c.vocab_hanja, c);
  add_head(out, "korean_head", c.vocab_korean, c);
  return out;
}

std::size_t parameter_count(const ModelConfig& config) {
  std::size_t total = 0;
  for (const auto& spec : parameter_layout(config)) total += shape_numel(spec.shape);
  return total;
}

// ---------------------------------------------------------------------------

ModelParams::ModelParams(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kInitStd);
  for (const auto& spec : parameter_layout(config)) {
    Tensor t(spec.shape, /*requires_grad=*/true);
    auto d = t.data();
    switch (spec.init) {
      case BlockInit::kNormal:
        for (auto& v : d) v = static_cast<Real>(normal(rng));
        break;
      case BlockInit::kOnes:
        for (auto& v : d) v = 1;
        break;
      case BlockInit::kZeros:
        break;
    }
    index_[spec.name] = blocks_.size();
    blocks_.push_back({spec.name, spec.group, t});
  }
  wire(config);
}

const Tensor& ModelParams::block(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw NotFoundError("no parameter block named '" + name + "'");
  return blocks_[it->second].tensor;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& b : blocks_) total += b.tensor.numel();
  return total;
}

void ModelParams::clear_grads() {
  for (auto& b : blocks_) b.tensor.clear_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  out.index_ = index_;
  for (const auto& b : blocks_) out.blocks_.push_back({b.name, b.group, b.tensor.clone()});
  // Map every wired handle onto its copied block so sharing is preserved.
  auto remap = [&](const Tensor& t) -> Tensor {
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      if (blocks_[i].tensor.same_storage(t)) return out.blocks_[i].tensor;
    }
    throw StateError("clone: tensor not owned by this parameter set");
  };
  auto remap_attn = [&](const AttentionParams& p) {
    return AttentionParams{remap(p.ln_gain), remap(p.ln_bias), remap(p.wq), remap(p.bq),
                           remap(p.wk),      remap(p.bk),      remap(p.wv), remap(p.bv),
                           remap(p.wo),      remap(p.bo)};
  };
  auto remap_ffn = [&](const FeedForwardParams& p) {
    return FeedForwardParams{remap(p.ln_gain), remap(p.ln_bias), remap(p.w1),
                             remap(p.b1),      remap(p.w2),      remap(p.b2)};
  };
  auto remap_emb = [&](const EmbeddingParams& p) {
    return EmbeddingParams{remap(p.table), remap(p.positions), remap(p.proj), remap(p.proj_bias)};
  };
  auto remap_head = [&](const OutputHeadParams& p) {
    return OutputHeadParams{remap(p.transform), remap(p.transform_bias), remap(p.ln_gain),
                            remap(p.ln_bias), remap(p.output)};
  };
  auto remap_encoder = [&](const EncoderStack& s) {
    EncoderStack r;
    for (const auto& l : s.layers) r.layers.push_back({remap_attn(l.attn), remap_ffn(l.ffn)});
    r.final_gain = remap(s.final_gain);
    r.final_bias = remap(s.final_bias);
    return r;
  };
  out.hanja_embedding = remap_emb(hanja_embedding);
  out.korean_embedding = remap_emb(korean_embedding);
  out.shared = remap_encoder(shared);
  out.restore = remap_encoder(restore);
  for (const auto& l : decoder.layers) {
    out.decoder.layers.push_back(
        {remap_attn(l.self_attn), remap_attn(l.cross_attn), remap_ffn(l.ffn)});
  }
  out.decoder.final_gain = remap(decoder.final_gain);
  out.decoder.final_bias = remap(decoder.final_bias);
  out.hanja_head = remap_head(hanja_head);
  out.korean_head = remap_head(korean_head);
  return out;
}

void ModelParams::wire(const ModelConfig& c) {
  auto get = [&](const std::string& name) { return block(name); };
  auto attn = [&](const std::string& p) {
    return AttentionParams{get(p + ".ln_g"), get(p + ".ln_b"), get(p + ".wq"), get(p + ".bq"),
                           get(p + ".wk"),   get(p + ".bk"),   get(p + ".wv"), get(p + ".bv"),
                           get(p + ".wo"),   get(p + ".bo")};
  };
  auto ffn = [&](const std::string& stack, std::size_t layer) {
    const std::string p = c.sharing == SharingPolicy::kAll
                              ? stack + ".ffn"
                              : stack + ".ffn." + std::to_string(layer);
    return FeedForwardParams{get(p + ".ln_g"), get(p + ".ln_b"), get(p + ".w1"),
                             get(p + ".b1"),   get(p + ".w2"),   get(p + ".b2")};
  };
  auto embedding = [&](const std::string& side) {
    return EmbeddingParams{get(side + ".embed"), get(side + ".pos"), get(side + ".proj"),
                           get(side + ".proj_b")};
  };
  auto head = [&](const std::string& name) {
    return OutputHeadParams{get(name + ".transform"), get(name + ".transform_b"),
                            get(name + ".ln_g"), get(name + ".ln_b"), get(name + ".output")};
  };
  auto encoder = [&](const std::string& stack, std::size_t layers) {
    EncoderStack s;
    const AttentionParams shared_attn = attn(stack + ".attn");
    for (std::size_t i = 0; i < layers; ++i) s.layers.push_back({shared_attn, ffn(stack, i)});
    s.final_gain = get(stack + ".final_ln_g");
    s.final_bias = get(stack + ".final_ln_b");
    return s;
  };

  hanja_embedding = embedding("hanja");
  korean_embedding = embedding("korean");
  shared = encoder("shared", c.layers_shared);
  restore = encoder("restore", c.layers_restore);
  const AttentionParams self_attn = attn("decoder.self_attn");
  const AttentionParams cross_attn = attn("decoder.cross_attn");
  decoder.layers.clear();
  for (std::size_t i = 0; i < c.layers_decoder; ++i) {
    decoder.layers.push_back({self_attn, cross_attn, ffn("decoder", i)});
  }
  decoder.final_gain = get("decoder.final_ln_g");
  decoder.final_bias = get("decoder.final_ln_b");
  hanja_head = head("hanja_head");
  korean_head = head("korean_head");
}

// ---------------------------------------------------------------------------

Model::Model(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), params_(config_, seed) {}

Model::Model(ModelConfig config, ModelParams params)
    : config_(std::move(config)), params_(std::move(params)) {
  const auto layout = parameter_layout(config_);
  if (layout.size() != params_.blocks().size()) {
    throw DimensionError("model: parameter set does not match the configured layout");
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& b = params_.blocks()[i];
    if (b.name != layout[i].name || b.tensor.shape() != layout[i].shape) {
      throw DimensionError("model: block '" + b.name + "' does not match layout entry '" +
                           layout[i].name + "' " + shape_to_string(layout[i].shape));
    }
  }
}

Tensor Model::embed(Graph& g, Side side, const TokenBatch& batch) const {
  const EmbeddingParams& p = side == Side::kHanja ? params_.hanja_embedding : params_.korean_embedding;
  const std::size_t vocab = p.table.rows();
  const std::size_t max_len = p.positions.rows();
  if (batch.rows() == 0) throw DimensionError("embed: empty batch");
  if (batch.length > max_len) {
    throw DimensionError(std::string("embed: ") + side_name(side) + " sequence length " +
                         std::to_string(batch.length) + " exceeds maximum " + std::to_string(max_len));
  }
  for (TokenId id : batch.ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw DimensionError("embed: id " + std::to_string(id) + " outside " + side_name(side) +
                           " vocabulary of " + std::to_string(vocab));
    }
  }
  std::vector<TokenId> positions(batch.rows());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    positions[i] = static_cast<TokenId>(i % batch.length);
  }
  Tensor e = g.add(g.gather_rows(p.table, batch.ids), g.gather_rows(p.positions, positions));
  Tensor x = g.affine(e, p.proj, &p.proj_bias);
  return g.dropout(x, static_cast<Real>(config_.dropout));
}

Tensor Model::attention_block(Graph& g, const AttentionParams& p, const Tensor& x,
                              const Tensor* memory, const AttentionDims& dims,
                              std::span<const std::uint8_t> key_pad, bool causal) const {
  Tensor h = g.layer_norm(x, p.ln_gain, p.ln_bias);
  const Tensor& kv_in = memory ? *memory : h;
  Tensor q = g.affine(h, p.wq, &p.bq);
  Tensor k = g.affine(kv_in, p.wk, &p.bk);
  Tensor v = g.affine(kv_in, p.wv, &p.bv);
  Tensor a = g.attention(q, k, v, dims, key_pad, causal);
  Tensor o = g.dropout(g.affine(a, p.wo, &p.bo), static_cast<Real>(config_.dropout));
  return g.add(x, o);
}

Tensor Model::feed_forward_block(Graph& g, const FeedForwardParams& p, const Tensor& x) const {
  Tensor h = g.layer_norm(x, p.ln_gain, p.ln_bias);
  h = g.gelu(g.affine(h, p.w1, &p.b1));
  h = g.dropout(g.affine(h, p.w2, &p.b2), static_cast<Real>(config_.dropout));
  return g.add(x, h);
}

Tensor Model::run_encoder(Graph& g, const EncoderStack& stack, const Tensor& x,
                          const TokenBatch& batch) const {
  const AttentionDims dims{batch.batch, batch.length, batch.length, config_.n_heads};
  Tensor h = x;
  for (const auto& layer : stack.layers) {
    h = attention_block(g, layer.attn, h, nullptr, dims, batch.pad, false);
    h = feed_forward_block(g, layer.ffn, h);
  }
  return g.layer_norm(h, stack.final_gain, stack.final_bias);
}

Tensor Model::shared_encode(Graph& g, const Tensor& embedded, const TokenBatch& batch) const {
  if (embedded.rows() != batch.rows() || embedded.cols() != config_.d_model) {
    throw DimensionError("shared_encode: embeddings do not match the batch layout");
  }
  for (std::size_t b = 0; b < batch.batch; ++b) {
    if (batch.lengths[b] == 0) throw ValueError("shared_encode: sequence is entirely PAD");
  }
  return run_encoder(g, params_.shared, embedded, batch);
}

Tensor Model::restore_encode(Graph& g, const Tensor& shared_states, const TokenBatch& batch) const {
  return run_encoder(g, params_.restore, shared_states, batch);
}

Tensor Model::output_head(Graph& g, const OutputHeadParams& p, const Tensor& states) const {
  Tensor z = g.gelu(g.affine(states, p.transform, &p.transform_bias));
  z = g.layer_norm(z, p.ln_gain, p.ln_bias);
  return g.matmul_nt(z, p.output);
}

Tensor Model::hanja_logits(Graph& g, const Tensor& states) const {
  return output_head(g, params_.hanja_head, states);
}

Tensor Model::restore_logits(Graph& g, const Tensor& shared_states, const TokenBatch& batch) const {
  return hanja_logits(g, restore_encode(g, shared_states, batch));
}

Tensor Model::decode_logits(Graph& g, const Tensor& shared_states, const TokenBatch& source,
                            const TokenBatch& target_in) const {
  if (target_in.batch != source.batch) {
    throw DimensionError("decode_logits: source and target batch sizes differ");
  }
  for (std::size_t b = 0; b < target_in.batch; ++b) {
    if (target_in.lengths[b] == 0) throw ValueError("decode_logits: empty target prefix");
    if (target_in.ids[b * target_in.length] != special::kBos) {
      throw ValueError("decode_logits: target prefix must begin with BOS");
    }
  }
  Tensor h = embed(g, Side::kKorean, target_in);
  const AttentionDims self_dims{target_in.batch, target_in.length, target_in.length, config_.n_heads};
  const AttentionDims cross_dims{target_in.batch, target_in.length, source.length, config_.n_heads};
  for (const auto& layer : params_.decoder.layers) {
    // Right padding plus the causal mask means PAD targets are never visible
    // to real positions, so no key mask is needed for self-attention.
    h = attention_block(g, layer.self_attn, h, nullptr, self_dims, {}, true);
    h = attention_block(g, layer.cross_attn, h, &shared_states, cross_dims, source.pad, false);
    h = feed_forward_block(g, layer.ffn, h);
  }
  h = g.layer_norm(h, params_.decoder.final_gain, params_.decoder.final_bias);
  return output_head(g, params_.korean_head, h);
}

std::vector<Real> Model::decode_step_logits(const Tensor& shared_states, const TokenBatch& source,
                                            std::span<const TokenId> prefix) const {
  if (prefix.empty()) throw ValueError("decode_step_logits: empty prefix");
  if (source.batch != 1) throw DimensionError("decode_step_logits: expects a single source");
  Graph g(Graph::Mode::kEval);
  const TokenBatch target = TokenBatch::pack({std::vector<TokenId>(prefix.begin(), prefix.end())});
  Tensor logits = decode_logits(g, shared_states, source, target);
  const std::size_t V = logits.cols();
  auto d = logits.data();
  return std::vector<Real>(d.end() - static_cast<std::ptrdiff_t>(V), d.end());
}

Tensor Model::encode_source(Graph& g, const TokenBatch& source) const {
  return shared_encode(g, embed(g, Side::kHanja, source), source);
}

}  // namespace HMT_NN_NAMESPACE
}  // namespace hmt
