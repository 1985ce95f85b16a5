// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with a tape-based reverse-mode autodiff.
//
// A Tensor is a handle: copies alias the same storage, which is how the
// model expresses parameter sharing. Every op is a member of Graph, which
// records a backward closure when any input requires a gradient. Tensors of
// rank > 2 are treated as [rows, cols] with cols = last dimension.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hmt/real.hpp"

namespace hmt {

using TokenId = std::int32_t;

inline namespace HMT_NN_NAMESPACE {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<Real> values, bool requires_grad = false);

  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<Real> data();
  std::span<const Real> data() const;
  Real item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<const Real> grad() const;
  std::span<Real> mutable_grad() const;
  /// Returns the gradient buffer, allocating a zero one if absent.
  std::span<Real> ensure_grad() const;
  /// Drops the gradient buffer; has_grad() becomes false.
  void clear_grad() const;

  /// Deep copy of the values; the copy has no gradient.
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  bool all_finite() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

/// Batch layout for the fused multi-head attention op. Queries are packed as
/// [batch * query_len, d] and keys/values as [batch * key_len, d].
struct AttentionDims {
  std::size_t batch = 1;
  std::size_t query_len = 0;
  std::size_t key_len = 0;
  std::size_t heads = 1;
};

class Graph {
 public:
  enum class Mode { kTrain, kEval };

  explicit Graph(Mode mode = Mode::kTrain, std::uint64_t seed = 0);

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool training() const { return mode_ == Mode::kTrain; }
  std::size_t recorded_ops() const { return tape_.size(); }

  /// y = x w (+ bias); x [n,a], w [a,b], bias [b].
  Tensor affine(const Tensor& x, const Tensor& w, const Tensor* bias = nullptr);
  /// y = x w^T; x [n,a], w [b,a]. Used by the factorized output heads.
  Tensor matmul_nt(const Tensor& x, const Tensor& w);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& x, Real factor);
  Tensor gelu(const Tensor& x);
  /// Row-wise normalization over the last dimension, then gamma * x + beta.
  Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    Real eps = 1e-5f);
  /// Inverted dropout; identity outside training mode or for rate 0.
  Tensor dropout(const Tensor& x, Real rate);
  /// out[i] = table[ids[i]].
  Tensor gather_rows(const Tensor& table, std::span<const TokenId> ids);
  Tensor softmax(const Tensor& x);
  Tensor sum(const Tensor& x);
  /// Scaled dot-product multi-head attention. key_pad (size batch*key_len,
  /// non-zero = padding) may be empty. With causal, query t sees keys <= t.
  Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                   const AttentionDims& dims, std::span<const std::uint8_t> key_pad,
                   bool causal);
  /// sum_i w_i * -log softmax(logits_i)[targets_i] over rows whose target is
  /// not ignore_id. With empty weights, w_i = 1 / (number of kept rows).
  Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets,
                       TokenId ignore_id, std::span<const Real> weights = {});

  /// Runs the recorded closures in reverse order, seeding d(loss) = 1.
  void backward(const Tensor& loss);
  /// Forgets the tape so the graph can record a new forward pass.
  void reset();

 private:
  bool tracks(std::initializer_list<const Tensor*> inputs) const;
  void record(std::function<void()> fn);

  Mode mode_;
  std::mt19937_64 rng_;
  std::vector<std::function<void()>> tape_;
  bool consumed_ = false;
};

/// Numerically stable log-softmax of one row, accumulated in double.
std::vector<Real> log_softmax(std::span<const Real> row);

}  // namespace HMT_NN_NAMESPACE
}  // namespace hmt
