// SPDX-License-Identifier: Apache-2.0
#include "hmt/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "hmt/error.hpp"
#include "hmt/random.hpp"

namespace hmt {
inline namespace HMT_NN_NAMESPACE {

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

ConstMatMap as_matrix(std::span<const Real> s, std::size_t rows, std::size_t cols) {
  return ConstMatMap(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatMap as_matrix(std::span<Real> s, std::size_t rows, std::size_t cols) {
  return MatMap(s.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw StateError(std::string(op) + ": undefined tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

void require_finite(const Tensor& t, const char* op) {
  if (!t.all_finite()) throw NumericError(std::string(op) + ": non-finite output");
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

struct Tensor::Impl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;
  bool requires_grad = false;
};

Tensor::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  if (shape.empty()) throw DimensionError("tensor: empty shape");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor: zero dimension in " + shape_to_string(shape));
  }
  impl_->data.assign(shape_numel(shape), 0.0f);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<Real> values, bool requires_grad)
    : Tensor(std::move(shape), requires_grad) {
  if (values.size() != impl_->data.size()) {
    throw DimensionError("tensor: " + std::to_string(values.size()) + " values for shape " +
                         shape_to_string(impl_->shape));
  }
  impl_->data = std::move(values);
}

Tensor Tensor::scalar(Real value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::numel() const { return impl_->data.size(); }
std::size_t Tensor::cols() const { return impl_->shape.back(); }
std::size_t Tensor::rows() const { return numel() / cols(); }

std::span<Real> Tensor::data() { return impl_->data; }
std::span<const Real> Tensor::data() const { return impl_->data; }

Real Tensor::item() const {
  if (numel() != 1) throw DimensionError("item: tensor has " + std::to_string(numel()) + " elements");
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const Real> Tensor::grad() const {
  if (!has_grad()) throw StateError("grad: tensor has no gradient");
  return impl_->grad;
}

std::span<Real> Tensor::mutable_grad() const {
  if (!has_grad()) throw StateError("grad: tensor has no gradient");
  return impl_->grad;
}

std::span<Real> Tensor::ensure_grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
  return impl_->grad;
}

void Tensor::clear_grad() const {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

Tensor Tensor::clone() const {
  Tensor out(impl_->shape, impl_->requires_grad);
  out.impl_->data = impl_->data;
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(impl_->data.begin(), impl_->data.end(),
                     [](Real v) { return std::isfinite(v); });
}

std::vector<Real> log_softmax(std::span<const Real> row) {
  if (row.empty()) throw DimensionError("log_softmax: empty row");
  const Real mx = *std::max_element(row.begin(), row.end());
  double acc = 0.0;
  for (Real v : row) acc += std::exp(static_cast<double>(v) - mx);
  const double lse = mx + std::log(acc);
  std::vector<Real> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = static_cast<Real>(row[i] - lse);
  return out;
}

// ---------------------------------------------------------------------------

Graph::Graph(Mode mode, std::uint64_t seed) : mode_(mode), rng_(seed) {}

bool Graph::tracks(std::initializer_list<const Tensor*> inputs) const {
  if (mode_ != Mode::kTrain) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t && t->requires_grad(); });
}

void Graph::record(std::function<void()> fn) {
  if (consumed_) throw StateError("graph: recording after backward; call reset() first");
  tape_.push_back(std::move(fn));
}

void Graph::reset() {
  tape_.clear();
  consumed_ = false;
}

void Graph::backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (consumed_) throw StateError("backward: graph already consumed; call reset() first");
  if (loss.numel() != 1) throw DimensionError("backward: loss must be a scalar");
  if (!loss.requires_grad()) throw StateError("backward: loss was not produced by a recorded graph");
  consumed_ = true;
  Tensor seed = loss;
  seed.ensure_grad()[0] += 1.0f;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
  tape_.clear();
}

Tensor Graph::affine(const Tensor& x, const Tensor& w, const Tensor* bias) {
  require_defined(x, "affine");
  require_defined(w, "affine");
  if (w.shape().size() != 2 || x.cols() != w.shape()[0]) {
    throw DimensionError("affine: cannot multiply " + shape_to_string(x.shape()) + " by " +
                         shape_to_string(w.shape()));
  }
  const std::size_t n = x.rows(), a = x.cols(), b = w.shape()[1];
  if (bias && (bias->numel() != b)) {
    throw DimensionError("affine: bias " + shape_to_string(bias->shape()) + " for output width " +
                         std::to_string(b));
  }
  Shape out_shape = x.shape();
  out_shape.back() = b;
  const bool track = tracks({&x, &w, bias});
  Tensor y(out_shape, track);
  auto ym = as_matrix(y.data(), n, b);
  ym.noalias() = as_matrix(x.data(), n, a) * as_matrix(w.data(), a, b);
  if (bias) {
    ym.rowwise() += Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(bias->data().data(), static_cast<Eigen::Index>(b));
  }
  require_finite(y, "affine");
  if (track) {
    Tensor bias_t = bias ? *bias : Tensor();
    record([x, w, bias_t, y, n, a, b]() mutable {
      if (!y.has_grad()) return;
      auto dy = as_matrix(y.grad(), n, b);
      if (x.requires_grad()) {
        as_matrix(x.ensure_grad(), n, a).noalias() += dy * as_matrix(w.data(), a, b).transpose();
      }
      if (w.requires_grad()) {
        as_matrix(w.ensure_grad(), a, b).noalias() += as_matrix(x.data(), n, a).transpose() * dy;
      }
      if (bias_t.defined() && bias_t.requires_grad()) {
        auto db = bias_t.ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < b; ++j) db[j] += dy(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
      }
    });
  }
  return y;
}

Tensor Graph::matmul_nt(const Tensor& x, const Tensor& w) {
  require_defined(x, "matmul_nt");
  require_defined(w, "matmul_nt");
  if (w.shape().size() != 2 || x.cols() != w.shape()[1]) {
    throw DimensionError("matmul_nt: cannot multiply " + shape_to_string(x.shape()) +
                         " by transpose of " + shape_to_string(w.shape()));
  }
  const std::size_t n = x.rows(), a = x.cols(), b = w.shape()[0];
  Shape out_shape = x.shape();
  out_shape.back() = b;
  const bool track = tracks({&x, &w});
  Tensor y(out_shape, track);
  as_matrix(y.data(), n, b).noalias() =
      as_matrix(x.data(), n, a) * as_matrix(w.data(), b, a).transpose();
  require_finite(y, "matmul_nt");
  if (track) {
    record([x, w, y, n, a, b]() mutable {
      if (!y.has_grad()) return;
      auto dy = as_matrix(y.grad(), n, b);
      if (x.requires_grad()) {
        as_matrix(x.ensure_grad(), n, a).noalias() += dy * as_matrix(w.data(), b, a);
      }
      if (w.requires_grad()) {
        as_matrix(w.ensure_grad(), b, a).noalias() += dy.transpose() * as_matrix(x.data(), n, a);
      }
    });
  }
  return y;
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  require_same_shape(a, b, "add");
  const bool track = tracks({&a, &b});
  Tensor y(a.shape(), track);
  auto yd = y.data();
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = ad[i] + bd[i];
  require_finite(y, "add");
  if (track) {
    record([a, b, y]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto g = t->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
      }
    });
  }
  return y;
}

Tensor Graph::scale(const Tensor& x, Real factor) {
  require_defined(x, "scale");
  const bool track = tracks({&x});
  Tensor y(x.shape(), track);
  auto xd = x.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = xd[i] * factor;
  require_finite(y, "scale");
  if (track) {
    record([x, y, factor]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto g = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * factor;
    });
  }
  return y;
}

Tensor Graph::gelu(const Tensor& x) {
  require_defined(x, "gelu");
  const bool track = tracks({&x});
  Tensor y(x.shape(), track);
  auto xd = x.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < yd.size(); ++i) {
    const double v = xd[i];
    yd[i] = static_cast<Real>(0.5 * v * (1.0 + std::erf(v * kInvSqrt2)));
  }
  require_finite(y, "gelu");
  if (track) {
    record([x, y]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto xd2 = x.data();
      auto g = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xd2[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        g[i] += static_cast<Real>(dy[i] * (cdf + v * pdf));
      }
    });
  }
  return y;
}

Tensor Graph::layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
  require_defined(x, "layer_norm");
  const std::size_t n = x.rows(), c = x.cols();
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("layer_norm: affine parameters do not match width " + std::to_string(c));
  }
  const bool track = tracks({&x, &gamma, &beta});
  Tensor y(x.shape(), track);
  // Normalized activations and inverse std per row, kept for backward.
  std::vector<Real> xhat(n * c);
  std::vector<Real> inv_std(n);
  auto xd = x.data();
  auto yd = y.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  for (std::size_t r = 0; r < n; ++r) {
    const Real* row = xd.data() + r * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = static_cast<Real>(is);
    for (std::size_t j = 0; j < c; ++j) {
      const Real h = static_cast<Real>((row[j] - mean) * is);
      xhat[r * c + j] = h;
      yd[r * c + j] = gd[j] * h + bd[j];
    }
  }
  require_finite(y, "layer_norm");
  if (track) {
    record([x, gamma, beta, y, n, c, xhat = std::move(xhat), inv_std = std::move(inv_std)]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto gd2 = gamma.data();
      if (gamma.requires_grad() || beta.requires_grad()) {
        std::vector<double> dg(c, 0.0), db(c, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t j = 0; j < c; ++j) {
            dg[j] += static_cast<double>(dy[r * c + j]) * xhat[r * c + j];
            db[j] += dy[r * c + j];
          }
        }
        if (gamma.requires_grad()) {
          auto g = gamma.ensure_grad();
          for (std::size_t j = 0; j < c; ++j) g[j] += static_cast<Real>(dg[j]);
        }
        if (beta.requires_grad()) {
          auto g = beta.ensure_grad();
          for (std::size_t j = 0; j < c; ++j) g[j] += static_cast<Real>(db[j]);
        }
      }
      if (x.requires_grad()) {
        auto gx = x.ensure_grad();
        for (std::size_t r = 0; r < n; ++r) {
          double sum_dh = 0.0, sum_dh_h = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            const double dh = static_cast<double>(dy[r * c + j]) * gd2[j];
            sum_dh += dh;
            sum_dh_h += dh * xhat[r * c + j];
          }
          const double inv_c = 1.0 / static_cast<double>(c);
          for (std::size_t j = 0; j < c; ++j) {
            const double dh = static_cast<double>(dy[r * c + j]) * gd2[j];
            gx[r * c + j] += static_cast<Real>(
                inv_std[r] * (dh - inv_c * sum_dh - xhat[r * c + j] * inv_c * sum_dh_h));
          }
        }
      }
    });
  }
  return y;
}

Tensor Graph::dropout(const Tensor& x, Real rate) {
  require_defined(x, "dropout");
  if (rate < 0.0f || rate >= 1.0f) throw ValueError("dropout: rate must be in [0, 1)");
  if (!training() || rate == 0.0f) return x;
  const bool track = tracks({&x});
  Tensor y(x.shape(), track);
  std::vector<Real> mask(x.numel());
  const Real inv_keep = 1.0f / (1.0f - rate);
  auto xd = x.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = uniform_real(rng_) >= static_cast<double>(rate) ? inv_keep : Real(0);
    yd[i] = xd[i] * mask[i];
  }
  if (track) {
    record([x, y, mask = std::move(mask)]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto g = x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * mask[i];
    });
  }
  return y;
}

Tensor Graph::gather_rows(const Tensor& table, std::span<const TokenId> ids) {
  require_defined(table, "gather_rows");
  if (ids.empty()) throw DimensionError("gather_rows: no ids");
  const std::size_t vocab = table.rows(), c = table.cols();
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw DimensionError("gather_rows: id " + std::to_string(id) + " outside table of " +
                           std::to_string(vocab) + " rows");
    }
  }
  const bool track = tracks({&table});
  Tensor y({ids.size(), c}, track);
  auto td = table.data();
  auto yd = y.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(ids[i] * c), c,
                yd.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  if (track) {
    record([table, y, c, idv = std::vector<TokenId>(ids.begin(), ids.end())]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto g = table.ensure_grad();
      for (std::size_t i = 0; i < idv.size(); ++i) {
        Real* dst = g.data() + static_cast<std::size_t>(idv[i]) * c;
        const Real* src = dy.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
      }
    });
  }
  return y;
}

Tensor Graph::softmax(const Tensor& x) {
  require_defined(x, "softmax");
  const std::size_t n = x.rows(), c = x.cols();
  const bool track = tracks({&x});
  Tensor y(x.shape(), track);
  auto xd = x.data();
  auto yd = y.data();
  for (std::size_t r = 0; r < n; ++r) {
    auto lp = log_softmax(xd.subspan(r * c, c));
    for (std::size_t j = 0; j < c; ++j) yd[r * c + j] = std::exp(lp[j]);
  }
  require_finite(y, "softmax");
  if (track) {
    record([x, y, n, c]() mutable {
      if (!y.has_grad()) return;
      auto dy = y.grad();
      auto yd2 = y.data();
      auto g = x.ensure_grad();
      for (std::size_t r = 0; r < n; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += static_cast<double>(dy[r * c + j]) * yd2[r * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          g[r * c + j] += static_cast<Real>(yd2[r * c + j] * (dy[r * c + j] - dot));
        }
      }
    });
  }
  return y;
}

Tensor Graph::sum(const Tensor& x) {
  require_defined(x, "sum");
  const bool track = tracks({&x});
  double acc = 0.0;
  for (Real v : x.data()) acc += v;
  Tensor y = Tensor::scalar(static_cast<Real>(acc), track);
  require_finite(y, "sum");
  if (track) {
    record([x, y]() mutable {
      if (!y.has_grad()) return;
      const Real dy = y.grad()[0];
      for (Real& g : x.ensure_grad()) g += dy;
    });
  }
  return y;
}

Tensor Graph::attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionDims& dims,
                        std::span<const std::uint8_t> key_pad, bool causal) {
  require_defined(q, "attention");
  require_defined(k, "attention");
  require_defined(v, "attention");
  const std::size_t d = q.cols();
  const std::size_t B = dims.batch, Lq = dims.query_len, Lk = dims.key_len, H = dims.heads;
  if (H == 0 || d % H != 0) throw DimensionError("attention: width not divisible by heads");
  if (q.rows() != B * Lq || k.rows() != B * Lk || v.rows() != B * Lk || k.cols() != d ||
      v.cols() != d) {
    throw DimensionError("attention: packed shapes do not match batch layout");
  }
  if (!key_pad.empty() && key_pad.size() != B * Lk) {
    throw DimensionError("attention: key padding mask has wrong length");
  }
  if (causal && Lq > Lk) throw DimensionError("attention: causal mask needs query_len <= key_len");
  const std::size_t dh = d / H;
  const Real inv_scale = 1.0f / std::sqrt(static_cast<Real>(dh));
  const bool track = tracks({&q, &k, &v});
  Tensor y(q.shape(), track);
  std::vector<Real> probs(B * H * Lq * Lk, 0.0f);
  const auto ld = static_cast<Eigen::Index>(d);
  const auto eLq = static_cast<Eigen::Index>(Lq), eLk = static_cast<Eigen::Index>(Lk),
             edh = static_cast<Eigen::Index>(dh);

  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      ConstStridedMap Q(q.data().data() + b * Lq * d + h * dh, eLq, edh, Eigen::OuterStride<>(ld));
      ConstStridedMap K(k.data().data() + b * Lk * d + h * dh, eLk, edh, Eigen::OuterStride<>(ld));
      ConstStridedMap V(v.data().data() + b * Lk * d + h * dh, eLk, edh, Eigen::OuterStride<>(ld));
      MatMap P(probs.data() + (b * H + h) * Lq * Lk, eLq, eLk);
      P.noalias() = (Q * K.transpose()) * inv_scale;
      for (std::size_t i = 0; i < Lq; ++i) {
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t j = 0; j < Lk; ++j) {
          const bool masked = (!key_pad.empty() && key_pad[b * Lk + j]) || (causal && j > i);
          auto& s = P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          if (masked) s = -std::numeric_limits<Real>::infinity();
          mx = std::max(mx, s);
        }
        if (!std::isfinite(mx)) {
          P.row(static_cast<Eigen::Index>(i)).setZero();
          continue;
        }
        double total = 0.0;
        for (std::size_t j = 0; j < Lk; ++j) {
          auto& s = P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          s = std::exp(s - mx);
          total += s;
        }
        P.row(static_cast<Eigen::Index>(i)) /= static_cast<Real>(total);
      }
      StridedMap O(y.data().data() + b * Lq * d + h * dh, eLq, edh, Eigen::OuterStride<>(ld));
      O.noalias() = P * V;
    }
  }
  require_finite(y, "attention");
  if (track) {
    record([q, k, v, y, B, H, Lq, Lk, d, dh, inv_scale, probs = std::move(probs)]() mutable {
      if (!y.has_grad()) return;
      const auto ld2 = static_cast<Eigen::Index>(d);
      const auto eLq2 = static_cast<Eigen::Index>(Lq), eLk2 = static_cast<Eigen::Index>(Lk),
                 edh2 = static_cast<Eigen::Index>(dh);
      Real* gq = q.requires_grad() ? q.ensure_grad().data() : nullptr;
      Real* gk = k.requires_grad() ? k.ensure_grad().data() : nullptr;
      Real* gv = v.requires_grad() ? v.ensure_grad().data() : nullptr;
      RowMat dP(eLq2, eLk2);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t h = 0; h < H; ++h) {
          const std::size_t qoff = b * Lq * d + h * dh, koff = b * Lk * d + h * dh;
          ConstStridedMap Q(q.data().data() + qoff, eLq2, edh2, Eigen::OuterStride<>(ld2));
          ConstStridedMap K(k.data().data() + koff, eLk2, edh2, Eigen::OuterStride<>(ld2));
          ConstStridedMap V(v.data().data() + koff, eLk2, edh2, Eigen::OuterStride<>(ld2));
          ConstStridedMap dO(y.grad().data() + qoff, eLq2, edh2, Eigen::OuterStride<>(ld2));
          ConstMatMap P(probs.data() + (b * H + h) * Lq * Lk, eLq2, eLk2);
          if (gv) {
            StridedMap(gv + koff, eLk2, edh2, Eigen::OuterStride<>(ld2)).noalias() += P.transpose() * dO;
          }
          dP.noalias() = dO * V.transpose();
          // dS = P * (dP - rowsum(dP * P)), then scaled.
          for (Eigen::Index i = 0; i < eLq2; ++i) {
            double dot = 0.0;
            for (Eigen::Index j = 0; j < eLk2; ++j) dot += static_cast<double>(dP(i, j)) * P(i, j);
            for (Eigen::Index j = 0; j < eLk2; ++j) {
              dP(i, j) = static_cast<Real>(P(i, j) * (dP(i, j) - dot)) * inv_scale;
            }
          }
          if (gq) {
            StridedMap(gq + qoff, eLq2, edh2, Eigen::OuterStride<>(ld2)).noalias() += dP * K;
          }
          if (gk) {
            StridedMap(gk + koff, eLk2, edh2, Eigen::OuterStride<>(ld2)).noalias() += dP.transpose() * Q;
          }
        }
      }
    });
  }
  return y;
}

Tensor Graph::cross_entropy(const Tensor& logits, std::span<const TokenId> targets, TokenId ignore_id,
                            std::span<const Real> weights) {
  require_defined(logits, "cross_entropy");
  const std::size_t n = logits.rows(), V = logits.cols();
  if (targets.size() != n) throw DimensionError("cross_entropy: targets do not match logit rows");
  if (!weights.empty() && weights.size() != n) {
    throw DimensionError("cross_entropy: weights do not match logit rows");
  }
  std::size_t kept = 0;
  for (TokenId t : targets) {
    if (t == ignore_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= V) {
      throw DimensionError("cross_entropy: target " + std::to_string(t) + " outside vocabulary");
    }
    ++kept;
  }
  if (kept == 0) throw ValueError("cross_entropy: every position is ignored; loss is empty");
  std::vector<Real> w(n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] == ignore_id) continue;
    w[i] = weights.empty() ? 1.0f / static_cast<Real>(kept) : weights[i];
  }
  const bool track = tracks({&logits});
  auto ld = logits.data();
  std::vector<Real> probs(track ? n * V : 0);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] == ignore_id) continue;
    auto lp = log_softmax(ld.subspan(i * V, V));
    loss -= static_cast<double>(w[i]) * lp[static_cast<std::size_t>(targets[i])];
    if (track) {
      for (std::size_t j = 0; j < V; ++j) probs[i * V + j] = std::exp(lp[j]);
    }
  }
  Tensor y = Tensor::scalar(static_cast<Real>(loss), track);
  require_finite(y, "cross_entropy");
  if (track) {
    record([logits, y, n, V, w = std::move(w), probs = std::move(probs),
            tv = std::vector<TokenId>(targets.begin(), targets.end())]() mutable {
      if (!y.has_grad()) return;
      const Real dy = y.grad()[0];
      auto g = logits.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        if (w[i] == 0.0f) continue;
        const Real s = dy * w[i];
        for (std::size_t j = 0; j < V; ++j) g[i * V + j] += s * probs[i * V + j];
        g[i * V + static_cast<std::size_t>(tv[i])] -= s;
      }
    });
  }
  return y;
}

}  // namespace HMT_NN_NAMESPACE
}  // namespace hmt
