// SPDX-License-Identifier: Apache-2.0
#include "hmt/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "hmt/error.hpp"

namespace hmt {

namespace {

constexpr char kMagic[8] = {'H', 'M', 'T', 'O', 'P', 'T', '0', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw FormatError("optimizer state: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_floats(std::ostream& out, const std::vector<float>& v) {
  for (float f : v) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
  }
}

void read_floats(std::istream& in, std::vector<float>& v) {
  for (float& f : v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("optimizer state: truncated");
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    std::memcpy(&f, &bits, 4);
  }
}

}  // namespace

void OptimizerConfig::validate() const {
  auto fail = [](const std::string& what) { throw ValueError("optimizer: " + what); };
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 must lie in [0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) fail("beta2 must lie in (0, 1)");
  if (!(eps > 0.0)) fail("eps must be positive");
  if (!(trust_min > 0.0 && trust_min <= trust_max)) fail("trust clip must satisfy 0 < min <= max");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) fail("warmup_fraction must lie in [0, 1)");
}

nlohmann::json to_json(const OptimizerConfig& c) {
  return {{"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"trust_min", c.trust_min},
          {"trust_max", c.trust_max},
          {"trust_ratio", c.trust_ratio},
          {"warmup_fraction", c.warmup_fraction},
          {"schedule", c.schedule == LrSchedule::kConstant ? "constant" : "linear_decay"}};
}

OptimizerConfig optimizer_config_from_json(const nlohmann::json& j) {
  OptimizerConfig c;
  if (!j.is_object()) throw ValueError("optimizer: section must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lr") c.lr = value.get<double>();
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "eps") c.eps = value.get<double>();
      else if (key == "trust_min") c.trust_min = value.get<double>();
      else if (key == "trust_max") c.trust_max = value.get<double>();
      else if (key == "trust_ratio") c.trust_ratio = value.get<bool>();
      else if (key == "warmup_fraction") c.warmup_fraction = value.get<double>();
      else if (key == "schedule") {
        const auto s = value.get<std::string>();
        if (s == "constant") c.schedule = LrSchedule::kConstant;
        else if (s == "linear_decay") c.schedule = LrSchedule::kLinearDecay;
        else throw ValueError("optimizer: unknown schedule '" + s + "'");
      } else {
        throw ValueError("optimizer: unknown key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValueError("optimizer: bad value for '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

Optimizer::Optimizer(OptimizerConfig config, const std::vector<NamedBlock>& blocks)
    : config_(std::move(config)) {
  config_.validate();
  for (const auto& b : blocks) {
    moments_.push_back({b.name, std::vector<float>(b.tensor.numel(), 0.0f),
                        std::vector<float>(b.tensor.numel(), 0.0f), 0});
  }
}

double Optimizer::learning_rate(std::uint64_t step) const {
  const auto total = config_.total_steps;
  if (total == 0) return config_.lr;
  const double t = static_cast<double>(step) + 1.0;
  const double warmup = std::floor(config_.warmup_fraction * static_cast<double>(total));
  if (warmup > 0.0 && t <= warmup) return config_.lr * t / warmup;
  if (config_.schedule == LrSchedule::kConstant) return config_.lr;
  const double remaining = static_cast<double>(total) - warmup;
  const double frac = std::clamp((static_cast<double>(total) - t + 1.0) / remaining, 0.0, 1.0);
  return config_.lr * frac;
}

StepReport Optimizer::step(std::vector<NamedBlock>& blocks, double grad_scale) {
  if (blocks.size() != moments_.size()) {
    throw DimensionError("optimizer: block list does not match the optimizer state");
  }
  for (const auto& b : blocks) {
    if (!b.tensor.has_grad()) continue;
    for (float g : b.tensor.grad()) {
      if (!std::isfinite(g)) {
        for (auto& c : blocks) c.tensor.clear_grad();
        throw NumericError("optimizer: non-finite gradient in block '" + b.name + "'");
      }
    }
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
  StepReport report;
  report.lr = learning_rate(step_);
  std::vector<double> u;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    Tensor& w = blocks[i].tensor;
    if (!w.has_grad()) continue;
    MomentState& s = moments_[i];
    if (s.name != blocks[i].name || s.m.size() != w.numel()) {
      throw DimensionError("optimizer: state for '" + s.name + "' does not match block '" + blocks[i].name + "'");
    }
    s.updates += 1;
    const double t = static_cast<double>(s.updates);
    const double bc1 = 1.0 - std::pow(b1, t);
    const double b2t = std::pow(b2, t);
    const double rho_t = rho_inf - 2.0 * t * b2t / (1.0 - b2t);
    const bool rectified = rho_t > 4.0;
    const double r = rectified ? std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf /
                                           ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                               : 0.0;
    const double bc2 = 1.0 - b2t;
    auto g = w.grad();
    auto d = w.data();
    u.assign(w.numel(), 0.0);
    double w2 = 0.0, u2 = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
      const double gj = static_cast<double>(g[j]) * grad_scale;
      const double m = b1 * s.m[j] + (1.0 - b1) * gj;
      const double v = b2 * s.v[j] + (1.0 - b2) * gj * gj;
      s.m[j] = static_cast<float>(m);
      s.v[j] = static_cast<float>(v);
      const double m_hat = m / bc1;
      u[j] = rectified ? r * m_hat / (std::sqrt(v / bc2) + config_.eps) : m_hat;
      w2 += static_cast<double>(d[j]) * d[j];
      u2 += u[j] * u[j];
    }
    double ratio = 1.0;
    if (config_.trust_ratio && w2 > 0.0 && u2 > 0.0) {
      ratio = std::clamp(std::sqrt(w2) / std::sqrt(u2), config_.trust_min, config_.trust_max);
    }
    const double scale = report.lr * ratio;
    for (std::size_t j = 0; j < u.size(); ++j) d[j] = static_cast<float>(d[j] - scale * u[j]);
    w.clear_grad();
    ++report.blocks_updated;
  }
  ++step_;
  return report;
}

void Optimizer::save(std::ostream& out) const {
  out.write(kMagic, sizeof kMagic);
  write_u64(out, step_);
  write_u64(out, moments_.size());
  for (const auto& s : moments_) {
    write_u64(out, s.name.size());
    out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    write_u64(out, s.m.size());
    write_u64(out, s.updates);
    write_floats(out, s.m);
    write_floats(out, s.v);
  }
}

void Optimizer::load(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError("optimizer state: bad magic");
  }
  const auto step = read_u64(in);
  const auto count = read_u64(in);
  if (count != moments_.size()) throw FormatError("optimizer state: block count mismatch");
  std::vector<MomentState> loaded(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& s = loaded[i];
    s.name.resize(read_u64(in));
    if (!in.read(s.name.data(), static_cast<std::streamsize>(s.name.size()))) {
      throw FormatError("optimizer state: truncated");
    }
    if (s.name != moments_[i].name) throw FormatError("optimizer state: unexpected block '" + s.name + "'");
    const auto n = read_u64(in);
    if (n != moments_[i].m.size()) throw FormatError("optimizer state: size mismatch for '" + s.name + "'");
    s.updates = read_u64(in);
    s.m.resize(n);
    s.v.resize(n);
    read_floats(in, s.m);
    read_floats(in, s.v);
  }
  step_ = step;
  moments_ = std::move(loaded);
}

}  // namespace hmt
