// SPDX-License-Identifier: Apache-2.0
#include "hmt/checkpoint.hpp"

#include <atomic>
#include <cstring>
#include <map>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "hmt/error.hpp"

namespace hmt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kTensorMagic[8] = {'H', 'M', 'T', 'T', 'E', 'N', 'S', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("tensors.bin: truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string unique_suffix() {
  static std::atomic<unsigned> counter{0};
  return std::to_string(::getpid()) + "-" + std::to_string(counter++);
}

json manifest_to_json(const CheckpointManifest& m) {
  json j = {{"version", m.version}, {"id", m.id},         {"step", m.step},
            {"model", to_json(m.model)}, {"metrics", m.metrics}, {"extra", m.extra}};
  j["vocab_hashes"] = json::object();
  if (m.hanja_vocab_hash) j["vocab_hashes"]["hanja"] = *m.hanja_vocab_hash;
  if (m.korean_vocab_hash) j["vocab_hashes"]["korean"] = *m.korean_vocab_hash;
  return j;
}

CheckpointManifest manifest_from_json(const json& j) {
  CheckpointManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != kCheckpointVersion) {
      throw FormatError("checkpoint: unsupported version " + std::to_string(m.version));
    }
    m.id = j.at("id").get<std::string>();
    m.step = j.at("step").get<std::uint64_t>();
    m.model = model_config_from_json(j.at("model"));
    m.metrics = j.value("metrics", json::object());
    m.extra = j.value("extra", json::object());
    const auto& vh = j.at("vocab_hashes");
    if (vh.contains("hanja")) m.hanja_vocab_hash = vh["hanja"].get<std::string>();
    if (vh.contains("korean")) m.korean_vocab_hash = vh["korean"].get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }
  return m;
}

}  // namespace

std::string serialize_tensors(const std::vector<NamedBlock>& blocks) {
  std::string out(kTensorMagic, sizeof kTensorMagic);
  put_u64(out, blocks.size());
  for (const auto& b : blocks) {
    put_u64(out, b.name.size());
    out += b.name;
    put_u64(out, b.tensor.shape().size());
    for (auto d : b.tensor.shape()) put_u64(out, d);
    for (float f : b.tensor.data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(bits >> (8 * i)));
    }
  }
  return out;
}

void deserialize_tensors(std::string_view bytes, std::vector<NamedBlock>& blocks) {
  Reader r(bytes);
  if (r.take(8) != std::string_view(kTensorMagic, 8)) throw FormatError("tensors.bin: bad magic");
  const auto count = r.u64();
  if (count != blocks.size()) {
    throw FormatError("tensors.bin: " + std::to_string(count) + " blocks, model expects " +
                      std::to_string(blocks.size()));
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < blocks.size(); ++i) index[blocks[i].name] = i;
  std::vector<bool> seen(blocks.size(), false);
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::string name(r.take(r.u64()));
    auto it = index.find(name);
    if (it == index.end()) throw FormatError("tensors.bin: unexpected block '" + name + "'");
    if (seen[it->second]) throw FormatError("tensors.bin: duplicate block '" + name + "'");
    seen[it->second] = true;
    Tensor& t = blocks[it->second].tensor;
    Shape shape(r.u64());
    for (auto& d : shape) d = r.u64();
    if (shape != t.shape()) {
      throw FormatError("tensors.bin: block '" + name + "' has shape " + shape_to_string(shape) +
                        ", model expects " + shape_to_string(t.shape()));
    }
    const auto raw = r.take(t.numel() * 4);
    auto d = t.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      std::uint32_t bits = 0;
      for (int j = 0; j < 4; ++j) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[i * 4 + j])) << (8 * j);
      std::memcpy(&d[i], &bits, 4);
    }
  }
  if (!r.done()) throw FormatError("tensors.bin: trailing bytes");
}

void write_file_atomic(const fs::path& path, std::string_view text) {
  const fs::path tmp = path.string() + ".tmp-" + unique_suffix();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CheckpointManifest save_checkpoint(const fs::path& dir, const CheckpointContents& c) {
  if (!c.model) throw ValueError("save_checkpoint: no model");
  const fs::path parent = dir.has_parent_path() ? dir.parent_path() : fs::path(".");
  fs::create_directories(parent);
  const fs::path tmp = parent / ("." + dir.filename().string() + ".tmp-" + unique_suffix());
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  const std::string tensors = serialize_tensors(c.model->params().blocks());
  CheckpointManifest m;
  m.id = fnv1a_hex(tensors);
  m.step = c.step;
  m.model = c.model->config();
  m.metrics = c.metrics;
  m.extra = c.extra;
  {
    std::ofstream out(tmp / "tensors.bin", std::ios::binary);
    out.write(tensors.data(), static_cast<std::streamsize>(tensors.size()));
    if (!out) throw Error("cannot write tensors.bin under " + tmp.string());
  }
  if (c.optimizer) {
    std::ofstream out(tmp / "optimizer.bin", std::ios::binary);
    c.optimizer->save(out);
    if (!out) throw Error("cannot write optimizer.bin under " + tmp.string());
  }
  if (c.hanja_vocab) {
    c.hanja_vocab->save(tmp / "hanja.vocab");
    m.hanja_vocab_hash = c.hanja_vocab->hash();
  }
  if (c.korean_vocab) {
    c.korean_vocab->save(tmp / "korean.vocab");
    m.korean_vocab_hash = c.korean_vocab->hash();
  }
  {
    std::ofstream out(tmp / "manifest.json");
    out << manifest_to_json(m).dump(2) << '\n';
  }
  if (fs::exists(dir)) {
    const fs::path old = parent / ("." + dir.filename().string() + ".old-" + unique_suffix());
    fs::rename(dir, old);
    fs::rename(tmp, dir);
    fs::remove_all(old);
  } else {
    fs::rename(tmp, dir);
  }
  return m;
}

CheckpointManifest read_manifest(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw NotFoundError("no checkpoint at " + dir.string());
  json j;
  try {
    j = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::parse_error& e) {
    throw FormatError("checkpoint manifest: " + std::string(e.what()));
  }
  return manifest_from_json(j);
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  auto manifest = read_manifest(dir);
  const std::string tensors = read_file(dir / "tensors.bin");
  if (fnv1a_hex(tensors) != manifest.id) throw FormatError("checkpoint: tensors.bin does not match manifest id");
  ModelParams params(manifest.model, 0);
  deserialize_tensors(tensors, params.blocks());
  LoadedCheckpoint out{dir, manifest, Model(manifest.model, std::move(params)), std::nullopt, std::nullopt};
  auto load_vocab = [&](const char* file, const std::optional<std::string>& hash, std::optional<Vocab>& slot) {
    if (!hash) return;
    slot = Vocab::load(dir / file);
    if (slot->hash() != *hash) throw FormatError(std::string("checkpoint: ") + file + " hash mismatch");
  };
  load_vocab("hanja.vocab", manifest.hanja_vocab_hash, out.hanja_vocab);
  load_vocab("korean.vocab", manifest.korean_vocab_hash, out.korean_vocab);
  return out;
}

bool has_optimizer_state(const fs::path& dir) { return fs::exists(dir / "optimizer.bin"); }

void load_optimizer_state(const fs::path& dir, Optimizer& optimizer) {
  std::ifstream in(dir / "optimizer.bin", std::ios::binary);
  if (!in) throw NotFoundError("no optimizer state in " + dir.string());
  optimizer.load(in);
}

}  // namespace hmt
