// SPDX-License-Identifier: Apache-2.0
#include "hmt/vocab.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "hmt/error.hpp"

namespace hmt {

namespace {

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out.push_back(s[i]);
      continue;
    }
    if (++i == s.size()) throw FormatError("vocab: dangling escape");
    switch (s[i]) {
      case '\\': out.push_back('\\'); break;
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      default: throw FormatError(std::string("vocab: unknown escape \\") + s[i]);
    }
  }
  return out;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string format_logprob(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

const std::vector<std::string>& Vocab::special_tokens() {
  static const std::vector<std::string> specials = {"[PAD]", "[UNK]", "[MASK]", "[BOS]", "[EOS]"};
  return specials;
}

bool Vocab::is_special(std::string_view token) {
  const auto& s = special_tokens();
  return std::find(s.begin(), s.end(), token) != s.end();
}

Vocab::Vocab(Side side) : side_(side) {
  for (const auto& s : special_tokens()) {
    index_.emplace(s, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(s);
    logprobs_.push_back(std::nullopt);
  }
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? special::kUnk : it->second;
}

bool Vocab::contains(std::string_view token) const { return index_.contains(std::string(token)); }

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw NotFoundError("vocab: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<double> Vocab::logprob(TokenId id) const {
  token(id);
  return logprobs_[static_cast<std::size_t>(id)];
}

TokenId Vocab::add(std::string token, std::optional<double> logprob) {
  if (token.empty()) throw ValueError("vocab: empty token");
  if (is_special(token)) throw ValueError("vocab: '" + token + "' is reserved");
  if (index_.contains(token)) throw ValueError("vocab: duplicate token '" + token + "'");
  const auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(token, id);
  tokens_.push_back(std::move(token));
  logprobs_.push_back(logprob);
  return id;
}

std::string Vocab::serialize() const {
  std::ostringstream os;
  os << "#hmt-vocab\tside=" << side_name(side_) << "\tsize=" << tokens_.size()
     << "\tversion=" << kFormatVersion << '\n';
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    os << escape(tokens_[i]) << '\t' << i << '\t';
    if (logprobs_[i]) os << format_logprob(*logprobs_[i]);
    os << '\n';
  }
  return os.str();
}

Vocab Vocab::parse(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  if (!std::getline(is, line)) throw FormatError("vocab: missing header");
  const auto header = split_tabs(line);
  if (header.size() != 4 || header[0] != "#hmt-vocab") throw FormatError("vocab: bad header '" + line + "'");
  auto field = [&](std::string_view part, std::string_view key) {
    if (part.substr(0, key.size()) != key) throw FormatError("vocab: bad header field '" + std::string(part) + "'");
    return std::string(part.substr(key.size()));
  };
  Vocab v(side_from_name(field(header[1], "side=").c_str()));
  const std::size_t size = std::stoul(field(header[2], "size="));
  const int version = std::stoi(field(header[3], "version="));
  if (version != kFormatVersion) throw FormatError("vocab: unsupported version " + std::to_string(version));

  std::size_t row = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    if (cols.size() != 3) throw FormatError("vocab: malformed row " + std::to_string(row));
    const std::string token = unescape(cols[0]);
    std::size_t id = 0;
    auto [p, ec] = std::from_chars(cols[1].data(), cols[1].data() + cols[1].size(), id);
    if (ec != std::errc() || id != row) throw FormatError("vocab: ids must be dense, row " + std::to_string(row));
    std::optional<double> lp;
    if (!cols[2].empty()) lp = std::stod(std::string(cols[2]));
    if (row < special::kCount) {
      if (token != special_tokens()[row]) throw FormatError("vocab: special token mismatch at id " + std::to_string(row));
      v.logprobs_[row] = lp;
    } else {
      v.add(token, lp);
    }
    ++row;
  }
  if (v.size() != size) {
    throw FormatError("vocab: header declares " + std::to_string(size) + " entries, found " +
                      std::to_string(v.size()));
  }
  return v;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << serialize();
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot read vocabulary " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string Vocab::hash() const { return fnv1a_hex(serialize()); }

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& tokenized, Side side,
                  const VocabOptions& options,
                  const std::unordered_map<std::string, double>* logprobs) {
  if (tokenized.empty()) throw ValueError("build_vocab: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& sentence : tokenized) {
    for (const auto& tok : sentence) {
      if (!tok.empty() && !Vocab::is_special(tok)) ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n > options.min_count) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (options.max_size > 0) {
    if (options.max_size < special::kCount) throw ValueError("build_vocab: max_size smaller than the specials");
    const std::size_t room = options.max_size - special::kCount;
    if (kept.size() > room) kept.resize(room);
  }
  Vocab v(side);
  for (auto& [tok, n] : kept) {
    std::optional<double> lp;
    if (logprobs) {
      auto it = logprobs->find(tok);
      if (it != logprobs->end()) lp = it->second;
    }
    v.add(tok, lp);
  }
  return v;
}

}  // namespace hmt
