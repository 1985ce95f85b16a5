// SPDX-License-Identifier: Apache-2.0
#include "hmt/topics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "hmt/error.hpp"
#include "hmt/random.hpp"
#include "hmt/utf8.hpp"

namespace hmt {

namespace fs = std::filesystem;

namespace {

const char* const kDefaultStopwords[] = {
    // Korean function words and light nouns
    "이", "그", "저", "것", "수", "등", "및", "또", "또한", "더", "때", "중", "하다", "있다", "없다", "되다",
    "이다", "아니다", "하여", "하고", "하니", "하였다", "하였으니", "그리고", "그러나", "에", "의", "을",
    "를", "은", "는", "가", "와", "과", "도", "로", "으로", "에서",
    // English, for translated glosses
    "a", "an", "and", "the", "of", "to", "in", "on", "is", "was", "it", "for", "with", "as", "by", "at"};

bool is_ascii_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

}  // namespace

WhitespaceTermTokenizer::WhitespaceTermTokenizer()
    : stopwords_(std::begin(kDefaultStopwords), std::end(kDefaultStopwords)) {}

WhitespaceTermTokenizer::WhitespaceTermTokenizer(std::unordered_set<std::string> stopwords)
    : stopwords_(std::move(stopwords)) {}

std::unordered_set<std::string> WhitespaceTermTokenizer::load_stopwords(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot read stopword list " + path.string());
  std::unordered_set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty() && line[0] != '#') out.insert(line);
  }
  return out;
}

std::vector<std::string> WhitespaceTermTokenizer::terms(std::string_view text) const {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    std::string_view word = text.substr(i, j - i);
    while (!word.empty() && is_ascii_punct(word.front())) word.remove_prefix(1);
    while (!word.empty() && is_ascii_punct(word.back())) word.remove_suffix(1);
    if (!word.empty()) {
      std::string w(word);
      for (auto& c : w) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (!stopwords_.contains(w)) out.push_back(std::move(w));
    }
    i = j;
  }
  return out;
}

CharacterTermTokenizer::CharacterTermTokenizer(std::unordered_set<std::string> stopwords)
    : stopwords_(std::move(stopwords)) {}

std::vector<std::string> CharacterTermTokenizer::terms(std::string_view text) const {
  std::vector<std::string> out;
  for (auto& c : utf8::split_chars(text)) {
    if (c.size() == 1 && (std::isspace(static_cast<unsigned char>(c[0])) || is_ascii_punct(c[0]))) continue;
    if (!stopwords_.contains(c)) out.push_back(std::move(c));
  }
  return out;
}

DateGranularity date_granularity_from_name(const std::string& name) {
  if (name == "day") return DateGranularity::kDay;
  if (name == "month") return DateGranularity::kMonth;
  if (name == "year") return DateGranularity::kYear;
  throw ValueError("unknown date granularity '" + name + "' (day, month, year)");
}

TermWeighting term_weighting_from_name(const std::string& name) {
  if (name == "raw") return TermWeighting::kRaw;
  if (name == "tfidf") return TermWeighting::kTfIdf;
  throw ValueError("unknown term weighting '" + name + "' (raw, tfidf)");
}

std::string date_key(std::string_view date, DateGranularity g) {
  auto digits = [&](std::size_t pos, std::size_t n) {
    if (date.size() < pos + n) return false;
    for (std::size_t i = pos; i < pos + n; ++i) {
      if (!std::isdigit(static_cast<unsigned char>(date[i]))) return false;
    }
    return true;
  };
  const bool year = digits(0, 4) && (date.size() == 4 || date[4] == '-');
  const bool month = year && date.size() >= 7 && digits(5, 2) && (date.size() == 7 || date[7] == '-');
  const bool day = month && date.size() == 10 && digits(8, 2);
  const bool shape_ok = (date.size() == 4 && year) || (date.size() == 7 && month) || (date.size() == 10 && day);
  if (!shape_ok) throw FormatError("malformed date '" + std::string(date) + "' (YYYY[-MM[-DD]])");
  const std::size_t need = g == DateGranularity::kYear ? 4 : g == DateGranularity::kMonth ? 7 : 10;
  if (date.size() < need) {
    throw FormatError("date '" + std::string(date) + "' is coarser than the requested granularity");
  }
  return std::string(date.substr(0, need));
}

TermDateMatrix build_term_date_matrix(const std::vector<DatedDocument>& docs, const TermTokenizer& tokenizer,
                                      const TermDateOptions& options) {
  if (docs.empty()) throw ValueError("term-date matrix: empty corpus");
  std::map<std::string, std::map<std::string, double>> counts;  // term -> date -> count
  std::map<std::string, std::size_t> dates;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (!docs[i].date) throw ValueError("term-date matrix: document " + std::to_string(i) + " has no date");
    const std::string key = date_key(*docs[i].date, options.granularity);
    dates.emplace(key, 0);
    for (const auto& t : tokenizer.terms(docs[i].text)) counts[t][key] += 1.0;
  }
  TermDateMatrix m;
  for (auto& [d, idx] : dates) {
    idx = m.dates.size();
    m.dates.push_back(d);
  }
  const double n_dates = static_cast<double>(m.dates.size());
  std::vector<std::pair<std::string, Eigen::VectorXd>> rows;
  for (const auto& [term, by_date] : counts) {
    double total = 0.0;
    for (const auto& [d, c] : by_date) total += c;
    if (total < static_cast<double>(options.min_frequency)) continue;
    Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.dates.size()));
    const double idf = options.weighting == TermWeighting::kTfIdf
                           ? std::log(n_dates / static_cast<double>(by_date.size()))
                           : 1.0;
    for (const auto& [d, c] : by_date) row(static_cast<Eigen::Index>(dates.at(d))) = c * idf;
    if (row.sum() > 0.0) rows.emplace_back(term, std::move(row));
  }
  if (rows.empty()) throw ValueError("term-date matrix: no terms survive pruning");
  m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.dates.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.values.row(static_cast<Eigen::Index>(i)) = rows[i].second.transpose();
    m.terms.push_back(rows[i].first);
  }
  return m;
}

double nmf_objective(const Eigen::MatrixXd& v, const Eigen::MatrixXd& w, const Eigen::MatrixXd& h, double alpha) {
  return (v - w * h.transpose()).squaredNorm() + alpha * (w.sum() + h.sum());
}

TopicModel nmf_fit(const TermDateMatrix& v, const NmfOptions& o) {
  const auto rows = v.values.rows(), cols = v.values.cols();
  if (o.k == 0 || o.k >= static_cast<std::size_t>(std::min(rows, cols))) {
    throw ValueError("nmf_fit: K=" + std::to_string(o.k) + " must be positive and below min(" + std::to_string(rows) +
                     ", " + std::to_string(cols) + ")");
  }
  if (o.alpha < 0.0) throw ValueError("nmf_fit: alpha must be non-negative");
  if (o.max_iter == 0) throw ValueError("nmf_fit: max_iter must be positive");
  if ((v.values.array() < 0.0).any() || !v.values.allFinite()) {
    throw ValueError("nmf_fit: V must be finite and non-negative");
  }
  const auto k = static_cast<Eigen::Index>(o.k);
  TopicModel m;
  m.terms = v.terms;
  m.dates = v.dates;
  m.options = o;
  Rng rng(o.seed);
  const double scale = v.values.mean() / static_cast<double>(o.k);
  auto init = [&](Eigen::Index r) {
    Eigen::MatrixXd x(r, k);
    for (Eigen::Index j = 0; j < k; ++j) {
      for (Eigen::Index i = 0; i < r; ++i) x(i, j) = std::max(uniform_real(rng) * scale, kNmfFloor);
    }
    return x;
  };
  m.w = init(rows);
  m.h = init(cols);
  const Eigen::MatrixXd& V = v.values;
  const double half_alpha = o.alpha / 2.0;
  m.objective.push_back(nmf_objective(V, m.w, m.h, o.alpha));
  for (std::size_t it = 0; it < o.max_iter; ++it) {
    const Eigen::MatrixXd num_w = (V * m.h).array() - half_alpha;
    const Eigen::MatrixXd den_w = m.w * (m.h.transpose() * m.h);
    m.w = (m.w.array() * num_w.array().max(0.0) / den_w.array().max(kNmfFloor)).max(kNmfFloor);
    const Eigen::MatrixXd num_h = (V.transpose() * m.w).array() - half_alpha;
    const Eigen::MatrixXd den_h = m.h * (m.w.transpose() * m.w);
    m.h = (m.h.array() * num_h.array().max(0.0) / den_h.array().max(kNmfFloor)).max(kNmfFloor);
    const double obj = nmf_objective(V, m.w, m.h, o.alpha);
    if (!std::isfinite(obj)) throw NumericError("nmf_fit: non-finite objective at iteration " + std::to_string(it + 1));
    const double prev = m.objective.back();
    m.objective.push_back(obj);
    if (std::abs(prev - obj) <= o.tol * std::max(std::abs(prev), 1e-300)) {
      m.converged = true;
      break;
    }
  }
  return m;
}

TopicModel normalize_topics(const TopicModel& model) {
  TopicModel m = model;
  for (Eigen::Index j = 0; j < m.w.cols(); ++j) {
    const double s = m.w.col(j).sum();
    if (s <= 0.0) continue;
    m.w.col(j) /= s;
    m.h.col(j) *= s;
  }
  return m;
}

TopicReport topic_report(const TopicModel& model, std::size_t top_n) {
  if (top_n == 0) throw ValueError("topic_report: top_n must be positive");
  TopicReport r;
  if (top_n > model.terms.size()) {
    r.warnings.push_back("top_n " + std::to_string(top_n) + " clamped to the " + std::to_string(model.terms.size()) +
                         " terms available");
    top_n = model.terms.size();
  }
  const TopicModel m = normalize_topics(model);
  for (Eigen::Index j = 0; j < m.w.cols(); ++j) {
    std::vector<std::size_t> order(m.terms.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double wa = m.w(static_cast<Eigen::Index>(a), j), wb = m.w(static_cast<Eigen::Index>(b), j);
      return wa != wb ? wa > wb : m.terms[a] < m.terms[b];
    });
    TopicTerms t;
    t.topic = static_cast<std::size_t>(j);
    for (std::size_t i = 0; i < top_n; ++i) {
      t.terms.emplace_back(m.terms[order[i]], m.w(static_cast<Eigen::Index>(order[i]), j));
    }
    r.topics.push_back(std::move(t));
  }
  return r;
}

std::vector<TopicSeries> topic_timeseries(const TopicModel& model, std::size_t window) {
  const std::size_t n = model.dates.size();
  if (window == 0 || window > n) {
    throw ValueError("topic_timeseries: window " + std::to_string(window) + " must lie in [1, " + std::to_string(n) +
                     "]");
  }
  const TopicModel m = normalize_topics(model);
  const std::size_t left = (window - 1) / 2, right = window / 2;
  std::vector<TopicSeries> out;
  for (Eigen::Index j = 0; j < m.h.cols(); ++j) {
    TopicSeries s;
    s.topic = static_cast<std::size_t>(j);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = i >= left ? i - left : 0, hi = std::min(n - 1, i + right);
      double sum = 0.0;
      for (std::size_t t = lo; t <= hi; ++t) sum += m.h(static_cast<Eigen::Index>(t), j);
      s.points.emplace_back(m.dates[i], sum / static_cast<double>(hi - lo + 1));
    }
    out.push_back(std::move(s));
  }
  return out;
}

nlohmann::json to_json(const TopicReport& report, const TopicModel& model) {
  nlohmann::json topics = nlohmann::json::array();
  for (const auto& t : report.topics) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& [term, w] : t.terms) terms.push_back({{"term", term}, {"weight", w}});
    topics.push_back({{"topic", t.topic}, {"terms", terms}});
  }
  return {{"k", model.options.k},
          {"alpha", model.options.alpha},
          {"seed", model.options.seed},
          {"iterations", model.objective.size() - 1},
          {"converged", model.converged},
          {"objective", model.objective.back()},
          {"n_terms", model.terms.size()},
          {"n_dates", model.dates.size()},
          {"topics", topics},
          {"warnings", report.warnings}};
}

void write_timeseries_csv(const std::vector<TopicSeries>& series, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& s : series) {
    char name[32];
    std::snprintf(name, sizeof name, "topic_%02zu.csv", s.topic);
    std::ofstream out(dir / name);
    if (!out) throw Error("cannot write " + (dir / name).string());
    out << "date,value\n";
    for (const auto& [d, v] : s.points) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.10g", v);
      out << d << ',' << buf << '\n';
    }
  }
}

}  // namespace hmt
