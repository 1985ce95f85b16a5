// SPDX-License-Identifier: Apache-2.0
//
// Term-date matrices and L1-regularized NMF,
//   min_{W,H >= 0} ||V - W H^T||_F^2 + alpha (sum W + sum H),
// with topic term reports and smoothed topic-over-time series.
#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace hmt {

/// Text -> terms. Morphological analyzers plug in here.
class TermTokenizer {
 public:
  virtual ~TermTokenizer() = default;
  virtual std::vector<std::string> terms(std::string_view text) const = 0;
};

/// Whitespace split, surrounding ASCII punctuation stripped, stopwords dropped.
class WhitespaceTermTokenizer : public TermTokenizer {
 public:
  WhitespaceTermTokenizer();  // default stopword list
  explicit WhitespaceTermTokenizer(std::unordered_set<std::string> stopwords);
  static std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path);

  std::vector<std::string> terms(std::string_view text) const override;

 private:
  std::unordered_set<std::string> stopwords_;
};

/// One term per character, whitespace and ASCII punctuation skipped. Suits
/// Hanja text, which has no word boundaries.
class CharacterTermTokenizer : public TermTokenizer {
 public:
  CharacterTermTokenizer() = default;
  explicit CharacterTermTokenizer(std::unordered_set<std::string> stopwords);

  std::vector<std::string> terms(std::string_view text) const override;

 private:
  std::unordered_set<std::string> stopwords_;
};

struct DatedDocument {
  std::string text;
  std::optional<std::string> date;  // YYYY, YYYY-MM or YYYY-MM-DD
};

enum class DateGranularity { kDay, kMonth, kYear };
enum class TermWeighting { kRaw, kTfIdf };

DateGranularity date_granularity_from_name(const std::string& name);
TermWeighting term_weighting_from_name(const std::string& name);

struct TermDateOptions {
  DateGranularity granularity = DateGranularity::kMonth;
  TermWeighting weighting = TermWeighting::kRaw;
  /// Terms with fewer total occurrences are dropped.
  std::size_t min_frequency = 1;
};

struct TermDateMatrix {
  Eigen::MatrixXd values;            // [terms, dates]
  std::vector<std::string> terms;
  std::vector<std::string> dates;    // chronological
};

/// Date key of a document at the given granularity. Throws FormatError for
/// a malformed date or one coarser than the granularity needs.
std::string date_key(std::string_view date, DateGranularity granularity);

TermDateMatrix build_term_date_matrix(const std::vector<DatedDocument>& docs, const TermTokenizer& tokenizer,
                                      const TermDateOptions& options = {});

struct NmfOptions {
  std::size_t k = 20;
  double alpha = 0.1;
  std::size_t max_iter = 500;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

inline constexpr double kNmfFloor = 1e-10;

struct TopicModel {
  Eigen::MatrixXd w;  // [terms, K]
  Eigen::MatrixXd h;  // [dates, K]
  std::vector<std::string> terms, dates;
  NmfOptions options;
  std::vector<double> objective;  // after initialization, then per iteration
  bool converged = false;
};

double nmf_objective(const Eigen::MatrixXd& v, const Eigen::MatrixXd& w, const Eigen::MatrixXd& h, double alpha);

/// Multiplicative updates with the L1 term subtracted in the numerators
/// (alpha / 2 after dividing the gradient by 2) and entries floored at
/// kNmfFloor. Stops when the relative objective change drops below tol.
TopicModel nmf_fit(const TermDateMatrix& v, const NmfOptions& options);

/// Columns of W scaled to unit L1 with the scale moved into H; W H^T is
/// unchanged.
TopicModel normalize_topics(const TopicModel& model);

struct TopicTerms {
  std::size_t topic = 0;
  std::vector<std::pair<std::string, double>> terms;  // weight descending
};

struct TopicReport {
  std::vector<TopicTerms> topics;
  std::vector<std::string> warnings;
};

/// Top terms per topic by normalized W weight (ties by term text).
TopicReport topic_report(const TopicModel& model, std::size_t top_n);

struct TopicSeries {
  std::size_t topic = 0;
  std::vector<std::pair<std::string, double>> points;  // (date, value)
};

/// Centered moving average of each normalized H column; near the ends the
/// average runs over the dates available.
std::vector<TopicSeries> topic_timeseries(const TopicModel& model, std::size_t window);

nlohmann::json to_json(const TopicReport& report, const TopicModel& model);
/// dir/topic_XX.csv with a `date,value` header.
void write_timeseries_csv(const std::vector<TopicSeries>& series, const std::filesystem::path& dir);

}  // namespace hmt
