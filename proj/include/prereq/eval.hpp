#pragma once

// Held-out link metrics (accuracy, macro-F1, AUC, MAP), report
// aggregation, and the recovered concept-graph analysis.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "prereq/corpus.hpp"
#include "prereq/error.hpp"
#include "prereq/io.hpp"

namespace prereq {

struct ScoredPairs {
  std::vector<ConceptPair> pairs;
  std::vector<double> scores;
  std::vector<int> labels;

  std::size_t size() const noexcept { return scores.size(); }

  void validate() const {
    if (scores.size() != labels.size() || (!pairs.empty() && pairs.size() != scores.size()))
      throw ValidationError("scored pairs: length mismatch");
    for (double s : scores)
      if (!std::isfinite(s)) throw ValidationError("scored pairs: non-finite score");
    for (int l : labels)
      if (l != 0 && l != 1) throw ValidationError("scored pairs: labels must be 0 or 1");
  }
};

namespace detail {

inline void require_nonempty(const ScoredPairs& sp, const char* metric) {
  sp.validate();
  if (sp.size() == 0) throw ValidationError(std::string(metric) + ": empty input");
}

inline void require_both_classes(const ScoredPairs& sp, const char* metric) {
  require_nonempty(sp, metric);
  const auto pos = std::count(sp.labels.begin(), sp.labels.end(), 1);
  if (pos == 0 || pos == static_cast<long>(sp.size()))
    throw ValidationError(std::string(metric) + ": needs at least one positive and one negative");
}

inline void check_threshold(double t) {
  if (!(t > 0.0 && t < 1.0)) throw ValidationError("threshold must lie in (0,1)");
}

}  // namespace detail

/// Scores at or above the threshold are predicted positive.
inline int predict(double score, double threshold) { return score >= threshold ? 1 : 0; }

inline double accuracy(const ScoredPairs& sp, double threshold = 0.5) {
  detail::require_nonempty(sp, "accuracy");
  detail::check_threshold(threshold);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < sp.size(); ++i) hit += predict(sp.scores[i], threshold) == sp.labels[i];
  return static_cast<double>(hit) / static_cast<double>(sp.size());
}

/// Mean of the per-class F1 over {0, 1}; a class with no predicted and no
/// actual members scores 0.
inline double macro_f1(const ScoredPairs& sp, double threshold = 0.5) {
  detail::require_nonempty(sp, "macro_f1");
  detail::check_threshold(threshold);
  double total = 0.0;
  for (int cls : {0, 1}) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < sp.size(); ++i) {
      const bool pred = predict(sp.scores[i], threshold) == cls;
      const bool actual = sp.labels[i] == cls;
      tp += pred && actual;
      fp += pred && !actual;
      fn += !pred && actual;
    }
    const auto denom = 2 * tp + fp + fn;
    total += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  return total / 2.0;
}

/// Mann-Whitney AUC: P(score(pos) > score(neg)) with ties counting 1/2.
inline double auc(const ScoredPairs& sp) {
  detail::require_both_classes(sp, "auc");
  std::vector<std::size_t> order(sp.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return sp.scores[a] < sp.scores[b]; });
  // Average ranks over tie groups.
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && sp.scores[order[j]] == sp.scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (sp.labels[order[k]] == 1) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    i = j;
  }
  const double n_neg = static_cast<double>(sp.size() - n_pos);
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg);
}

/// AP for one class: rank all pairs by descending class score (1 - score
/// for class 0; ties keep input order) and average precision at each hit.
inline double average_precision(const ScoredPairs& sp, int cls) {
  std::vector<std::size_t> order(sp.size());
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](std::size_t i) { return cls == 1 ? sp.scores[i] : 1.0 - sp.scores[i]; };
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return key(a) > key(b); });
  double sum_prec = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r)
    if (sp.labels[order[r]] == cls) {
      ++hits;
      sum_prec += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  return hits == 0 ? 0.0 : sum_prec / static_cast<double>(hits);
}

/// Macro MAP: mean of the AP of the positive and the negative class.
inline double map(const ScoredPairs& sp) {
  detail::require_both_classes(sp, "map");
  return (average_precision(sp, 1) + average_precision(sp, 0)) / 2.0;
}

/// Secondary: mean over target concepts of the AP of their true
/// prerequisites among that concept's scored pairs.
inline double per_query_map(const ScoredPairs& sp) {
  detail::require_nonempty(sp, "per_query_map");
  if (sp.pairs.size() != sp.size()) throw ValidationError("per_query_map: pairs required");
  std::map<int, ScoredPairs> by_target;
  for (std::size_t i = 0; i < sp.size(); ++i) {
    auto& q = by_target[sp.pairs[i].second];
    q.scores.push_back(sp.scores[i]);
    q.labels.push_back(sp.labels[i]);
  }
  double total = 0.0;
  std::size_t queries = 0;
  for (const auto& [target, q] : by_target) {
    if (std::count(q.labels.begin(), q.labels.end(), 1) == 0) continue;
    total += average_precision(q, 1);
    ++queries;
  }
  if (queries == 0) throw ValidationError("per_query_map: no query has a positive");
  return total / static_cast<double>(queries);
}

struct MetricSet {
  double accuracy = 0;
  double f1 = 0;
  double map = 0;
  double auc = 0;
};

inline constexpr std::array<const char*, 4> kMetricNames{"acc", "f1", "map", "auc"};

inline double metric_value(const MetricSet& m, std::size_t k) {
  switch (k) {
    case 0: return m.accuracy;
    case 1: return m.f1;
    case 2: return m.map;
    default: return m.auc;
  }
}

inline MetricSet evaluate(const ScoredPairs& sp, double threshold = 0.5) {
  return {accuracy(sp, threshold), macro_f1(sp, threshold), map(sp), auc(sp)};
}

struct EvalReport {
  std::vector<std::pair<std::uint64_t, MetricSet>> per_seed;
  MetricSet mean;
};

inline EvalReport make_report(std::vector<std::pair<std::uint64_t, MetricSet>> per_seed) {
  if (per_seed.empty()) throw ValidationError("report: no seeds");
  EvalReport r;
  r.per_seed = std::move(per_seed);
  const double n = static_cast<double>(r.per_seed.size());
  for (const auto& [seed, m] : r.per_seed) {
    r.mean.accuracy += m.accuracy;
    r.mean.f1 += m.f1;
    r.mean.map += m.map;
    r.mean.auc += m.auc;
  }
  r.mean.accuracy /= n;
  r.mean.f1 /= n;
  r.mean.map /= n;
  r.mean.auc /= n;
  return r;
}

/// "metric<TAB>seed<TAB>value" rows, then "metric<TAB>mean<TAB>value".
inline std::string serialize_report(const EvalReport& r) {
  std::string out;
  for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
    for (const auto& [seed, m] : r.per_seed)
      out += std::string(kMetricNames[k]) + "\t" + std::to_string(seed) + "\t" + io::format_double(metric_value(m, k)) + "\n";
    out += std::string(kMetricNames[k]) + "\tmean\t" + io::format_double(metric_value(r.mean, k)) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scored pair file: "src<TAB>dst<TAB>label<TAB>score"

inline std::string serialize_scored_pairs(const ScoredPairs& sp) {
  std::string out;
  for (std::size_t i = 0; i < sp.size(); ++i)
    out += std::to_string(sp.pairs[i].first) + "\t" + std::to_string(sp.pairs[i].second) + "\t" +
           std::to_string(sp.labels[i]) + "\t" + io::format_double(sp.scores[i]) + "\n";
  return out;
}

inline ScoredPairs parse_scored_pairs(const std::string& text, const std::string& source) {
  ScoredPairs sp;
  const auto lines = io::split(text, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = io::trim(lines[i]);
    if (line.empty()) continue;
    const auto f = io::split(line, '\t');
    long long s = 0, d = 0, l = 0;
    double v = 0;
    if (f.size() != 4 || !io::parse_long(f[0], s) || !io::parse_long(f[1], d) || !io::parse_long(f[2], l) ||
        !io::parse_double(f[3], v))
      throw ParseError(source, i + 1, "expected 'src<TAB>dst<TAB>label<TAB>score'");
    sp.pairs.emplace_back(static_cast<int>(s), static_cast<int>(d));
    sp.labels.push_back(static_cast<int>(l));
    sp.scores.push_back(v);
  }
  sp.validate();
  return sp;
}

// ---------------------------------------------------------------------------
// Concept-graph analysis

/// Average over concept nodes of the number of distinct neighbours,
/// counting in- and out-edges and collapsing reciprocal pairs.
inline double average_degree(const std::vector<ConceptPair>& edges, int num_concepts) {
  if (num_concepts <= 0) throw ValidationError("average_degree: no concepts");
  std::set<ConceptPair> undirected;
  for (auto [p, q] : edges)
    if (p != q) undirected.insert({std::min(p, q), std::max(p, q)});
  return 2.0 * static_cast<double>(undirected.size()) / static_cast<double>(num_concepts);
}

struct ConceptGraphAnalysis {
  double average_degree = 0;
  std::vector<ConceptPair> predicted;  // (prerequisite, concept)
  /// Per concept: predicted prerequisites with scores, highest first.
  std::vector<std::vector<std::pair<int, double>>> prerequisites;
};

/// Thresholds every ordered concept pair of a dense score matrix
/// (scores(p, q) = P(p is a prerequisite of q)).
inline ConceptGraphAnalysis analyze_scores(const Matrix& scores, double threshold) {
  const auto c = static_cast<int>(scores.rows());
  if (scores.cols() != c) throw DimensionError("analyze_scores: score matrix must be square");
  ConceptGraphAnalysis a;
  a.prerequisites.resize(static_cast<std::size_t>(c));
  for (int q = 0; q < c; ++q) {
    auto& list = a.prerequisites[static_cast<std::size_t>(q)];
    for (int p = 0; p < c; ++p) {
      if (p == q) continue;
      const double s = scores(p, q);
      if (s >= threshold) {
        list.emplace_back(p, s);
        a.predicted.emplace_back(p, q);
      }
    }
    std::stable_sort(list.begin(), list.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
  }
  a.average_degree = average_degree(a.predicted, c);
  return a;
}

/// "concept<TAB>prereq1,prereq2,..." lines, preceded by the average degree
/// (and the gold average degree when known) as '#' lines.
inline std::string serialize_analysis(const ConceptGraphAnalysis& a, const ConceptList& concepts,
                                      std::optional<double> gold_average_degree = std::nullopt) {
  std::string out = "#average_degree\t" + io::format_double(a.average_degree) + "\n";
  if (gold_average_degree) out += "#gold_average_degree\t" + io::format_double(*gold_average_degree) + "\n";
  for (int q = 0; q < concepts.size(); ++q) {
    out += concepts.name(q) + "\t";
    const auto& list = a.prerequisites[static_cast<std::size_t>(q)];
    for (std::size_t k = 0; k < list.size(); ++k) {
      if (k) out += ',';
      out += concepts.name(list[k].first);
    }
    out += "\n";
  }
  return out;
}

}  // namespace prereq
