// Copyright 2026 The exbias Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Classification and ranking metrics, category entropy of top-k hits, and a
// rank-correlation trend test.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "exbias/common.hpp"
#include "exbias/graph.hpp"
#include "exbias/models.hpp"

namespace exbias {

namespace detail {

/// 1-based average ranks (ties share the mean of their positions).
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&x](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace detail

// --- Classification ------------------------------------------------------

struct ClassificationMetrics {
  // Undefined values (no predicted positives, no positives, one class only)
  // are empty and explained in `diagnostics`.
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> auc;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
  std::vector<std::string> diagnostics;
};

/// Area under the ROC curve from the Mann-Whitney statistic; tied scores
/// count one half.
inline std::optional<double> auc_score(std::span<const std::uint8_t> labels,
                                       std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    throw DataError("auc: labels and scores differ in length");
  }
  const auto ranks = detail::average_ranks(scores);
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k]) {
      rank_sum += ranks[k];
      ++pos;
    }
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

inline ClassificationMetrics classification_metrics(
    std::span<const std::uint8_t> labels, std::span<const double> scores,
    double threshold = 0.5) {
  if (labels.size() != scores.size()) {
    throw DataError("classification_metrics: length mismatch");
  }
  ClassificationMetrics m;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] > 1) throw DataError("labels must be binary");
    if (!(scores[k] >= 0.0 && scores[k] <= 1.0)) {
      throw DataError("scores must lie in [0, 1]");
    }
    const bool pred = scores[k] >= threshold;
    if (labels[k]) {
      ++m.n_positive;
      pred ? ++tp : ++fn;
    } else {
      ++m.n_negative;
      if (pred) ++fp;
    }
  }
  if (tp + fp > 0) {
    m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  } else {
    m.diagnostics.push_back("precision undefined: no predicted positives");
  }
  if (m.n_positive > 0) {
    m.recall = static_cast<double>(tp) / static_cast<double>(m.n_positive);
  } else {
    m.diagnostics.push_back("recall undefined: no positive labels");
  }
  if (m.precision && m.recall) {
    const double s = *m.precision + *m.recall;
    m.f1 = s > 0.0 ? 2.0 * *m.precision * *m.recall / s : 0.0;
  }
  m.auc = auc_score(labels, scores);
  if (!m.auc) m.diagnostics.push_back("auc undefined: single class");
  return m;
}

// --- Ranking -------------------------------------------------------------

/// Candidate ids ordered by descending score; ties broken by ascending id.
inline std::vector<std::uint32_t> rank_candidates(
    std::span<const std::uint32_t> ids, std::span<const double> scores) {
  if (ids.size() != scores.size()) {
    throw DataError("rank_candidates: length mismatch");
  }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  std::vector<std::uint32_t> out;
  out.reserve(ids.size());
  for (std::size_t k : order) out.push_back(ids[k]);
  return out;
}

/// One source node: its ranked candidates and the set of true targets.
struct SourceRanking {
  std::uint32_t source = 0;
  std::vector<std::uint32_t> ranked;
  std::vector<std::uint32_t> positives;  // any order
};

struct RankingMetrics {
  std::optional<double> map;
  std::optional<double> recall_at_k;
  std::optional<double> mean_rank;
  std::size_t k = 100;
  std::size_t n_sources = 0;
  std::size_t n_evaluated = 0;  // sources with at least one positive
};

/// Average precision of a ranked list against a positive set. Positives
/// that are not among the candidates count as misses.
inline double average_precision(std::span<const std::uint32_t> ranked,
                                 std::span<const std::uint32_t> positives) {
  if (positives.empty()) return 0.0;
  std::vector<std::uint32_t> pos(positives.begin(), positives.end());
  std::sort(pos.begin(), pos.end());
  double acc = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    if (std::binary_search(pos.begin(), pos.end(), ranked[r])) {
      ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return acc / static_cast<double>(pos.size());
}

inline RankingMetrics ranking_metrics(std::span<const SourceRanking> sources,
                                      std::size_t k = 100) {
  if (k == 0) throw ConfigError("k: must be >= 1");
  RankingMetrics m;
  m.k = k;
  m.n_sources = sources.size();
  CompensatedSum ap_sum;
  CompensatedSum recall_sum;
  CompensatedSum rank_sum;
  for (const SourceRanking& s : sources) {
    if (s.ranked.empty()) {
      throw DataError("source " + std::to_string(s.source) +
                      " has no candidates");
    }
    if (s.positives.empty()) continue;
    ++m.n_evaluated;
    ap_sum.add(average_precision(s.ranked, s.positives));
    std::vector<std::uint32_t> pos(s.positives.begin(), s.positives.end());
    std::sort(pos.begin(), pos.end());
    std::size_t hits_at_k = 0;
    CompensatedSum ranks;
    std::size_t found = 0;
    for (std::size_t r = 0; r < s.ranked.size(); ++r) {
      if (std::binary_search(pos.begin(), pos.end(), s.ranked[r])) {
        if (r < k) ++hits_at_k;
        ranks.add(static_cast<double>(r + 1));
        ++found;
      }
    }
    recall_sum.add(static_cast<double>(hits_at_k) /
                   static_cast<double>(pos.size()));
    // Positives missing from the candidate list rank after every candidate.
    for (std::size_t miss = found; miss < pos.size(); ++miss) {
      ranks.add(static_cast<double>(s.ranked.size() + 1));
    }
    rank_sum.add(ranks.value() / static_cast<double>(pos.size()));
  }
  if (m.n_evaluated > 0) {
    const double e = static_cast<double>(m.n_evaluated);
    m.map = ap_sum.value() / e;
    m.recall_at_k = recall_sum.value() / e;
    m.mean_rank = rank_sum.value() / e;
  }
  return m;
}

// --- Entropy -------------------------------------------------------------

/// Shannon entropy (natural log) of the empirical distribution of labels.
inline double category_entropy(std::span<const std::uint32_t> categories) {
  if (categories.empty()) return 0.0;
  std::map<std::uint32_t, std::size_t> counts;
  for (auto c : categories) ++counts[c];
  const double total = static_cast<double>(categories.size());
  double h = 0.0;
  for (const auto& [cat, cnt] : counts) {
    const double p = static_cast<double>(cnt) / total;
    h -= p * std::log(p);
  }
  return h;
}

/// Mean over sources of the category entropy of the true positives that
/// appear in each source's top-k. Sources with no such hits contribute 0.
inline double entropy_at_k(std::span<const SourceRanking> sources,
                           std::span<const std::uint32_t> node_categories,
                           std::size_t k = 100) {
  if (k == 0) throw ConfigError("k: must be >= 1");
  if (sources.empty()) return 0.0;
  CompensatedSum acc;
  for (const SourceRanking& s : sources) {
    std::vector<std::uint32_t> pos(s.positives.begin(), s.positives.end());
    std::sort(pos.begin(), pos.end());
    std::vector<std::uint32_t> cats;
    const std::size_t top = std::min(k, s.ranked.size());
    for (std::size_t r = 0; r < top; ++r) {
      if (std::binary_search(pos.begin(), pos.end(), s.ranked[r])) {
        const auto id = s.ranked[r];
        if (id >= node_categories.size()) {
          throw DataError("entropy_at_k: unknown node " + std::to_string(id));
        }
        cats.push_back(node_categories[id]);
      }
    }
    acc.add(category_entropy(cats));
  }
  return acc.value() / static_cast<double>(sources.size());
}

// --- Trend test ----------------------------------------------------------

struct TrendTest {
  double rho = 0.0;
  double p_value = 1.0;  // two-sided
  std::size_t n = 0;
};

inline double spearman_rho(std::span<const double> x,
                           std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw DataError("spearman: need two equal-length series of length >= 2");
  }
  const auto rx = detail::average_ranks(x);
  const auto ry = detail::average_ranks(y);
  const double mx = mean_of(rx);
  const double my = mean_of(ry);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t k = 0; k < rx.size(); ++k) {
    sxy += (rx[k] - mx) * (ry[k] - my);
    sxx += (rx[k] - mx) * (rx[k] - mx);
    syy += (ry[k] - my) * (ry[k] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// Spearman correlation of a series against its index, with the usual
/// t approximation (n - 2 degrees of freedom) for the p-value.
inline TrendTest spearman_trend(std::span<const double> series) {
  TrendTest t;
  t.n = series.size();
  if (t.n < 3) throw DataError("spearman_trend: need at least 3 points");
  std::vector<double> index(t.n);
  std::iota(index.begin(), index.end(), 0.0);
  t.rho = spearman_rho(index, series);
  const double df = static_cast<double>(t.n - 2);
  if (std::abs(t.rho) >= 1.0) {
    t.p_value = 0.0;
    return t;
  }
  const double stat = t.rho * std::sqrt(df / (1.0 - t.rho * t.rho));
  boost::math::students_t dist(df);
  t.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(stat)));
  return t;
}

// --- Model evaluation ----------------------------------------------------

struct MetricReport {
  ClassificationMetrics classification;
  RankingMetrics ranking;
  double entropy_at_k = 0.0;
  std::string target = "observed";  // or "true"

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"precision", detail::optional_json(classification.precision)},
        {"recall", detail::optional_json(classification.recall)},
        {"f1", detail::optional_json(classification.f1)},
        {"auc", detail::optional_json(classification.auc)},
        {"map", detail::optional_json(ranking.map)},
        {"recall_at_k", detail::optional_json(ranking.recall_at_k)},
        {"mean_rank", detail::optional_json(ranking.mean_rank)},
        {"entropy_at_k", entropy_at_k},
        {"k", ranking.k},
        {"target", target},
        {"n_sources", ranking.n_sources},
        {"n_evaluated", ranking.n_evaluated},
        {"diagnostics", classification.diagnostics}};
  }

  static std::string csv_header() {
    return "target,k,precision,recall,f1,auc,map,recall_at_k,mean_rank,"
           "entropy_at_k";
  }

  std::string to_csv_row() const {
    std::ostringstream os;
    os.precision(17);
    auto opt = [&os](const std::optional<double>& v) {
      os << ',';
      if (v) os << *v;
    };
    os << target << ',' << ranking.k;
    opt(classification.precision);
    opt(classification.recall);
    opt(classification.f1);
    opt(classification.auc);
    opt(ranking.map);
    opt(ranking.recall_at_k);
    opt(ranking.mean_rank);
    os << ',' << entropy_at_k;
    return os.str();
  }
};

struct EvalOptions {
  std::size_t k = 100;
  double threshold = 0.5;
  /// Drop candidates already linked in `known` (e.g. training edges).
  bool exclude_known = false;
};

/// Scores every (source, j != source) pair with the link model and compares
/// against the edges of `target`. Features come from `target`'s nodes.
inline MetricReport evaluate_model(const LinkModel& model, const Graph& target,
                                   std::span<const std::uint32_t> sources,
                                   const EvalOptions& opts = {},
                                   const Graph* known = nullptr,
                                   std::string target_name = "observed") {
  const std::uint32_t n = static_cast<std::uint32_t>(target.num_nodes());
  std::vector<std::uint8_t> labels;
  std::vector<double> scores;
  std::vector<SourceRanking> rankings;
  rankings.reserve(sources.size());
  for (std::uint32_t i : sources) {
    if (i >= n) throw DataError("evaluate: unknown source " + std::to_string(i));
    std::vector<std::uint32_t> ids;
    std::vector<double> cand_scores;
    SourceRanking sr;
    sr.source = i;
    for (std::uint32_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double s =
          predict_link_prob(model, target.features(i), target.features(j));
      const bool linked = target.has_edge(i, j);
      labels.push_back(linked ? 1 : 0);
      scores.push_back(s);
      if (opts.exclude_known && known && known->has_edge(i, j)) continue;
      ids.push_back(j);
      cand_scores.push_back(s);
      if (linked) sr.positives.push_back(j);
    }
    if (ids.empty()) {
      throw DataError("source " + std::to_string(i) + " has no candidates");
    }
    sr.ranked = rank_candidates(ids, cand_scores);
    rankings.push_back(std::move(sr));
  }
  MetricReport r;
  r.target = std::move(target_name);
  r.classification = classification_metrics(labels, scores, opts.threshold);
  r.ranking = ranking_metrics(rankings, opts.k);
  std::vector<std::uint32_t> cats(n);
  for (std::uint32_t i = 0; i < n; ++i) cats[i] = target.category(i);
  r.entropy_at_k = entropy_at_k(rankings, cats, opts.k);
  return r;
}

}  // namespace exbias
