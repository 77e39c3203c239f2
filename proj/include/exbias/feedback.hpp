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

// Feedback-loop simulation. A focal node receives n recommendations split
// across C categories by the simplex kappa; links form with probability
// q_v = pi_v y_v; the recommender re-estimates its category preferences from
// the realised links and the loop repeats.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "exbias/common.hpp"
#include "exbias/graph.hpp"
#include "exbias/models.hpp"
#include "exbias/synthesis.hpp"
#include "exbias/training.hpp"

namespace exbias {

/// Raised when a step cannot continue (every category estimate is zero).
class DegenerateStep : public NumericError {
 public:
  using NumericError::NumericError;
};

enum class FeedbackMode { kNaive, kCorrected };

inline std::string_view to_string(FeedbackMode m) {
  return m == FeedbackMode::kNaive ? "naive" : "corrected";
}

inline FeedbackMode parse_feedback_mode(std::string_view s) {
  if (s == "naive") return FeedbackMode::kNaive;
  if (s == "corrected") return FeedbackMode::kCorrected;
  throw ConfigError("mode: expected naive or corrected, got '" +
                    std::string(s) + "'");
}

struct FeedbackConfig {
  std::uint64_t n = 1000;       // recommendations per step
  std::vector<double> q;        // q_v = pi_v y_v, one per category
  std::vector<double> y;        // needed by the corrected mode
  std::size_t steps = 10;
  FeedbackMode mode = FeedbackMode::kNaive;
  std::uint64_t seed = 0;
  /// Mixes the estimate with the uniform distribution at this rate.
  double exploration = 0.0;
  /// Starting simplex; uniform when empty.
  std::vector<double> initial_kappa;

  std::size_t num_categories() const { return q.size(); }

  void validate() const {
    if (q.empty()) throw ConfigError("q: need at least one category");
    if (n == 0) throw ConfigError("n: must be >= 1");
    for (double v : q) {
      if (!(v > 0.0 && v < 1.0)) throw ConfigError("q: entries must lie in (0, 1)");
    }
    if (mode == FeedbackMode::kCorrected) {
      if (y.size() != q.size()) {
        throw ConfigError("y: corrected mode needs one y per category");
      }
      for (std::size_t v = 0; v < q.size(); ++v) {
        if (!(y[v] >= q[v] && y[v] <= 1.0)) {
          throw ConfigError("y: need q_v <= y_v <= 1 so that pi_v = q_v / y_v");
        }
      }
    }
    if (!(exploration >= 0.0 && exploration <= 1.0)) {
      throw ConfigError("exploration: must lie in [0, 1]");
    }
    if (!initial_kappa.empty()) {
      if (initial_kappa.size() != q.size()) {
        throw ConfigError("initial_kappa: length must equal the number of categories");
      }
      double s = 0.0;
      for (double k : initial_kappa) {
        if (!(k >= 0.0)) throw ConfigError("initial_kappa: entries must be >= 0");
        s += k;
      }
      if (std::abs(s - 1.0) > 1e-9) throw ConfigError("initial_kappa: must sum to 1");
    }
  }

  /// Exposure pi_v = q_v / y_v (corrected mode only).
  double propensity(std::size_t v) const { return q[v] / y[v]; }

  nlohmann::json to_json() const {
    return nlohmann::json{{"n", n},
                          {"q", q},
                          {"y", y},
                          {"steps", steps},
                          {"mode", std::string(to_string(mode))},
                          {"seed", seed},
                          {"exploration", exploration},
                          {"initial_kappa", initial_kappa}};
  }

  static FeedbackConfig from_json(const nlohmann::json& j) {
    FeedbackConfig c;
    auto field = [&j](const char* name, auto& dst) {
      if (!j.contains(name)) return;
      try {
        j.at(name).get_to(dst);
      } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string(name) + ": wrong type");
      }
    };
    field("n", c.n);
    field("q", c.q);
    field("y", c.y);
    field("steps", c.steps);
    field("seed", c.seed);
    field("exploration", c.exploration);
    field("initial_kappa", c.initial_kappa);
    if (j.contains("mode")) {
      std::string m;
      field("mode", m);
      c.mode = parse_feedback_mode(m);
    }
    c.validate();
    return c;
  }
};

struct SimplexState {
  std::vector<double> kappa;
  std::size_t t = 0;

  /// kappa_v / (kappa_v + kappa_w); nullopt when both are zero.
  std::optional<double> pairwise(std::size_t v, std::size_t w) const {
    const double s = kappa.at(v) + kappa.at(w);
    if (s <= 0.0) return std::nullopt;
    return kappa[v] / s;
  }
};

inline void check_simplex(const SimplexState& s) {
  double total = 0.0;
  for (double k : s.kappa) {
    if (!(k >= 0.0 && k <= 1.0)) throw DataError("kappa entry outside [0, 1]");
    total += k;
  }
  if (std::abs(total - 1.0) > 1e-12) throw DataError("kappa does not sum to 1");
}

/// Integer allocation of n by largest remainder: floor(n kappa_v) plus one
/// for the largest fractional parts (ties to the lower index).
inline std::vector<std::uint64_t> allocate_counts(std::span<const double> kappa,
                                                  std::uint64_t n) {
  std::vector<std::uint64_t> out(kappa.size());
  std::vector<double> rem(kappa.size());
  std::uint64_t assigned = 0;
  for (std::size_t v = 0; v < kappa.size(); ++v) {
    const double exact = static_cast<double>(n) * kappa[v];
    out[v] = static_cast<std::uint64_t>(std::floor(exact));
    rem[v] = exact - static_cast<double>(out[v]);
    assigned += out[v];
  }
  std::vector<std::size_t> order(kappa.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&rem](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n && k < order.size(); ++k) {
    if (kappa[order[k]] > 0.0) {
      ++out[order[k]];
      ++assigned;
    }
  }
  return out;
}

/// Multinomial(n, p) through conditional binomials.
inline std::vector<std::uint64_t> sample_multinomial(std::uint64_t n,
                                                     std::span<const double> p,
                                                     Rng& rng) {
  std::vector<std::uint64_t> out(p.size(), 0);
  std::uint64_t left = n;
  double mass_left = 1.0;
  for (std::size_t v = 0; v < p.size() && left > 0; ++v) {
    if (v + 1 == p.size()) {
      out[v] = left;
      break;
    }
    const double frac =
        mass_left > 0.0 ? std::clamp(p[v] / mass_left, 0.0, 1.0) : 0.0;
    std::binomial_distribution<std::uint64_t> bin(left, frac);
    out[v] = bin(rng);
    left -= out[v];
    mass_left -= p[v];
  }
  return out;
}

/// Category estimates formed from realised link counts.
struct StepEstimate {
  std::vector<double> q_hat;
  std::vector<double> e_hat;  // q_hat normalised (after exploration)
};

/// q_hat_v = n_v / n (naive) or n_v / (n pi_v) (corrected); e_hat = q_hat /
/// sum(q_hat), mixed with uniform at the exploration rate.
inline StepEstimate estimate_from_counts(std::span<const std::uint64_t> counts,
                                         const FeedbackConfig& cfg) {
  StepEstimate e;
  const std::size_t c = counts.size();
  e.q_hat.resize(c);
  double total = 0.0;
  for (std::size_t v = 0; v < c; ++v) {
    double qh = static_cast<double>(counts[v]) / static_cast<double>(cfg.n);
    if (cfg.mode == FeedbackMode::kCorrected) qh /= cfg.propensity(v);
    e.q_hat[v] = qh;
    total += qh;
  }
  if (!(total > 0.0)) {
    throw DegenerateStep("degenerate feedback step: every category estimate is zero");
  }
  e.e_hat.resize(c);
  for (std::size_t v = 0; v < c; ++v) {
    e.e_hat[v] = (1.0 - cfg.exploration) * e.q_hat[v] / total +
                 cfg.exploration / static_cast<double>(c);
  }
  return e;
}

struct StepRecord {
  SimplexState next;
  std::vector<std::uint64_t> allocated;  // sums to n
  std::vector<std::uint64_t> counts;     // realised links per category
  StepEstimate estimate;
};

/// One step of the loop in either mode.
inline StepRecord feedback_step_detailed(const SimplexState& state,
                                         const FeedbackConfig& cfg, Rng& rng) {
  check_simplex(state);
  if (state.kappa.size() != cfg.num_categories()) {
    throw DataError("kappa length does not match the number of categories");
  }
  StepRecord r;
  r.allocated = allocate_counts(state.kappa, cfg.n);
  r.counts.resize(cfg.num_categories());
  for (std::size_t v = 0; v < r.counts.size(); ++v) {
    std::binomial_distribution<std::uint64_t> bin(r.allocated[v], cfg.q[v]);
    r.counts[v] = bin(rng);
  }
  r.estimate = estimate_from_counts(r.counts, cfg);
  const auto draws = sample_multinomial(cfg.n, r.estimate.e_hat, rng);
  r.next.t = state.t + 1;
  r.next.kappa.resize(draws.size());
  for (std::size_t v = 0; v < draws.size(); ++v) {
    r.next.kappa[v] = static_cast<double>(draws[v]) / static_cast<double>(cfg.n);
  }
  return r;
}

inline SimplexState feedback_step(const SimplexState& state,
                                  const FeedbackConfig& cfg, Rng& rng) {
  FeedbackConfig naive = cfg;
  naive.mode = FeedbackMode::kNaive;
  return feedback_step_detailed(state, naive, rng).next;
}

inline SimplexState corrected_step(const SimplexState& state,
                                   const FeedbackConfig& cfg, Rng& rng) {
  if (cfg.mode != FeedbackMode::kCorrected) {
    throw ConfigError("mode: corrected_step needs the corrected mode");
  }
  return feedback_step_detailed(state, cfg, rng).next;
}

/// Limit of kappa_vw after t steps when q_v / q_w = c.
inline double asymptotic_kappa(double c, std::size_t t) {
  if (!(c > 0.0)) throw ConfigError("c: must be > 0");
  return 1.0 - 1.0 / (1.0 + std::pow(c, static_cast<double>(t)));
}

struct Trajectory {
  std::vector<SimplexState> states;             // t = 0..T
  std::vector<std::vector<std::uint64_t>> allocated;  // t = 0..T-1
  std::vector<std::vector<std::uint64_t>> counts;     // t = 0..T-1
  std::vector<std::vector<double>> q_hat;             // t = 0..T-1

  /// Rows `t,category,kappa,count,q_hat`. The final state has no step
  /// after it, so its count and q_hat fields are empty.
  void write_csv(std::ostream& out) const {
    out << "t,category,kappa,count,q_hat\n";
    char buf[64];
    for (std::size_t t = 0; t < states.size(); ++t) {
      for (std::size_t v = 0; v < states[t].kappa.size(); ++v) {
        std::snprintf(buf, sizeof(buf), "%.17g", states[t].kappa[v]);
        out << t << ',' << v << ',' << buf << ',';
        if (t < counts.size()) {
          std::snprintf(buf, sizeof(buf), "%.17g", q_hat[t][v]);
          out << counts[t][v] << ',' << buf;
        } else {
          out << ',';
        }
        out << '\n';
      }
    }
  }
};

inline Trajectory run_trajectory(const FeedbackConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t c = cfg.num_categories();
  SimplexState s;
  s.kappa = cfg.initial_kappa.empty()
                ? std::vector<double>(c, 1.0 / static_cast<double>(c))
                : cfg.initial_kappa;
  Trajectory tr;
  tr.states.push_back(s);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    StepRecord r = feedback_step_detailed(tr.states.back(), cfg, rng);
    tr.allocated.push_back(std::move(r.allocated));
    tr.counts.push_back(std::move(r.counts));
    tr.q_hat.push_back(std::move(r.estimate.q_hat));
    tr.states.push_back(std::move(r.next));
  }
  return tr;
}

/// Every pair with q_v > q_w moved toward v: kappa_vw strictly increased.
/// A pair whose fractions are both zero before or after counts as failure.
inline bool skew_event(const SimplexState& before, const SimplexState& after,
                       std::span<const double> q) {
  for (std::size_t v = 0; v < q.size(); ++v) {
    for (std::size_t w = 0; w < q.size(); ++w) {
      if (!(q[v] > q[w])) continue;
      const auto b = before.pairwise(v, w);
      const auto a = after.pairwise(v, w);
      if (!a || !b || !(*a > *b)) return false;
    }
  }
  return true;
}

// --- Full pipeline with a trained recommender ----------------------------

struct PipelineConfig {
  std::size_t rec_per_node = 20;
  std::size_t iterations = 10;
  std::uint64_t seed = 0;
  /// Maps node categories onto the groups used for the same-group
  /// statistic. Identity when empty.
  std::vector<std::uint32_t> category_map;
  /// Continue from the previous iteration's model instead of a fresh one.
  bool warm_start = false;

  void validate() const {
    if (rec_per_node == 0) throw ConfigError("rec_per_node: must be >= 1");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"rec_per_node", rec_per_node},
                          {"iterations", iterations},
                          {"seed", seed},
                          {"category_map", category_map},
                          {"warm_start", warm_start}};
  }

  static PipelineConfig from_json(const nlohmann::json& j) {
    PipelineConfig c;
    try {
      c.rec_per_node = j.value("rec_per_node", c.rec_per_node);
      c.iterations = j.value("iterations", c.iterations);
      c.seed = j.value("seed", c.seed);
      c.warm_start = j.value("warm_start", c.warm_start);
      if (j.contains("category_map")) {
        c.category_map = j.at("category_map").get<std::vector<std::uint32_t>>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("pipeline: ") + e.what());
    }
    c.validate();
    return c;
  }
};

struct PipelineReport {
  /// Same-group share of all recommendations, one entry per iteration
  /// (index 0 is the model trained on the initial observed graph).
  std::vector<double> same_fraction;
  /// Same share restricted to sources of each group, per iteration.
  std::vector<std::vector<double>> same_fraction_by_group;
  std::vector<std::size_t> links_formed;  // per iteration
  std::size_t num_groups = 0;

  void write_csv(std::ostream& out) const {
    out << "iteration,group,same_fraction,links_formed\n";
    char buf[64];
    for (std::size_t t = 0; t < same_fraction.size(); ++t) {
      std::snprintf(buf, sizeof(buf), "%.17g", same_fraction[t]);
      out << t << ",all," << buf << ',' << links_formed[t] << '\n';
      for (std::size_t g = 0; g < num_groups; ++g) {
        std::snprintf(buf, sizeof(buf), "%.17g", same_fraction_by_group[t][g]);
        out << t << ',' << g << ',' << buf << ',' << links_formed[t] << '\n';
      }
    }
  }
};

/// k distinct indices drawn with probability proportional to weights
/// (sequential sampling without replacement, via exponential keys).
inline std::vector<std::size_t> weighted_sample_without_replacement(
    std::span<const double> weights, std::size_t k, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::pair<double, std::size_t>> keys;
  keys.reserve(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double u = unif(rng);
    const double key = weights[i] > 0.0
                           ? std::log(std::max(u, 1e-300)) / weights[i]
                           : -std::numeric_limits<double>::infinity();
    keys.emplace_back(key, i);
  }
  k = std::min(k, keys.size());
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k),
                    keys.end(), [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(keys[i].second);
  return out;
}

/// Train on the observed graph, recommend rec_per_node targets per source
/// with probability proportional to the predicted link probability, let
/// links form with the true exposure and relevance, retrain on the links the
/// recommendations produced, and repeat.
inline PipelineReport feedback_with_trained_model(const GroundTruthWorld& world,
                                                  const Graph& observed,
                                                  const TrainConfig& train_cfg,
                                                  const PipelineConfig& cfg) {
  cfg.validate();
  const std::uint32_t n = static_cast<std::uint32_t>(world.skeleton.num_nodes());
  std::vector<std::uint32_t> group(n);
  std::size_t num_groups = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto c = world.skeleton.category(i);
    if (cfg.category_map.empty()) {
      group[i] = c;
    } else {
      if (c >= cfg.category_map.size()) {
        throw ConfigError("category_map: no entry for category " + std::to_string(c));
      }
      group[i] = cfg.category_map[c];
    }
    num_groups = std::max<std::size_t>(num_groups, group[i] + 1);
  }

  Rng rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  PipelineReport report;
  report.num_groups = num_groups;
  Graph current = observed;
  std::optional<Checkpoint> previous;
  for (std::size_t it = 0; it <= cfg.iterations; ++it) {
    TrainConfig tc = train_cfg;
    tc.seed = train_cfg.seed + cfg.seed * 7919 + it;
    const TrainReport model =
        train(current, tc, previous ? &*previous : nullptr);
    if (cfg.warm_start) previous = Checkpoint{model.link, model.propensity};

    std::size_t same = 0;
    std::size_t total = 0;
    std::vector<std::size_t> same_g(num_groups, 0);
    std::vector<std::size_t> total_g(num_groups, 0);
    std::vector<NodePair> formed;
    std::vector<double> weights(n - 1);
    for (std::uint32_t i = 0; i < n; ++i) {
      for (std::uint32_t j = 0, k = 0; j < n; ++j) {
        if (j == i) continue;
        weights[k++] = predict_link_prob(model.link, world.skeleton.features(i),
                                         world.skeleton.features(j));
      }
      for (std::size_t idx :
           weighted_sample_without_replacement(weights, cfg.rec_per_node, rng)) {
        const std::uint32_t j = static_cast<std::uint32_t>(idx >= i ? idx + 1 : idx);
        const bool same_group = group[i] == group[j];
        same += same_group;
        ++total;
        same_g[group[i]] += same_group;
        ++total_g[group[i]];
        const bool exposed = unif(rng) < world.propensity(i, j);
        const bool relevant = unif(rng) < world.link_prob(i, j);
        if (exposed && relevant) formed.push_back({i, j});
      }
    }
    report.same_fraction.push_back(static_cast<double>(same) /
                                   static_cast<double>(total));
    std::vector<double> by_group(num_groups, 0.0);
    for (std::size_t g = 0; g < num_groups; ++g) {
      by_group[g] = total_g[g] ? static_cast<double>(same_g[g]) /
                                     static_cast<double>(total_g[g])
                               : 0.0;
    }
    report.same_fraction_by_group.push_back(std::move(by_group));
    report.links_formed.push_back(formed.size());
    if (it < cfg.iterations) {
      if (formed.empty()) {
        throw DataError("feedback pipeline: no links formed at iteration " +
                        std::to_string(it));
      }
      current = world.skeleton.with_edges(std::move(formed));
    }
  }
  return report;
}

}  // namespace exbias
