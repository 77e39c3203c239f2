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

// Semi-synthetic worlds with known propensities and link probabilities,
// observation sampling, and the exact / Monte Carlo oracles used to check the
// estimator closed forms.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "exbias/common.hpp"
#include "exbias/estimators.hpp"
#include "exbias/graph.hpp"
#include "exbias/models.hpp"

namespace exbias {

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

struct SyntheticSpec {
  std::size_t n = 200;
  std::size_t num_categories = 2;
  std::size_t dim = 16;
  Range diag_range{0.7, 1.0};
  Range offdiag_range{0.1, 0.3};
  std::optional<std::vector<double>> true_w;
  std::optional<double> true_b;
  /// Row-major C x C exposure table; drawn from the ranges when absent.
  std::optional<std::vector<double>> pi_table;
  /// Bias b is calibrated so the mean link probability hits this value
  /// (unless true_b is given).
  double target_mean_y = 0.2;
  /// Scale of the drawn unit-normal w; 0 means 1 / sqrt(dim).
  double weight_scale = 0.0;
  /// Trailing feature dimensions that carry a +/- shift per category. The
  /// true w is zero on them, so they inform the exposure but not y.
  std::size_t category_dims = 0;
  double category_shift = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 2) throw ConfigError("n: must be >= 2");
    if (num_categories == 0) throw ConfigError("num_categories: must be >= 1");
    if (dim == 0) throw ConfigError("dim: must be >= 1");
    auto check_range = [](const Range& r, const char* name) {
      if (!(r.lo >= 0.0 && r.hi <= 1.0 && r.lo <= r.hi)) {
        throw ConfigError(std::string(name) +
                          ": must satisfy 0 <= lo <= hi <= 1");
      }
    };
    check_range(diag_range, "diag_range");
    check_range(offdiag_range, "offdiag_range");
    if (!(target_mean_y > 0.0 && target_mean_y < 1.0)) {
      throw ConfigError("target_mean_y: must lie in (0, 1)");
    }
    if (true_w && true_w->size() != dim) {
      throw ConfigError("true_w: length must equal dim");
    }
    if (category_dims > dim) {
      throw ConfigError("category_dims: must be <= dim");
    }
    if (weight_scale < 0.0) throw ConfigError("weight_scale: must be >= 0");
    if (pi_table) {
      if (pi_table->size() != num_categories * num_categories) {
        throw ConfigError("pi_table: need num_categories^2 entries");
      }
      for (double p : *pi_table) {
        if (!(p >= 0.0 && p <= 1.0)) {
          throw ConfigError("pi_table: entries must lie in [0, 1]");
        }
      }
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"n", n},
                     {"num_categories", num_categories},
                     {"dim", dim},
                     {"diag_range", {diag_range.lo, diag_range.hi}},
                     {"offdiag_range", {offdiag_range.lo, offdiag_range.hi}},
                     {"target_mean_y", target_mean_y},
                     {"weight_scale", weight_scale},
                     {"category_dims", category_dims},
                     {"category_shift", category_shift},
                     {"seed", seed}};
    if (true_w) j["true_w"] = *true_w;
    if (true_b) j["true_b"] = *true_b;
    if (pi_table) j["pi_table"] = *pi_table;
    return j;
  }

  static SyntheticSpec from_json(const nlohmann::json& j) {
    SyntheticSpec s;
    auto field = [&j](const char* name, auto& dst) {
      if (!j.contains(name)) return;
      try {
        j.at(name).get_to(dst);
      } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string(name) + ": wrong type");
      }
    };
    auto range = [&j](const char* name, Range& dst) {
      if (!j.contains(name)) return;
      const auto& v = j.at(name);
      if (!v.is_array() || v.size() != 2 || !v[0].is_number() ||
          !v[1].is_number()) {
        throw ConfigError(std::string(name) + ": expected [lo, hi]");
      }
      dst = Range{v[0].get<double>(), v[1].get<double>()};
    };
    field("n", s.n);
    field("num_categories", s.num_categories);
    field("dim", s.dim);
    range("diag_range", s.diag_range);
    range("offdiag_range", s.offdiag_range);
    field("target_mean_y", s.target_mean_y);
    field("weight_scale", s.weight_scale);
    field("category_dims", s.category_dims);
    field("category_shift", s.category_shift);
    field("seed", s.seed);
    if (j.contains("true_w")) {
      std::vector<double> w;
      field("true_w", w);
      s.true_w = std::move(w);
    }
    if (j.contains("true_b")) {
      double b = 0.0;
      field("true_b", b);
      s.true_b = b;
    }
    if (j.contains("pi_table")) {
      std::vector<double> p;
      field("pi_table", p);
      s.pi_table = std::move(p);
    }
    s.validate();
    return s;
  }
};

/// Nodes with features and categories, the true C x C propensity table and
/// the true link model.
struct GroundTruthWorld {
  Graph skeleton;
  std::vector<double> pi;  // row-major C x C
  LinkModel truth;
  double weight_scale = 1.0;

  std::size_t num_categories() const { return skeleton.num_categories(); }

  double propensity(std::uint32_t i, std::uint32_t j) const {
    return pi[skeleton.category(i) * num_categories() + skeleton.category(j)];
  }
  double link_prob(std::uint32_t i, std::uint32_t j) const {
    return predict_link_prob(truth, skeleton.features(i),
                             skeleton.features(j));
  }

  GroundTruth pair_truth(const PairUniverse& u) const {
    GroundTruth t;
    t.y.reserve(u.size());
    t.pi.reserve(u.size());
    for (NodePair p : u) {
      t.y.push_back(link_prob(p.src, p.dst));
      t.pi.push_back(propensity(p.src, p.dst));
    }
    return t;
  }
  GroundTruth pair_truth() const { return pair_truth(PairUniverse(skeleton)); }
};

namespace detail {

/// +1 / -1 code of a category on the k-th category dimension: bit
/// (k mod bits) of the category index.
inline double category_sign(std::size_t category, std::size_t k,
                            std::size_t num_categories) {
  std::size_t bits = 1;
  while ((std::size_t{1} << bits) < num_categories) ++bits;
  return ((category >> (k % bits)) & 1u) ? -1.0 : 1.0;
}

/// Finds b so that the mean of sigmoid(z + b) over the scores equals target.
inline double calibrate_bias(const std::vector<double>& scores, double target) {
  double lo = -50.0;
  double hi = 50.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    CompensatedSum acc;
    for (double z : scores) acc.add(sigmoid(z + mid));
    if (acc.value() / static_cast<double>(scores.size()) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

inline GroundTruthWorld generate_world(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t c = spec.num_categories;
  const std::size_t first_cat_dim = spec.dim - spec.category_dims;

  std::vector<Node> nodes(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    nodes[i].category = static_cast<std::uint32_t>(i * c / spec.n);
    nodes[i].features.resize(spec.dim);
    for (std::size_t k = 0; k < spec.dim; ++k) {
      double h = normal(rng);
      if (k >= first_cat_dim) {
        h += spec.category_shift *
             detail::category_sign(nodes[i].category, k - first_cat_dim, c);
      }
      nodes[i].features[k] = h;
    }
  }

  GroundTruthWorld world;
  world.skeleton = Graph(std::move(nodes), {}, c);
  std::uniform_real_distribution<double> diag(spec.diag_range.lo,
                                              spec.diag_range.hi);
  std::uniform_real_distribution<double> off(spec.offdiag_range.lo,
                                             spec.offdiag_range.hi);
  world.pi.resize(c * c);
  for (std::size_t u = 0; u < c; ++u) {
    for (std::size_t v = 0; v < c; ++v) {
      world.pi[u * c + v] = u == v ? diag(rng) : off(rng);
    }
  }
  if (spec.pi_table) world.pi = *spec.pi_table;

  world.weight_scale = spec.weight_scale > 0.0
                           ? spec.weight_scale
                           : 1.0 / std::sqrt(static_cast<double>(spec.dim));
  if (spec.true_w) {
    world.truth.w = *spec.true_w;
  } else {
    world.truth.w.resize(spec.dim);
    for (std::size_t k = 0; k < spec.dim; ++k) {
      const double draw = normal(rng);
      world.truth.w[k] = k < first_cat_dim ? world.weight_scale * draw : 0.0;
    }
  }
  if (spec.true_b) {
    world.truth.b = *spec.true_b;
  } else {
    // Calibrate on the full universe, or on a fixed pseudo-random sample of
    // pairs when the universe is large.
    const PairUniverse u(world.skeleton);
    constexpr std::size_t kMaxCalibrationPairs = 250000;
    std::vector<double> scores;
    world.truth.b = 0.0;
    if (u.size() <= kMaxCalibrationPairs) {
      scores.reserve(u.size());
      for (NodePair p : u) {
        scores.push_back(link_score(world.truth, world.skeleton.features(p.src),
                                    world.skeleton.features(p.dst)));
      }
    } else {
      Rng sub(spec.seed ^ 0x9e3779b97f4a7c15ULL);
      std::uniform_int_distribution<std::size_t> pick(0, u.size() - 1);
      scores.reserve(kMaxCalibrationPairs);
      for (std::size_t s = 0; s < kMaxCalibrationPairs; ++s) {
        const NodePair p = u[pick(sub)];
        scores.push_back(link_score(world.truth, world.skeleton.features(p.src),
                                    world.skeleton.features(p.dst)));
      }
    }
    world.truth.b = detail::calibrate_bias(scores, spec.target_mean_y);
  }
  return world;
}

/// Latent links o' (relevance under full exposure) and observed links
/// o = o' * a drawn together.
struct SampledGraphs {
  Graph observed;
  Graph latent;
};

/// Per pair in row-major universe order: o' ~ Ber(y), a ~ Ber(pi), o = o' a.
inline SampledGraphs sample_outcomes(const GroundTruthWorld& world, Rng& rng) {
  const PairUniverse u(world.skeleton);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<NodePair> observed;
  std::vector<NodePair> latent;
  for (NodePair p : u) {
    const bool relevant = unif(rng) < world.link_prob(p.src, p.dst);
    const bool exposed = unif(rng) < world.propensity(p.src, p.dst);
    if (relevant) {
      latent.push_back(p);
      if (exposed) observed.push_back(p);
    }
  }
  return SampledGraphs{world.skeleton.with_edges(std::move(observed)),
                       world.skeleton.with_edges(std::move(latent))};
}

inline Graph sample_observed(const GroundTruthWorld& world, Rng& rng) {
  return sample_outcomes(world, rng).observed;
}

// --- Oracles -------------------------------------------------------------

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Exact mean and variance of term(o) by enumerating the four (o', a)
/// outcomes with probabilities y pi, y (1 - pi), (1 - y) pi, (1 - y)(1 - pi).
inline Moments exact_pair_moments(double y, double pi,
                                  const std::function<double(int)>& term) {
  const double probs[4] = {y * pi, y * (1.0 - pi), (1.0 - y) * pi,
                           (1.0 - y) * (1.0 - pi)};
  const int o_prime[4] = {1, 1, 0, 0};
  const int exposed[4] = {1, 0, 1, 0};
  double values[4];
  Moments m;
  for (int s = 0; s < 4; ++s) {
    values[s] = term(o_prime[s] * exposed[s]);
    m.mean += probs[s] * values[s];
  }
  for (int s = 0; s < 4; ++s) {
    m.variance += probs[s] * (values[s] - m.mean) * (values[s] - m.mean);
  }
  return m;
}

struct RiskDistribution {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation across trials
  std::vector<double> samples;

  double standard_error() const {
    return std / std::sqrt(static_cast<double>(samples.size()));
  }
};

/// Resamples the observations `trials` times and recomputes the estimator.
/// Trial t draws from its own stream seeded with seed + t.
inline RiskDistribution monte_carlo_risk_distribution(
    const GroundTruth& truth, const PairEstimates& est, Estimator which,
    std::size_t trials, std::uint64_t seed,
    const LossSpec& loss = LossSpec::zero_one()) {
  if (trials < 100) throw ConfigError("trials: must be >= 100");
  if (truth.size() != est.size()) {
    throw DataError("ground truth and estimates differ in size");
  }
  RiskDistribution dist;
  dist.samples.reserve(trials);
  std::vector<std::uint8_t> o(truth.size());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(seed + t);
    for (std::size_t k = 0; k < truth.size(); ++k) {
      const bool relevant = unif(rng) < truth.y[k];
      const bool exposed = unif(rng) < truth.pi[k];
      o[k] = (relevant && exposed) ? 1 : 0;
    }
    dist.samples.push_back(estimate_risk(which, o, est, loss).value);
  }
  dist.mean = mean_of(dist.samples);
  dist.std = std::sqrt(sample_variance(dist.samples));
  return dist;
}

inline RiskDistribution monte_carlo_risk_distribution(
    const GroundTruthWorld& world, const PairEstimates& est, Estimator which,
    std::size_t trials, std::uint64_t seed,
    const LossSpec& loss = LossSpec::zero_one()) {
  return monte_carlo_risk_distribution(world.pair_truth(), est, which, trials,
                                       seed, loss);
}

// --- World files ---------------------------------------------------------
// <dir>/nodes.jsonl, edges.tsv (observed), true_edges.tsv (latent),
// pi.csv (C x C), truth.json {"w","b","weight_scale", ...}.

namespace detail {

inline std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

}  // namespace detail

inline void write_pi_csv(std::ostream& out, std::span<const double> pi,
                         std::size_t c) {
  for (std::size_t u = 0; u < c; ++u) {
    for (std::size_t v = 0; v < c; ++v) {
      if (v) out << ',';
      out << detail::format_double(pi[u * c + v]);
    }
    out << '\n';
  }
}

inline std::vector<double> read_pi_csv(std::istream& in, std::size_t& c) {
  std::vector<double> values;
  std::string line;
  c = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(row, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw DataError("pi.csv: cannot parse '" + cell + "'");
      }
      ++cols;
    }
    if (c == 0) c = cols;
    if (cols != c) throw DataError("pi.csv: ragged rows");
  }
  if (values.size() != c * c) throw DataError("pi.csv: matrix is not square");
  for (double p : values) {
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("pi.csv: value outside [0,1]");
  }
  return values;
}

inline void save_world(const std::filesystem::path& dir,
                       const GroundTruthWorld& world,
                       const SampledGraphs& sampled,
                       const nlohmann::json& extra = nlohmann::json::object()) {
  std::filesystem::create_directories(dir);
  save_graph(sampled.observed, dir / "nodes.jsonl", dir / "edges.tsv");
  {
    std::ofstream out(dir / "true_edges.tsv", std::ios::binary);
    write_edges(out, sampled.latent.edges());
  }
  {
    std::ofstream out(dir / "pi.csv", std::ios::binary);
    write_pi_csv(out, world.pi, world.num_categories());
  }
  nlohmann::json truth{{"w", world.truth.w},
                       {"b", world.truth.b},
                       {"weight_scale", world.weight_scale}};
  for (auto it = extra.begin(); it != extra.end(); ++it) truth[it.key()] = *it;
  std::ofstream out(dir / "truth.json", std::ios::binary);
  out << truth.dump(2) << '\n';
}

struct LoadedData {
  Graph observed;
  std::optional<GroundTruthWorld> world;  // present when truth files exist
  std::optional<Graph> latent;
};

/// Loads a graph directory (nodes.jsonl + edges.tsv); world truth files are
/// picked up when present.
inline LoadedData load_data_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw DataError("data directory not found: " + dir.string());
  }
  LoadedData data;
  std::optional<std::size_t> c;
  std::vector<double> pi;
  if (std::filesystem::exists(dir / "pi.csv")) {
    std::ifstream in(dir / "pi.csv");
    std::size_t cc = 0;
    pi = read_pi_csv(in, cc);
    c = cc;
  }
  data.observed = load_graph(dir / "nodes.jsonl", dir / "edges.tsv", c);
  if (std::filesystem::exists(dir / "true_edges.tsv")) {
    std::ifstream in(dir / "true_edges.tsv");
    data.latent = data.observed.with_edges(read_edges(in));
  }
  if (c && std::filesystem::exists(dir / "truth.json")) {
    std::ifstream in(dir / "truth.json");
    nlohmann::json j;
    try {
      in >> j;
      GroundTruthWorld world;
      world.skeleton = data.observed.with_edges({});
      world.pi = std::move(pi);
      world.truth.w = j.at("w").get<std::vector<double>>();
      world.truth.b = j.at("b").get<double>();
      world.weight_scale = j.value("weight_scale", 1.0);
      if (world.truth.w.size() != world.skeleton.feature_dim()) {
        throw DataError("truth.json: w does not match feature dimension");
      }
      data.world = std::move(world);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("truth.json: ") + e.what());
    }
  }
  return data;
}

}  // namespace exbias
