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

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "exbias/common.hpp"
#include "exbias/graph.hpp"
#include "exbias/models.hpp"

namespace exbias {

enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double lambda_l = 1.0;
  double lambda_r = 10.0;
  Objective objective = Objective::kW;
  std::size_t negatives_per_positive = 1;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double init_scale = 0.01;
  bool detach_weights = false;
  std::size_t early_stopping_patience = 0;  // 0 disables

  LossConfig loss_config() const {
    return LossConfig{lambda_l, lambda_r, objective, detach_weights};
  }

  void validate() const {
    if (!(learning_rate > 0.0)) {
      throw ConfigError("learning_rate: must be > 0");
    }
    if (batch_size == 0) throw ConfigError("batch_size: must be >= 1");
    if (negatives_per_positive == 0) {
      throw ConfigError("negatives_per_positive: must be >= 1");
    }
    if (!(lambda_l > 0.0)) throw ConfigError("lambda_l: must be > 0");
    if (lambda_r < 0.0) throw ConfigError("lambda_r: must be >= 0");
    if (init_scale < 0.0) throw ConfigError("init_scale: must be >= 0");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"learning_rate", learning_rate},
        {"batch_size", batch_size},
        {"epochs", epochs},
        {"lambda_l", lambda_l},
        {"lambda_r", lambda_r},
        {"estimator", std::string(to_string(objective))},
        {"negatives_per_positive", negatives_per_positive},
        {"seed", seed},
        {"optimizer", optimizer == OptimizerKind::kAdam ? "adam" : "sgd"},
        {"init_scale", init_scale},
        {"detach_weights", detach_weights},
        {"early_stopping_patience", early_stopping_patience}};
  }

  /// Missing fields keep their defaults, except that an absent "estimator"
  /// means plain likelihood training (the MLE variant).
  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.objective = Objective::kMle;
    auto field = [&j](const char* name, auto& dst) {
      if (!j.contains(name)) return;
      try {
        j.at(name).get_to(dst);
      } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string(name) + ": wrong type");
      }
    };
    field("learning_rate", c.learning_rate);
    field("batch_size", c.batch_size);
    field("epochs", c.epochs);
    field("lambda_l", c.lambda_l);
    field("lambda_r", c.lambda_r);
    field("negatives_per_positive", c.negatives_per_positive);
    field("seed", c.seed);
    field("init_scale", c.init_scale);
    field("detach_weights", c.detach_weights);
    field("early_stopping_patience", c.early_stopping_patience);
    if (j.contains("estimator") && !j.at("estimator").is_null()) {
      if (!j.at("estimator").is_string()) {
        throw ConfigError("estimator: wrong type");
      }
      c.objective = parse_objective(j.at("estimator").get<std::string>());
    }
    if (j.contains("optimizer")) {
      const auto opt = j.at("optimizer").get<std::string>();
      if (opt == "adam") {
        c.optimizer = OptimizerKind::kAdam;
      } else if (opt == "sgd") {
        c.optimizer = OptimizerKind::kSgd;
      } else {
        throw ConfigError("optimizer: expected adam or sgd");
      }
    }
    c.validate();
    return c;
  }
};

/// Positives and universe bookkeeping for negative sampling.
class TrainingSet {
 public:
  TrainingSet(const Graph& g, PairUniverse universe)
      : graph_(&g), universe_(std::move(universe)) {
    std::vector<bool> in(g.num_nodes(), false);
    for (auto m : universe_.members()) in[m] = true;
    for (const NodePair& e : g.edges()) {
      if (in[e.src] && in[e.dst]) positives_.push_back(e);
    }
  }

  explicit TrainingSet(const Graph& g) : TrainingSet(g, PairUniverse(g)) {}

  const Graph& graph() const { return *graph_; }
  const PairUniverse& universe() const { return universe_; }
  std::span<const NodePair> positives() const { return positives_; }
  std::size_t num_negatives() const {
    return universe_.size() - positives_.size();
  }

 private:
  const Graph* graph_;
  PairUniverse universe_;
  std::vector<NodePair> positives_;
};

/// Positives drawn per batch: batch_size / (1 + k), at least one.
inline std::size_t positives_per_batch(const TrainConfig& cfg) {
  return std::max<std::size_t>(
      1, cfg.batch_size / (1 + cfg.negatives_per_positive));
}

/// Importance weight carried by each sampled negative:
/// (|U| - |E|) / (k |E|).
inline double negative_weight(std::size_t universe_size, std::size_t n_edges,
                              std::size_t k) {
  return static_cast<double>(universe_size - n_edges) /
         (static_cast<double>(k) * static_cast<double>(n_edges));
}

/// Uniform positives from E and k uniform negatives per positive from U \ E.
/// The weighted batch mean is an unbiased estimate of the universe mean.
inline std::vector<BatchItem> sample_batch(const TrainingSet& set,
                                           const TrainConfig& cfg, Rng& rng) {
  const auto pos = set.positives();
  if (pos.empty()) throw DataError("sample_batch: empty edge set");
  const std::size_t n_pos = positives_per_batch(cfg);
  const std::size_t k = cfg.negatives_per_positive;
  const bool has_negatives = set.num_negatives() > 0;
  const double w_neg = negative_weight(set.universe().size(), pos.size(), k);

  std::vector<BatchItem> batch;
  batch.reserve(n_pos * (1 + k));
  std::uniform_int_distribution<std::size_t> pick_pos(0, pos.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_pair(
      0, set.universe().size() - 1);
  const Graph& g = set.graph();
  for (std::size_t b = 0; b < n_pos; ++b) {
    const NodePair e = pos[pick_pos(rng)];
    batch.push_back(BatchItem{e.src, e.dst, 1, 1.0});
    if (!has_negatives) continue;
    for (std::size_t r = 0; r < k; ++r) {
      NodePair cand = set.universe()[pick_pair(rng)];
      while (g.has_edge(cand.src, cand.dst)) {
        cand = set.universe()[pick_pair(rng)];
      }
      batch.push_back(BatchItem{cand.src, cand.dst, 0, w_neg});
    }
  }
  return batch;
}

inline std::vector<BatchItem> sample_batch(const Graph& g,
                                           const TrainConfig& cfg, Rng& rng) {
  return sample_batch(TrainingSet(g), cfg, rng);
}

// --- Adam ----------------------------------------------------------------

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}

  nlohmann::json to_json() const {
    return nlohmann::json{{"m", m}, {"v", v}, {"t", t}};
  }
  static AdamState from_json(const nlohmann::json& j) {
    AdamState s;
    s.m = j.at("m").get<std::vector<double>>();
    s.v = j.at("v").get<std::vector<double>>();
    s.t = j.at("t").get<std::uint64_t>();
    return s;
  }
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// In-place Adam update (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
inline void adam_step(std::span<double> params, std::span<const double> grads,
                      AdamState& state, double lr) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw DataError("adam_step: shape mismatch");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = kBeta1 * state.m[k] + (1.0 - kBeta1) * grads[k];
    state.v[k] = kBeta2 * state.v[k] + (1.0 - kBeta2) * grads[k] * grads[k];
    const double m_hat = state.m[k] / c1;
    const double v_hat = state.v[k] / c2;
    params[k] -= lr * m_hat / (std::sqrt(v_hat) + kEps);
  }
}

// Parameters flattened as [w..., b, logits...].

inline std::vector<double> pack_parameters(const LinkModel& m,
                                           const PropensityModel& p) {
  std::vector<double> x(m.w);
  x.push_back(m.b);
  x.insert(x.end(), p.logits.begin(), p.logits.end());
  return x;
}

inline void unpack_parameters(std::span<const double> x, LinkModel& m,
                              PropensityModel& p) {
  const std::size_t d = m.w.size();
  std::copy(x.begin(), x.begin() + d, m.w.begin());
  m.b = x[d];
  std::copy(x.begin() + d + 1, x.end(), p.logits.begin());
}

inline std::vector<double> pack_gradients(const GradientBundle& g) {
  std::vector<double> x(g.d_w);
  x.push_back(g.d_b);
  x.insert(x.end(), g.d_logits.begin(), g.d_logits.end());
  return x;
}

// --- Training loop -------------------------------------------------------

struct TrainReport {
  std::vector<double> loss_trace;        // mean batch loss per epoch
  std::vector<double> validation_trace;  // empty without a validation set
  LinkModel link;
  PropensityModel propensity;
  std::size_t epochs_run = 0;
  std::uint64_t seed = 0;
  double wall_clock_seconds = 0.0;

  /// Timing is excluded unless asked for so that reports are reproducible.
  nlohmann::json to_json(bool include_timing = false) const {
    nlohmann::json j{{"loss_trace", loss_trace},
                     {"validation_trace", validation_trace},
                     {"epochs_run", epochs_run},
                     {"seed", seed},
                     {"model", checkpoint_to_json(link, propensity)}};
    if (include_timing) j["wall_clock_seconds"] = wall_clock_seconds;
    return j;
  }
};

/// w, b and logits uniform in [-scale, scale].
inline void init_models(std::size_t d, std::size_t c, double scale, Rng& rng,
                        LinkModel& m, PropensityModel& p) {
  std::uniform_real_distribution<double> u(-scale, scale);
  m.w.assign(d, 0.0);
  for (double& x : m.w) x = u(rng);
  m.b = u(rng);
  p = PropensityModel(c);
  for (double& x : p.logits) x = u(rng);
}

/// Exhaustive (unweighted) mean of the combined objective over a universe.
inline double mean_objective(const LinkModel& m, const PropensityModel& p,
                             const Graph& g, const PairUniverse& u,
                             const LossConfig& cfg) {
  const bool with_prop = uses_propensity(cfg.objective);
  CompensatedSum acc;
  for (NodePair pr : u) {
    const double y_hat =
        predict_link_prob(m, g.features(pr.src), g.features(pr.dst));
    const double pi_hat =
        with_prop ? predict_propensity(p, g.category(pr.src),
                                       g.category(pr.dst))
                  : 1.0;
    const int o = g.has_edge(pr.src, pr.dst) ? 1 : 0;
    acc.add(pair_objective(o, y_hat, pi_hat, cfg).value);
  }
  return acc.value() / static_cast<double>(u.size());
}

/// Minibatch training of the link and propensity models. Deterministic given
/// the config seed. `validation` enables early stopping on the validation
/// likelihood when cfg.early_stopping_patience > 0. `init` replaces the
/// random initialization (continued training).
inline TrainReport train(const TrainingSet& set, const TrainConfig& cfg,
                         const std::optional<PairUniverse>& validation =
                             std::nullopt,
                         const Checkpoint* init = nullptr) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const Graph& g = set.graph();
  Rng rng(cfg.seed);
  TrainReport report;
  report.seed = cfg.seed;
  init_models(g.feature_dim(), std::max<std::size_t>(1, g.num_categories()),
              cfg.init_scale, rng, report.link, report.propensity);
  if (init) {
    if (init->link.dim() != g.feature_dim() ||
        init->propensity.num_categories != report.propensity.num_categories) {
      throw DataError("initial model does not match the graph");
    }
    report.link = init->link;
    report.propensity = init->propensity;
  }
  if (cfg.epochs == 0) return report;
  if (set.positives().empty()) throw DataError("train: empty edge set");

  const LossConfig loss_cfg = cfg.loss_config();
  LossConfig val_cfg = loss_cfg;
  val_cfg.lambda_r = 0.0;
  std::vector<double> params = pack_parameters(report.link, report.propensity);
  AdamState adam(params.size());
  const std::size_t n_pos = positives_per_batch(cfg);
  const std::size_t batches =
      (set.positives().size() + n_pos - 1) / n_pos;

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best_params = params;
  std::size_t since_best = 0;
  const bool early_stop = validation && cfg.early_stopping_patience > 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    CompensatedSum epoch_loss;
    for (std::size_t b = 0; b < batches; ++b) {
      const auto batch = sample_batch(set, cfg, rng);
      unpack_parameters(params, report.link, report.propensity);
      const auto lg = loss_and_gradients(report.link, report.propensity, batch,
                                         g, loss_cfg);
      epoch_loss.add(lg.loss);
      const auto grads = pack_gradients(lg.grad);
      if (cfg.optimizer == OptimizerKind::kAdam) {
        adam_step(params, grads, adam, cfg.learning_rate);
      } else {
        for (std::size_t k = 0; k < params.size(); ++k) {
          params[k] -= cfg.learning_rate * grads[k];
        }
      }
    }
    const double mean_loss = epoch_loss.value() / static_cast<double>(batches);
    if (!std::isfinite(mean_loss)) {
      throw NumericError("training diverged at epoch " +
                         std::to_string(epoch) + " (non-finite loss)");
    }
    report.loss_trace.push_back(mean_loss);
    ++report.epochs_run;
    unpack_parameters(params, report.link, report.propensity);
    if (validation) {
      const double v =
          mean_objective(report.link, report.propensity, g, *validation,
                         val_cfg);
      report.validation_trace.push_back(v);
      if (early_stop) {
        if (v < best_val) {
          best_val = v;
          best_params = params;
          since_best = 0;
        } else if (++since_best >= cfg.early_stopping_patience) {
          break;
        }
      }
    }
  }
  if (early_stop) unpack_parameters(best_params, report.link, report.propensity);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count();
  return report;
}

inline TrainReport train(const Graph& g, const TrainConfig& cfg,
                         const Checkpoint* init = nullptr) {
  return train(TrainingSet(g), cfg, std::nullopt, init);
}

}  // namespace exbias
