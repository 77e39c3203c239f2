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

// Link-probability and propensity models with hand-derived gradients of the
// combined objective  lambda_L * NLL(o | y_hat pi_hat) + lambda_R * R_hat.

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "exbias/common.hpp"
#include "exbias/estimators.hpp"
#include "exbias/graph.hpp"

namespace exbias {

/// y_hat(i, j) = sigmoid(w . (h_i * h_j) + b).
struct LinkModel {
  std::vector<double> w;
  double b = 0.0;

  std::size_t dim() const { return w.size(); }
  friend bool operator==(const LinkModel&, const LinkModel&) = default;
};

/// Propensity per (source category, target category):
/// pi_hat = clamp(sigmoid(logit), floor, 1).
struct PropensityModel {
  std::size_t num_categories = 0;
  std::vector<double> logits;  // row-major C x C
  double floor = kPropensityFloor;

  PropensityModel() = default;
  explicit PropensityModel(std::size_t c, double init_logit = 0.0)
      : num_categories(c), logits(c * c, init_logit) {}

  double& logit(std::size_t u, std::size_t v) {
    return logits[u * num_categories + v];
  }
  double logit(std::size_t u, std::size_t v) const {
    return logits[u * num_categories + v];
  }
  friend bool operator==(const PropensityModel&,
                         const PropensityModel&) = default;
};

struct GradientBundle {
  std::vector<double> d_w;
  double d_b = 0.0;
  std::vector<double> d_logits;  // row-major C x C

  GradientBundle() = default;
  GradientBundle(std::size_t d, std::size_t c)
      : d_w(d, 0.0), d_logits(c * c, 0.0) {}

  bool all_finite() const {
    if (!std::isfinite(d_b)) return false;
    for (double g : d_w) {
      if (!std::isfinite(g)) return false;
    }
    for (double g : d_logits) {
      if (!std::isfinite(g)) return false;
    }
    return true;
  }
};

inline double link_score(const LinkModel& m, std::span<const double> h_i,
                         std::span<const double> h_j) {
  if (h_i.size() != m.w.size() || h_j.size() != m.w.size()) {
    throw DataError("link model dimension " + std::to_string(m.w.size()) +
                    " does not match feature dimension");
  }
  double z = m.b;
  for (std::size_t k = 0; k < m.w.size(); ++k) z += m.w[k] * h_i[k] * h_j[k];
  return z;
}

inline double predict_link_prob(const LinkModel& m, std::span<const double> h_i,
                                std::span<const double> h_j) {
  return sigmoid(link_score(m, h_i, h_j));
}

inline double predict_propensity(const PropensityModel& p, std::size_t cat_i,
                                 std::size_t cat_j) {
  if (cat_i >= p.num_categories || cat_j >= p.num_categories) {
    throw DataError("category out of range for propensity model");
  }
  return std::min(1.0, std::max(p.floor, sigmoid(p.logit(cat_i, cat_j))));
}

/// Training objective. kNoProp fits y_hat alone to the observed links
/// (pi_hat fixed at 1); kMle fits y_hat * pi_hat by likelihood only; the
/// other three add lambda_R times the corresponding weighted risk.
enum class Objective { kNoProp, kMle, kW, kPu, kAp };

inline std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::kNoProp: return "none";
    case Objective::kMle: return "mle";
    case Objective::kW: return "w";
    case Objective::kPu: return "pu";
    case Objective::kAp: return "ap";
  }
  return "?";
}

inline Objective parse_objective(std::string_view s) {
  if (s == "none") return Objective::kNoProp;
  if (s == "mle") return Objective::kMle;
  if (s == "w") return Objective::kW;
  if (s == "pu") return Objective::kPu;
  if (s == "ap") return Objective::kAp;
  throw ConfigError("unknown estimator '" + std::string(s) +
                    "' (expected none, mle, w, pu or ap)");
}

inline bool uses_propensity(Objective o) { return o != Objective::kNoProp; }

inline bool has_risk_term(Objective o) {
  return o == Objective::kW || o == Objective::kPu || o == Objective::kAp;
}

inline Estimator risk_estimator(Objective o) {
  switch (o) {
    case Objective::kW: return Estimator::kW;
    case Objective::kPu: return Estimator::kPu;
    case Objective::kAp: return Estimator::kAp;
    default: break;
  }
  return Estimator::kNaive;
}

struct LossConfig {
  double lambda_l = 1.0;
  double lambda_r = 10.0;
  Objective objective = Objective::kW;
  /// Treat the estimator weights (1/pi_hat, psi, tau) as constants when
  /// differentiating. Off by default; kept for ablations.
  bool detach_weights = false;
};

/// One training example; `weight` is an importance weight for negative
/// sampling (1 for an exhaustive batch).
struct BatchItem {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::uint8_t o = 0;
  double weight = 1.0;
};

struct PairLoss {
  double value = 0.0;
  double d_y_hat = 0.0;
  double d_pi_hat = 0.0;
};

/// Combined per-pair loss and its partial derivatives in (y_hat, pi_hat).
/// The risk term uses log-loss inside the estimator weights.
inline PairLoss pair_objective(int o, double y_hat, double pi_hat,
                               const LossConfig& cfg) {
  PairLoss out;

  // Likelihood of the observation under o ~ Ber(y_hat * pi_hat).
  const double p_raw = y_hat * pi_hat;
  const double p = clamp_log_arg(p_raw);
  const bool p_free = p == p_raw;
  double nll = 0.0;
  double d_nll_dp = 0.0;
  if (o == 1) {
    nll = -std::log(p);
    d_nll_dp = p_free ? -1.0 / p : 0.0;
  } else {
    nll = -std::log(1.0 - p);
    d_nll_dp = p_free ? 1.0 / (1.0 - p) : 0.0;
  }
  out.value = cfg.lambda_l * nll;
  out.d_y_hat = cfg.lambda_l * d_nll_dp * pi_hat;
  out.d_pi_hat = cfg.lambda_l * d_nll_dp * y_hat;

  if (!has_risk_term(cfg.objective) || cfg.lambda_r == 0.0) return out;

  // Log-loss pieces delta(1, y_hat), delta(0, y_hat) and their slopes.
  const double yc = clamp_log_arg(y_hat);
  const bool y_free = yc == y_hat;
  const double l1 = -std::log(yc);
  const double l0 = -std::log(1.0 - yc);
  const double dl1 = y_free ? -1.0 / yc : 0.0;
  const double dl0 = y_free ? 1.0 / (1.0 - yc) : 0.0;

  const double den = 1.0 - pi_hat * y_hat;
  const double psi = (1.0 - y_hat) / den;
  const double tau = 1.0 - psi;
  const double keep = cfg.detach_weights ? 0.0 : 1.0;
  const double dpsi_dy = keep * (pi_hat - 1.0) / (den * den);
  const double dpsi_dpi = keep * (1.0 - y_hat) * y_hat / (den * den);

  double r = 0.0;
  double dr_dy = 0.0;
  double dr_dpi = 0.0;
  switch (cfg.objective) {
    case Objective::kW:
      if (o == 1) {
        r = l1 / pi_hat;
        dr_dy = dl1 / pi_hat;
        dr_dpi = -keep * l1 / (pi_hat * pi_hat);
      } else {
        r = psi * l0;
        dr_dy = dpsi_dy * l0 + psi * dl0;
        dr_dpi = dpsi_dpi * l0;
      }
      break;
    case Objective::kPu:
      if (o == 1) {
        r = l1 / pi_hat + (1.0 - 1.0 / pi_hat) * l0;
        dr_dy = dl1 / pi_hat + (1.0 - 1.0 / pi_hat) * dl0;
        dr_dpi = keep * (l0 - l1) / (pi_hat * pi_hat);
      } else {
        r = l0;
        dr_dy = dl0;
      }
      break;
    case Objective::kAp:
      if (o == 1) {
        r = l1;
        dr_dy = dl1;
      } else {
        r = psi * l0 + tau * l1;
        dr_dy = dpsi_dy * l0 + psi * dl0 - dpsi_dy * l1 + tau * dl1;
        dr_dpi = dpsi_dpi * (l0 - l1);
      }
      break;
    default:
      break;
  }
  out.value += cfg.lambda_r * r;
  out.d_y_hat += cfg.lambda_r * dr_dy;
  out.d_pi_hat += cfg.lambda_r * dr_dpi;
  return out;
}

struct LossAndGradients {
  double loss = 0.0;
  GradientBundle grad;
};

/// Importance-weighted mean of the combined loss over a batch, with exact
/// gradients in (w, b, logits).
inline LossAndGradients loss_and_gradients(const LinkModel& m,
                                           const PropensityModel& p,
                                           std::span<const BatchItem> batch,
                                           const Graph& g,
                                           const LossConfig& cfg) {
  if (!(cfg.lambda_l > 0.0)) {
    throw ConfigError("lambda_l must be > 0 (guards against trivial solutions)");
  }
  if (cfg.lambda_r < 0.0) throw ConfigError("lambda_r must be >= 0");
  if (batch.empty()) throw DataError("empty batch");
  if (m.dim() != g.feature_dim()) {
    throw DataError("link model dimension does not match graph features");
  }
  const bool with_prop = uses_propensity(cfg.objective);
  if (with_prop && p.num_categories < g.num_categories()) {
    throw DataError("propensity model has fewer categories than the graph");
  }

  const std::size_t d = m.dim();
  LossAndGradients out;
  out.grad = GradientBundle(d, p.num_categories);
  CompensatedSum loss_acc;
  double weight_sum = 0.0;
  for (const BatchItem& item : batch) {
    const auto hi = g.features(item.src);
    const auto hj = g.features(item.dst);
    const double y_hat = predict_link_prob(m, hi, hj);
    double pi_hat = 1.0;
    double dpi_dlogit = 0.0;
    std::size_t cell = 0;
    if (with_prop) {
      const std::size_t cu = g.category(item.src);
      const std::size_t cv = g.category(item.dst);
      cell = cu * p.num_categories + cv;
      const double s = sigmoid(p.logits[cell]);
      pi_hat = std::min(1.0, std::max(p.floor, s));
      dpi_dlogit = (s == pi_hat) ? s * (1.0 - s) : 0.0;
    }
    const PairLoss pl = pair_objective(item.o, y_hat, pi_hat, cfg);
    loss_acc.add(item.weight * pl.value);
    weight_sum += item.weight;

    const double dz = item.weight * pl.d_y_hat * y_hat * (1.0 - y_hat);
    for (std::size_t k = 0; k < d; ++k) out.grad.d_w[k] += dz * hi[k] * hj[k];
    out.grad.d_b += dz;
    if (with_prop) {
      out.grad.d_logits[cell] += item.weight * pl.d_pi_hat * dpi_dlogit;
    }
  }
  const double inv = 1.0 / weight_sum;
  out.loss = loss_acc.value() * inv;
  for (double& gk : out.grad.d_w) gk *= inv;
  out.grad.d_b *= inv;
  for (double& gk : out.grad.d_logits) gk *= inv;
  if (!std::isfinite(out.loss) || !out.grad.all_finite()) {
    throw NumericError("non-finite loss or gradient");
  }
  return out;
}

/// Model outputs over every pair of a universe.
inline PairEstimates predict_pairs(const LinkModel& m, const PropensityModel& p,
                                   const Graph& g, const PairUniverse& u,
                                   bool with_propensity = true) {
  PairEstimates est;
  est.y_hat.reserve(u.size());
  est.pi_hat.reserve(u.size());
  for (NodePair pr : u) {
    est.y_hat.push_back(
        predict_link_prob(m, g.features(pr.src), g.features(pr.dst)));
    est.pi_hat.push_back(with_propensity
                             ? predict_propensity(p, g.category(pr.src),
                                                  g.category(pr.dst))
                             : 1.0);
  }
  return est;
}

// Checkpoint: {"w":[...],"b":float,"theta":[[...]]}; theta holds the logits.

inline nlohmann::json checkpoint_to_json(const LinkModel& m,
                                         const PropensityModel& p) {
  nlohmann::json theta = nlohmann::json::array();
  for (std::size_t u = 0; u < p.num_categories; ++u) {
    std::vector<double> row(p.logits.begin() + u * p.num_categories,
                            p.logits.begin() + (u + 1) * p.num_categories);
    theta.push_back(row);
  }
  return nlohmann::json{{"w", m.w}, {"b", m.b}, {"theta", theta}};
}

struct Checkpoint {
  LinkModel link;
  PropensityModel propensity;
};

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  Checkpoint cp;
  try {
    cp.link.w = j.at("w").get<std::vector<double>>();
    cp.link.b = j.at("b").get<double>();
    const auto theta = j.at("theta").get<std::vector<std::vector<double>>>();
    cp.propensity = PropensityModel(theta.size());
    for (std::size_t u = 0; u < theta.size(); ++u) {
      if (theta[u].size() != theta.size()) {
        throw DataError("checkpoint theta is not square");
      }
      for (std::size_t v = 0; v < theta.size(); ++v) {
        cp.propensity.logit(u, v) = theta[u][v];
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
  return cp;
}

}  // namespace exbias
