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

// Risk estimators under exposure bias.
//
// Every pair (i, j) of the universe carries a link probability y (link given
// exposure), a propensity pi (probability of exposure) and the observed
// outcome o = o' * a with o' ~ Ber(y), a ~ Ber(pi). A model supplies y_hat and
// pi_hat. The estimators below are means over the universe of a per-pair term
// r(o, pi_hat, y_hat); the closed forms give the exact bias and variance of
// those means under the zero-one loss with scale delta.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "exbias/common.hpp"

namespace exbias {

enum class Estimator { kNaive, kW, kPu, kAp, kTrue };

inline std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::kNaive: return "naive";
    case Estimator::kW: return "w";
    case Estimator::kPu: return "pu";
    case Estimator::kAp: return "ap";
    case Estimator::kTrue: return "true";
  }
  return "?";
}

inline Estimator parse_estimator(std::string_view s) {
  if (s == "naive") return Estimator::kNaive;
  if (s == "w") return Estimator::kW;
  if (s == "pu") return Estimator::kPu;
  if (s == "ap") return Estimator::kAp;
  if (s == "true") return Estimator::kTrue;
  throw ConfigError("unknown estimator '" + std::string(s) + "'");
}

enum class LossKind { kZeroOne, kLog };

struct LossSpec {
  LossKind kind = LossKind::kZeroOne;
  double delta = 1.0;  // zero-one scale; ignored by log-loss

  static LossSpec zero_one(double delta = 1.0) {
    return LossSpec{LossKind::kZeroOne, delta};
  }
  static LossSpec log_loss() { return LossSpec{LossKind::kLog, 1.0}; }
};

/// o_hat = 1(y_hat >= 0.5); a tie maps to 1.
inline int threshold_outcome(double y_hat) { return y_hat >= 0.5 ? 1 : 0; }

/// delta(label, y_hat). Zero-one compares against the thresholded prediction,
/// log-loss against the clamped probability.
inline double pointwise_loss(int label, double y_hat, const LossSpec& loss) {
  if (loss.kind == LossKind::kZeroOne) {
    return label == threshold_outcome(y_hat) ? 0.0 : loss.delta;
  }
  const double p = clamp_log_arg(y_hat);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

/// psi = (1 - y_hat) / (1 - pi_hat * y_hat). The 0/0 corner y_hat = pi_hat = 1
/// takes its pi_hat -> 1 limit of 1.
inline double psi_weight(double y_hat, double pi_hat) {
  const double den = 1.0 - pi_hat * y_hat;
  if (den <= 0.0) return 1.0;
  return (1.0 - y_hat) / den;
}

/// tau = y_hat (1 - pi_hat) / (1 - pi_hat * y_hat) = 1 - psi.
inline double tau_weight(double y_hat, double pi_hat) {
  const double den = 1.0 - pi_hat * y_hat;
  if (den <= 0.0) return 0.0;
  return y_hat * (1.0 - pi_hat) / den;
}

/// Per-pair model outputs over a pair universe.
struct PairEstimates {
  std::vector<double> y_hat;
  std::vector<double> pi_hat;

  std::size_t size() const { return y_hat.size(); }
  int o_hat(std::size_t k) const { return threshold_outcome(y_hat[k]); }

  /// Estimates with pi_hat = 1 everywhere (no propensity model).
  static PairEstimates without_propensity(std::vector<double> y_hat) {
    PairEstimates est;
    est.pi_hat.assign(y_hat.size(), 1.0);
    est.y_hat = std::move(y_hat);
    return est;
  }
};

/// Known generating probabilities; synthetic settings only.
struct GroundTruth {
  std::vector<double> y;
  std::vector<double> pi;
  std::size_t size() const { return y.size(); }
};

struct RiskReport {
  Estimator estimator = Estimator::kNaive;
  double value = 0.0;
  std::size_t n_pairs = 0;
  std::vector<double> per_pair_terms;  // empty unless requested

  nlohmann::json to_json() const {
    return nlohmann::json{{"estimator", std::string(to_string(estimator))},
                          {"value", value},
                          {"n_pairs", n_pairs}};
  }
};

namespace detail {

inline void check_estimates(const PairEstimates& est, bool need_propensity) {
  if (est.y_hat.size() != est.pi_hat.size()) {
    throw DataError("y_hat and pi_hat sizes differ");
  }
  if (est.y_hat.empty()) throw DataError("empty pair estimates");
  for (double y : est.y_hat) {
    if (!(y >= 0.0 && y <= 1.0)) throw DataError("y_hat outside [0, 1]");
  }
  if (!need_propensity) return;
  for (double p : est.pi_hat) {
    if (!(p >= kPropensityFloor && p <= 1.0)) {
      throw DataError("pi_hat below propensity floor or above 1");
    }
  }
}

inline void check_observed(std::span<const std::uint8_t> o,
                           const PairEstimates& est) {
  if (o.size() != est.size()) {
    throw DataError("observed labels and estimates differ in size");
  }
  for (std::uint8_t v : o) {
    if (v > 1) throw DataError("observed labels must be 0 or 1");
  }
}

inline void check_truth(const GroundTruth& truth, std::size_t n) {
  if (truth.y.empty() || truth.y.size() != truth.pi.size()) {
    throw DataError("missing or inconsistent ground truth");
  }
  if (truth.y.size() != n) {
    throw DataError("ground truth and estimates differ in size");
  }
}

inline void check_zero_one(const LossSpec& loss) {
  if (loss.kind != LossKind::kZeroOne) {
    throw ConfigError("closed-form bias/variance require the zero-one loss");
  }
}

}  // namespace detail

/// r(o, pi_hat, y_hat) for each estimator; kTrue is not an observed-data
/// estimator and is rejected here.
inline double pair_term(Estimator which, int o, double y_hat, double pi_hat,
                        const LossSpec& loss) {
  const double d_obs = pointwise_loss(o, y_hat, loss);
  switch (which) {
    case Estimator::kNaive:
      return d_obs;
    case Estimator::kW: {
      const double w = o == 1 ? 1.0 / pi_hat : psi_weight(y_hat, pi_hat);
      return w * d_obs;
    }
    case Estimator::kPu: {
      if (o == 0) return d_obs;
      return d_obs / pi_hat +
             (1.0 - 1.0 / pi_hat) * pointwise_loss(0, y_hat, loss);
    }
    case Estimator::kAp: {
      if (o == 1) return d_obs;
      return psi_weight(y_hat, pi_hat) * d_obs +
             tau_weight(y_hat, pi_hat) * pointwise_loss(1, y_hat, loss);
    }
    case Estimator::kTrue:
      break;
  }
  throw ConfigError("pair_term: 'true' is not an observed-data estimator");
}

/// Expected loss of y_hat against a Ber(y) outcome.
inline double true_pair_term(double y, double y_hat, const LossSpec& loss) {
  return y * pointwise_loss(1, y_hat, loss) +
         (1.0 - y) * pointwise_loss(0, y_hat, loss);
}

/// Evaluates any observed-data estimator over a universe.
inline RiskReport estimate_risk(Estimator which,
                                std::span<const std::uint8_t> o,
                                const PairEstimates& est, const LossSpec& loss,
                                bool keep_terms = false) {
  detail::check_estimates(est, which != Estimator::kNaive);
  detail::check_observed(o, est);
  RiskReport report;
  report.estimator = which;
  report.n_pairs = est.size();
  CompensatedSum acc;
  if (keep_terms) report.per_pair_terms.reserve(est.size());
  for (std::size_t k = 0; k < est.size(); ++k) {
    const double term =
        pair_term(which, o[k], est.y_hat[k], est.pi_hat[k], loss);
    acc.add(term);
    if (keep_terms) report.per_pair_terms.push_back(term);
  }
  report.value = acc.value() / static_cast<double>(est.size());
  return report;
}

inline RiskReport risk_naive(std::span<const std::uint8_t> o,
                             const PairEstimates& est, const LossSpec& loss,
                             bool keep_terms = false) {
  return estimate_risk(Estimator::kNaive, o, est, loss, keep_terms);
}

inline RiskReport risk_w(std::span<const std::uint8_t> o,
                         const PairEstimates& est, const LossSpec& loss,
                         bool keep_terms = false) {
  return estimate_risk(Estimator::kW, o, est, loss, keep_terms);
}

inline RiskReport risk_pu(std::span<const std::uint8_t> o,
                          const PairEstimates& est, const LossSpec& loss,
                          bool keep_terms = false) {
  return estimate_risk(Estimator::kPu, o, est, loss, keep_terms);
}

inline RiskReport risk_ap(std::span<const std::uint8_t> o,
                          const PairEstimates& est, const LossSpec& loss,
                          bool keep_terms = false) {
  return estimate_risk(Estimator::kAp, o, est, loss, keep_terms);
}

/// Risk had every pair been exposed (all pi = 1).
inline RiskReport true_risk(const GroundTruth& truth, const PairEstimates& est,
                            const LossSpec& loss, bool keep_terms = false) {
  detail::check_estimates(est, false);
  detail::check_truth(truth, est.size());
  RiskReport report;
  report.estimator = Estimator::kTrue;
  report.n_pairs = est.size();
  CompensatedSum acc;
  for (std::size_t k = 0; k < est.size(); ++k) {
    const double term = true_pair_term(truth.y[k], est.y_hat[k], loss);
    acc.add(term);
    if (keep_terms) report.per_pair_terms.push_back(term);
  }
  report.value = acc.value() / static_cast<double>(est.size());
  return report;
}

// --- Closed-form bias and variance (zero-one loss) -----------------------

/// Signed per-pair bias contribution R - E[R_hat] in units of delta. The
/// estimator's bias is delta / |U| * |sum of these|.
inline double pair_bias_term(Estimator which, double y, double pi,
                             double y_hat, double pi_hat) {
  const double oh = threshold_outcome(y_hat);
  switch (which) {
    case Estimator::kNaive:
      return y * (1.0 - pi) * (1.0 - 2.0 * oh);
    case Estimator::kW:
      return (1.0 - oh) * y * (1.0 - pi / pi_hat) +
             oh * (1.0 - y - (1.0 - y * pi) * psi_weight(y_hat, pi_hat));
    case Estimator::kPu:
      return y * (1.0 - pi / pi_hat) * (1.0 - 2.0 * oh);
    case Estimator::kAp:
      return (1.0 - oh) *
                 ((1.0 - pi) * y - (1.0 - pi * y) * tau_weight(y_hat, pi_hat)) +
             oh * (1.0 - y - (1.0 - y * pi) * psi_weight(y_hat, pi_hat));
    case Estimator::kTrue:
      return 0.0;
  }
  return 0.0;
}

/// Per-pair variance of the estimator term in units of delta^2:
/// y pi (1 - y pi) times an estimator-specific factor.
inline double pair_variance_term(Estimator which, double y, double pi,
                                 double y_hat, double pi_hat) {
  const double base = y * pi * (1.0 - y * pi);
  const double oh = threshold_outcome(y_hat);
  const double psi = psi_weight(y_hat, pi_hat);
  switch (which) {
    case Estimator::kNaive:
      return base;
    case Estimator::kW:
      return base * ((1.0 - oh) / (pi_hat * pi_hat) + oh * psi * psi);
    case Estimator::kPu:
      return base / (pi_hat * pi_hat);
    case Estimator::kAp:
      return base * psi * psi;
    case Estimator::kTrue:
      return 0.0;
  }
  return 0.0;
}

/// |E[R_hat] - R| for the chosen estimator.
inline double bias_closed_form(Estimator which, const GroundTruth& truth,
                               const PairEstimates& est, const LossSpec& loss) {
  detail::check_zero_one(loss);
  detail::check_estimates(est, which != Estimator::kNaive);
  detail::check_truth(truth, est.size());
  CompensatedSum acc;
  for (std::size_t k = 0; k < est.size(); ++k) {
    acc.add(pair_bias_term(which, truth.y[k], truth.pi[k], est.y_hat[k],
                           est.pi_hat[k]));
  }
  return loss.delta * std::abs(acc.value()) / static_cast<double>(est.size());
}

/// Var(R_hat); pairs are independent so per-pair variances add.
inline double variance_closed_form(Estimator which, const GroundTruth& truth,
                                   const PairEstimates& est,
                                   const LossSpec& loss) {
  detail::check_zero_one(loss);
  detail::check_estimates(est, which != Estimator::kNaive);
  detail::check_truth(truth, est.size());
  CompensatedSum acc;
  for (std::size_t k = 0; k < est.size(); ++k) {
    acc.add(pair_variance_term(which, truth.y[k], truth.pi[k], est.y_hat[k],
                               est.pi_hat[k]));
  }
  const double n = static_cast<double>(est.size());
  return loss.delta * loss.delta * acc.value() / (n * n);
}

// --- Variance ordering ---------------------------------------------------

struct VarianceOrderingReport {
  double var_naive = 0.0;
  double var_w = 0.0;
  double var_pu = 0.0;
  double var_ap = 0.0;
  bool ap_below_naive = false;
  bool ap_below_w = false;
  bool w_below_pu = false;
  /// Same comparisons allowing equality up to `tolerance` (relative).
  bool weak_ordering = false;
  /// Every pair has y pi (1 - y pi) = 0, so all variances vanish.
  bool degenerate = false;

  bool strict_ordering() const {
    return ap_below_naive && ap_below_w && w_below_pu;
  }
};

/// Checks Var(AP) < Var(naive) and Var(AP) < Var(w) < Var(PU).
///
/// Per pair, AP and w coincide when o_hat = 1 and w and PU coincide when
/// o_hat = 0, so the strict chain needs both predicted classes present.
inline VarianceOrderingReport check_variance_ordering(
    const GroundTruth& truth, const PairEstimates& est, double delta = 1.0,
    double tolerance = 1e-12) {
  const auto loss = LossSpec::zero_one(delta);
  VarianceOrderingReport r;
  r.var_naive = variance_closed_form(Estimator::kNaive, truth, est, loss);
  r.var_w = variance_closed_form(Estimator::kW, truth, est, loss);
  r.var_pu = variance_closed_form(Estimator::kPu, truth, est, loss);
  r.var_ap = variance_closed_form(Estimator::kAp, truth, est, loss);
  r.degenerate = r.var_naive == 0.0;
  r.ap_below_naive = r.var_ap < r.var_naive;
  r.ap_below_w = r.var_ap < r.var_w;
  r.w_below_pu = r.var_w < r.var_pu;
  const auto weak = [tolerance](double a, double b) {
    return a <= b + tolerance * std::max(std::abs(a), std::abs(b));
  };
  r.weak_ordering = weak(r.var_ap, r.var_naive) && weak(r.var_ap, r.var_w) &&
                    weak(r.var_w, r.var_pu);
  return r;
}

// --- Bias conditions -----------------------------------------------------

/// Lower bound on pi_hat for the weighted estimators to beat naive:
/// pi / (2 - pi).
inline double propensity_lower_bound(double pi) { return pi / (2.0 - pi); }

/// Multiplier c such that y_hat < c y keeps the AP bias below naive.
inline double ap_link_multiplier(double y, double pi, double pi_hat) {
  return 2.0 * (1.0 - pi) /
         (1.0 - pi_hat - pi * y + (2.0 - pi) * pi_hat * y);
}

struct BiasConditionReport {
  /// Pairs violating pi/(2-pi) < pi_hat < 1.
  std::vector<std::size_t> propensity_violations;
  /// Pairs violating the AP link condition 0 < y_hat < c y.
  std::vector<std::size_t> link_violations;
  bool propensity_condition = false;  // holds on every pair
  bool ap_condition = false;          // propensity and link conditions hold

  // Biases with positive predictions dropped, over U' = U \ E.
  std::size_t n_negative_pairs = 0;
  double approx_bias_naive = 0.0;
  double approx_bias_w = 0.0;  // equals the PU approximation
  double approx_bias_pu = 0.0;
  double approx_bias_ap = 0.0;

  // Exact closed-form biases over the whole universe.
  double exact_bias_naive = 0.0;
  double exact_bias_w = 0.0;
  double exact_bias_pu = 0.0;
  double exact_bias_ap = 0.0;

  /// Conclusions under the approximation; only meaningful when the
  /// corresponding condition holds.
  bool w_beats_naive = false;
  bool ap_beats_naive = false;
};

inline BiasConditionReport check_bias_conditions(
    const GroundTruth& truth, const PairEstimates& est,
    std::span<const std::uint8_t> o, double delta = 1.0) {
  detail::check_estimates(est, true);
  detail::check_truth(truth, est.size());
  detail::check_observed(o, est);
  BiasConditionReport r;
  CompensatedSum naive;
  CompensatedSum weighted;
  CompensatedSum ap;
  for (std::size_t k = 0; k < est.size(); ++k) {
    const double y = truth.y[k];
    const double pi = truth.pi[k];
    const double yh = est.y_hat[k];
    const double ph = est.pi_hat[k];
    const bool prop_ok = propensity_lower_bound(pi) < ph && ph < 1.0;
    if (!prop_ok) r.propensity_violations.push_back(k);
    if (!(yh > 0.0 && yh < ap_link_multiplier(y, pi, ph) * y)) {
      r.link_violations.push_back(k);
    }
    if (o[k] == 0) {
      ++r.n_negative_pairs;
      naive.add(y * (1.0 - pi));
      weighted.add(y * (1.0 - pi / ph));
      ap.add((1.0 - pi) * y - (1.0 - pi * y) * tau_weight(yh, ph));
    }
  }
  r.propensity_condition = r.propensity_violations.empty();
  r.ap_condition = r.propensity_condition && r.link_violations.empty();
  if (r.n_negative_pairs > 0) {
    const double scale = delta / static_cast<double>(r.n_negative_pairs);
    r.approx_bias_naive = scale * std::abs(naive.value());
    r.approx_bias_w = scale * std::abs(weighted.value());
    r.approx_bias_pu = r.approx_bias_w;
    r.approx_bias_ap = scale * std::abs(ap.value());
  }
  r.w_beats_naive = r.approx_bias_w < r.approx_bias_naive;
  r.ap_beats_naive = r.approx_bias_ap < r.approx_bias_naive;

  const auto loss = LossSpec::zero_one(delta);
  r.exact_bias_naive = bias_closed_form(Estimator::kNaive, truth, est, loss);
  r.exact_bias_w = bias_closed_form(Estimator::kW, truth, est, loss);
  r.exact_bias_pu = bias_closed_form(Estimator::kPu, truth, est, loss);
  r.exact_bias_ap = bias_closed_form(Estimator::kAp, truth, est, loss);
  return r;
}

// --- Capacity ------------------------------------------------------------

/// Empirical Rademacher-style complexity of a finite family of (pi_hat,
/// y_hat) candidates: the mean over `draws` sign vectors sigma of
/// max_f (1/|U|) sum sigma_ij r_f(o_ij).
inline double empirical_rademacher(std::span<const std::uint8_t> o,
                                   std::span<const PairEstimates> family,
                                   Estimator which, std::size_t draws,
                                   std::uint64_t seed,
                                   const LossSpec& loss = LossSpec::log_loss()) {
  if (family.empty()) throw ConfigError("empirical_rademacher: empty family");
  if (draws == 0) throw ConfigError("empirical_rademacher: draws must be >= 1");
  std::vector<std::vector<double>> terms;
  terms.reserve(family.size());
  for (const PairEstimates& f : family) {
    terms.push_back(estimate_risk(which, o, f, loss, true).per_pair_terms);
  }
  const std::size_t n = o.size();
  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> sigma(n);
  CompensatedSum total;
  for (std::size_t m = 0; m < draws; ++m) {
    for (double& s : sigma) s = coin(rng) ? 1.0 : -1.0;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& r : terms) {
      CompensatedSum acc;
      for (std::size_t k = 0; k < n; ++k) acc.add(sigma[k] * r[k]);
      best = std::max(best, acc.value() / static_cast<double>(n));
    }
    total.add(best);
  }
  return total.value() / static_cast<double>(draws);
}

/// Concentration term M = sqrt(4 eta^2 / (eps^2 |U|) log(2 / confidence)) of
/// the generalization bound; eta bounds the loss, eps the propensities.
inline double mcdiarmid_term(double eta, double eps, std::size_t n_pairs,
                             double confidence) {
  return std::sqrt(4.0 * eta * eta / (eps * eps * double(n_pairs)) *
                   std::log(2.0 / confidence));
}

}  // namespace exbias
