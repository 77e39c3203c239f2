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

// Oracle checks for the estimator closed forms and the feedback-loop
// asymptotics. Each check compares library formulas against an independent
// computation (outcome enumeration or simulation).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "exbias/common.hpp"
#include "exbias/estimators.hpp"
#include "exbias/feedback.hpp"
#include "exbias/synthesis.hpp"

namespace exbias {

/// Formulas under test. Defaults are the library's; tests swap in corrupted
/// versions to confirm that the corresponding check fails.
struct ClosedForms {
  std::function<double(Estimator, double, double, double, double)> bias =
      pair_bias_term;
  std::function<double(Estimator, double, double, double, double)> variance =
      pair_variance_term;
  std::function<double(double, std::size_t)> asymptotic = asymptotic_kappa;
};

struct ValidationOptions {
  std::uint64_t seed = 0;
  std::size_t pair_configs = 1000;      // per-pair closed-form checks
  std::size_t ordering_configs = 1000;  // multi-pair variance ordering
  std::size_t pairs_per_config = 20;
  std::size_t bias_configs = 500;
  double tolerance = 1e-12;
  std::size_t skew_trials = 200;
  std::size_t kappa_seeds = 50;
};

struct CheckResult {
  std::string id;
  bool passed = false;
  std::string detail;
};

struct ValidationReport {
  std::vector<CheckResult> checks;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const CheckResult& c) { return c.passed; });
  }
  const CheckResult* find(std::string_view id) const {
    for (const auto& c : checks) {
      if (c.id == id) return &c;
    }
    return nullptr;
  }
  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : checks) {
      arr.push_back({{"id", c.id}, {"passed", c.passed}, {"detail", c.detail}});
    }
    return nlohmann::json{{"all_passed", all_passed()}, {"checks", arr}};
  }
};

/// One random per-pair configuration (y, pi, y_hat, pi_hat). o_hat follows
/// from y_hat, and half of the draws land on each side of the threshold.
struct PairConfig {
  double y, pi, y_hat, pi_hat;
};

inline PairConfig random_pair_config(Rng& rng, double lo = 0.05,
                                     double hi = 0.95) {
  std::uniform_real_distribution<double> u(lo, hi);
  PairConfig c{};
  c.y = u(rng);
  c.pi = u(rng);
  c.y_hat = u(rng);
  c.pi_hat = u(rng);
  return c;
}

/// Closed-form bias and variance of one estimator against exhaustive
/// enumeration of the four (o', a) outcomes. Returns the worst error.
inline double closed_form_error(Estimator which, std::size_t configs,
                                std::uint64_t seed, const ClosedForms& forms) {
  Rng rng(seed);
  const auto loss = LossSpec::zero_one();
  double worst = 0.0;
  for (std::size_t k = 0; k < configs; ++k) {
    const PairConfig c = random_pair_config(rng);
    const double pi_hat = c.pi_hat;
    const Moments m = exact_pair_moments(c.y, c.pi, [&](int o) {
      return pair_term(which, o, c.y_hat, pi_hat, loss);
    });
    const double truth = true_pair_term(c.y, c.y_hat, loss);
    const double bias_err =
        std::abs(forms.bias(which, c.y, c.pi, c.y_hat, pi_hat) - (truth - m.mean));
    const double var_err =
        std::abs(forms.variance(which, c.y, c.pi, c.y_hat, pi_hat) - m.variance);
    worst = std::max({worst, bias_err, var_err});
  }
  return worst;
}

namespace detail {

inline std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

inline double sum_terms(const std::function<double(Estimator, double, double,
                                                   double, double)>& f,
                        Estimator which, const GroundTruth& t,
                        const PairEstimates& e) {
  CompensatedSum acc;
  for (std::size_t k = 0; k < e.size(); ++k) {
    acc.add(f(which, t.y[k], t.pi[k], e.y_hat[k], e.pi_hat[k]));
  }
  return acc.value();
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace detail

/// Counts configurations violating Var(AP) < Var(naive), Var(AP) < Var(w) <
/// Var(PU) when variances come from `forms`.
inline std::size_t variance_ordering_violations(std::size_t configs,
                                                std::size_t pairs,
                                                std::uint64_t seed,
                                                const ClosedForms& forms) {
  Rng rng(seed);
  std::size_t bad = 0;
  for (std::size_t c = 0; c < configs; ++c) {
    GroundTruth t;
    PairEstimates e;
    for (std::size_t k = 0; k < pairs; ++k) {
      const PairConfig p = random_pair_config(rng);
      t.y.push_back(p.y);
      t.pi.push_back(p.pi);
      e.y_hat.push_back(p.y_hat);
      e.pi_hat.push_back(p.pi_hat);
    }
    const double vn = detail::sum_terms(forms.variance, Estimator::kNaive, t, e);
    const double vw = detail::sum_terms(forms.variance, Estimator::kW, t, e);
    const double vp = detail::sum_terms(forms.variance, Estimator::kPu, t, e);
    const double va = detail::sum_terms(forms.variance, Estimator::kAp, t, e);
    if (!(va < vn && va < vw && vw < vp)) ++bad;
  }
  return bad;
}

struct BiasConditionTally {
  std::size_t configs = 0;
  std::size_t propensity_holds = 0;
  std::size_t w_violations = 0;  // B(w) = B(PU) < B(naive) failed
  std::size_t ap_holds = 0;
  std::size_t ap_violations = 0;
};

/// Random configurations whose estimated propensities satisfy
/// pi/(2-pi) < pi_hat < 1 (and, for half of them, the AP link condition),
/// with observations sampled from the truth.
inline BiasConditionTally bias_condition_tally(std::size_t configs,
                                               std::size_t pairs,
                                               std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BiasConditionTally tally;
  tally.configs = configs;
  for (std::size_t c = 0; c < configs; ++c) {
    GroundTruth t;
    PairEstimates e;
    std::vector<std::uint8_t> o;
    const bool ap_case = c % 2 == 1;
    for (std::size_t k = 0; k < pairs; ++k) {
      const double y = 0.05 + 0.9 * u(rng);
      const double pi = 0.05 + 0.9 * u(rng);
      const double lb = propensity_lower_bound(pi);
      const double pi_hat = lb + (1.0 - lb) * (0.01 + 0.98 * u(rng));
      double y_hat = 0.05 + 0.9 * u(rng);
      if (ap_case) {
        const double cap = std::min(0.5, ap_link_multiplier(y, pi, pi_hat) * y);
        y_hat = cap * (0.01 + 0.98 * u(rng));
      }
      t.y.push_back(y);
      t.pi.push_back(pi);
      e.y_hat.push_back(y_hat);
      e.pi_hat.push_back(pi_hat);
      o.push_back(bernoulli(rng, y * pi) ? 1 : 0);
    }
    if (std::count(o.begin(), o.end(), 0) == 0) o[0] = 0;
    const auto r = check_bias_conditions(t, e, o);
    if (r.propensity_condition) {
      ++tally.propensity_holds;
      if (!(r.approx_bias_w == r.approx_bias_pu &&
            r.approx_bias_w < r.approx_bias_naive)) {
        ++tally.w_violations;
      }
    }
    if (r.ap_condition) {
      ++tally.ap_holds;
      if (!(r.approx_bias_ap < r.approx_bias_naive)) ++tally.ap_violations;
    }
  }
  return tally;
}

/// Frequency of the skew event after one naive step from the uniform
/// simplex, over `trials` seeded runs.
inline double skew_event_frequency(std::span<const double> q, std::uint64_t n,
                                   std::size_t trials, std::uint64_t seed) {
  std::size_t hits = 0;
  for (std::size_t s = 0; s < trials; ++s) {
    FeedbackConfig cfg;
    cfg.q.assign(q.begin(), q.end());
    cfg.n = n;
    cfg.steps = 1;
    cfg.seed = seed + s;
    const Trajectory tr = run_trajectory(cfg);
    hits += skew_event(tr.states[0], tr.states[1], q) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

/// Median over seeds of kappa_12 at each t = 0..steps.
inline std::vector<double> median_pairwise_kappa(const FeedbackConfig& base,
                                                 std::size_t seeds,
                                                 std::uint64_t seed) {
  std::vector<std::vector<double>> by_t(base.steps + 1);
  for (std::size_t s = 0; s < seeds; ++s) {
    FeedbackConfig cfg = base;
    cfg.seed = seed + s;
    const Trajectory tr = run_trajectory(cfg);
    for (std::size_t t = 0; t < tr.states.size(); ++t) {
      by_t[t].push_back(tr.states[t].pairwise(0, 1).value_or(0.0));
    }
  }
  std::vector<double> out;
  for (auto& v : by_t) out.push_back(detail::median(std::move(v)));
  return out;
}

inline ValidationReport run_validation(const ValidationOptions& opts = {},
                                       const ClosedForms& forms = {}) {
  ValidationReport rep;
  const Estimator kinds[4] = {Estimator::kNaive, Estimator::kW,
                              Estimator::kPu, Estimator::kAp};
  for (int l = 0; l < 4; ++l) {
    const double err =
        closed_form_error(kinds[l], opts.pair_configs, opts.seed + l, forms);
    const std::string name(to_string(kinds[l]));
    rep.checks.push_back({name + "_closed_forms", err <= opts.tolerance,
                          name + " closed forms vs enumeration, max error " +
                              detail::fmt(err)});
  }

  const std::size_t bad = variance_ordering_violations(
      opts.ordering_configs, opts.pairs_per_config, opts.seed + 11, forms);
  rep.checks.push_back({"variance_ordering", bad == 0,
                        "variance ordering violations: " + std::to_string(bad) +
                            " of " + std::to_string(opts.ordering_configs)});

  const auto tally =
      bias_condition_tally(opts.bias_configs, opts.pairs_per_config, opts.seed + 13);
  rep.checks.push_back(
      {"bias_conditions",
       tally.w_violations == 0 && tally.ap_violations == 0 &&
           tally.propensity_holds > 0 && tally.ap_holds > 0,
       "propensity condition held in " + std::to_string(tally.propensity_holds) +
           " configs (" + std::to_string(tally.w_violations) +
           " violations); link condition held in " +
           std::to_string(tally.ap_holds) + " (" +
           std::to_string(tally.ap_violations) + " violations)"});

  const std::vector<double> q3 = {0.3, 0.5, 0.7};
  std::vector<double> freq;
  for (std::uint64_t n : {100ULL, 1000ULL, 10000ULL}) {
    freq.push_back(skew_event_frequency(q3, n, opts.skew_trials, opts.seed + 17));
  }
  const bool trend = freq[0] <= freq[1] && freq[1] <= freq[2] && freq[2] > 0.99;
  rep.checks.push_back({"skew_trend", trend,
                        "skew frequency at n=1e2,1e3,1e4: " + detail::fmt(freq[0]) +
                            ", " + detail::fmt(freq[1]) + ", " +
                            detail::fmt(freq[2])});

  FeedbackConfig fc;
  fc.q = {0.8, 0.4};
  fc.n = 100000;
  fc.steps = 5;
  const auto med = median_pairwise_kappa(fc, opts.kappa_seeds, opts.seed + 19);
  const double c = fc.q[0] / fc.q[1];
  const double e1 = std::abs(med[1] - forms.asymptotic(c, 1));
  const double e5 = std::abs(med[5] - forms.asymptotic(c, 5));
  rep.checks.push_back({"kappa_asymptote", e1 <= 0.02 && e5 <= 0.02,
                        "median kappa_12 at t=1: " + detail::fmt(med[1]) +
                            ", t=5: " + detail::fmt(med[5])});
  return rep;
}

}  // namespace exbias
