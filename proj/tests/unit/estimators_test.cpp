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

#include "exbias/estimators.hpp"

#include <cmath>
#include <vector>

#include "exbias/synthesis.hpp"
#include "gtest/gtest.h"

namespace exbias {
namespace {

const LossSpec kZeroOne = LossSpec::zero_one();

PairEstimates one_pair(double y_hat, double pi_hat) {
  return PairEstimates{{y_hat}, {pi_hat}};
}

// True risk.

TEST(TrueRiskTest, AllZeroLinksAllNegativePredictions) {
  GroundTruth t{{0.0, 0.0}, {0.5, 0.5}};
  EXPECT_DOUBLE_EQ(true_risk(t, PairEstimates{{0.1, 0.2}, {1, 1}}, kZeroOne).value, 0.0);
}

TEST(TrueRiskTest, SinglePair) {
  GroundTruth t{{0.8}, {0.5}};
  EXPECT_NEAR(true_risk(t, one_pair(0.2, 1.0), kZeroOne).value, 0.8, 1e-15);
  EXPECT_NEAR(true_risk(t, one_pair(0.9, 1.0), kZeroOne).value, 0.2, 1e-15);
}

// Naive.

TEST(NaiveRiskTest, PerfectAgreementIsZero) {
  std::vector<std::uint8_t> o = {1, 0, 1};
  auto est = PairEstimates::without_propensity({0.9, 0.1, 0.7});
  EXPECT_DOUBLE_EQ(risk_naive(o, est, kZeroOne).value, 0.0);
}

TEST(NaiveRiskTest, Arithmetic) {
  std::vector<std::uint8_t> one = {1};
  EXPECT_DOUBLE_EQ(risk_naive(one, PairEstimates::without_propensity({0.1}), kZeroOne).value, 1.0);
  std::vector<std::uint8_t> two = {1, 0};
  EXPECT_DOUBLE_EQ(
      risk_naive(two, PairEstimates::without_propensity({0.1, 0.2}), kZeroOne).value, 0.5);
}

// Weighted.

TEST(WeightedRiskTest, ObservedLinkIsUpweighted) {
  EXPECT_DOUBLE_EQ(pair_term(Estimator::kW, 1, 0.2, 0.8, kZeroOne), 1.25);
}

TEST(WeightedRiskTest, ConfidentPositiveOnUnobservedPairCostsNothing) {
  // psi vanishes as y_hat -> 1, whatever o_hat is.
  EXPECT_DOUBLE_EQ(psi_weight(1.0, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(pair_term(Estimator::kW, 0, 1.0, 0.5, kZeroOne), 0.0);
  std::vector<std::uint8_t> o = {0, 0, 1};
  PairEstimates est{{1.0, 1.0, 1.0}, {0.5, 0.5, 0.5}};
  EXPECT_DOUBLE_EQ(risk_w(o, est, kZeroOne).value, 0.0);
}

TEST(WeightedRiskTest, NegativeAgreementIsZero) {
  EXPECT_DOUBLE_EQ(pair_term(Estimator::kW, 0, 0.3, 0.5, kZeroOne), 0.0);
}

// PU.

TEST(PuRiskTest, NegativeTerm) {
  EXPECT_DOUBLE_EQ(pair_term(Estimator::kPu, 1, 0.9, 0.5, kZeroOne), -1.0);
  EXPECT_DOUBLE_EQ(pair_term(Estimator::kPu, 0, 0.2, 0.5, kZeroOne), 0.0);
}

TEST(PuRiskTest, UnitPropensityReducesToNaive) {
  std::vector<std::uint8_t> o = {1, 0, 1, 0};
  PairEstimates est{{0.6, 0.7, 0.8, 0.9}, {1, 1, 1, 1}};
  EXPECT_DOUBLE_EQ(risk_pu(o, est, kZeroOne).value, risk_naive(o, est, kZeroOne).value);
  std::vector<std::uint8_t> all = {1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(risk_pu(all, est, kZeroOne).value, 0.0);
}

// AP.

TEST(ApRiskTest, Weights) {
  EXPECT_NEAR(psi_weight(0.5, 0.5), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(tau_weight(0.5, 0.5), 1.0 / 3.0, 1e-15);
  // y_hat = 0.5 thresholds to 1, so the unobserved pair pays delta(0, 1)
  // under psi and nothing under tau.
  EXPECT_NEAR(pair_term(Estimator::kAp, 0, 0.5, 0.5, kZeroOne), 2.0 / 3.0, 1e-15);
  // Just below the threshold the roles swap and the term is tau.
  const double yh = std::nextafter(0.5, 0.0);
  EXPECT_NEAR(pair_term(Estimator::kAp, 0, yh, 0.5, kZeroOne), 1.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(pair_term(Estimator::kAp, 1, 0.7, 0.5, kZeroOne), 0.0);
}

TEST(ApRiskTest, UnitPropensityReducesToNaive) {
  for (double yh : {0.1, 0.4, 0.6, 0.95}) {
    EXPECT_DOUBLE_EQ(tau_weight(yh, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(psi_weight(yh, 1.0), 1.0);
    for (int o : {0, 1}) {
      EXPECT_DOUBLE_EQ(pair_term(Estimator::kAp, o, yh, 1.0, kZeroOne),
                       pair_term(Estimator::kNaive, o, yh, 1.0, kZeroOne));
    }
  }
}

TEST(EstimatorInputTest, RejectsInvalidPropensity) {
  std::vector<std::uint8_t> o = {1};
  EXPECT_THROW(risk_w(o, one_pair(0.5, 0.0), kZeroOne), DataError);
  EXPECT_THROW(risk_w(o, one_pair(0.5, 1.5), kZeroOne), DataError);
  std::vector<std::uint8_t> bad = {2};
  EXPECT_THROW(risk_naive(bad, one_pair(0.5, 1.0), kZeroOne), DataError);
  EXPECT_THROW(parse_estimator("ipw"), ConfigError);
}

// Closed-form bias and variance.

TEST(BiasClosedFormTest, NaiveValues) {
  GroundTruth full{{0.8, 0.3}, {1.0, 1.0}};
  PairEstimates est{{0.2, 0.7}, {1.0, 1.0}};
  EXPECT_DOUBLE_EQ(bias_closed_form(Estimator::kNaive, full, est, kZeroOne), 0.0);
  GroundTruth t{{0.8}, {0.6}};
  EXPECT_NEAR(bias_closed_form(Estimator::kNaive, t, one_pair(0.2, 1.0), kZeroOne), 0.32,
              1e-15);
}

TEST(BiasClosedFormTest, WeightedUnbiasedWhenMatched) {
  GroundTruth t{{0.8, 0.3, 0.55}, {0.6, 0.9, 0.2}};
  PairEstimates est{t.y, t.pi};
  EXPECT_NEAR(bias_closed_form(Estimator::kW, t, est, kZeroOne), 0.0, 1e-15);
  EXPECT_NEAR(bias_closed_form(Estimator::kAp, t, est, kZeroOne), 0.0, 1e-15);
  EXPECT_THROW(bias_closed_form(Estimator::kW, t, est, LossSpec::log_loss()), ConfigError);
}

TEST(VarianceClosedFormTest, Values) {
  GroundTruth zero{{0.0}, {0.7}};
  for (Estimator e : {Estimator::kNaive, Estimator::kW, Estimator::kPu, Estimator::kAp}) {
    EXPECT_DOUBLE_EQ(variance_closed_form(e, zero, one_pair(0.3, 0.5), kZeroOne), 0.0);
  }
  GroundTruth t{{0.8}, {0.5}};
  EXPECT_NEAR(variance_closed_form(Estimator::kNaive, t, one_pair(0.2, 0.5), kZeroOne), 0.24,
              1e-15);
  const double naive = variance_closed_form(Estimator::kNaive, t, one_pair(0.9, 0.5), kZeroOne);
  EXPECT_NEAR(variance_closed_form(Estimator::kPu, t, one_pair(0.9, 0.5), kZeroOne),
              naive / 0.25, 1e-14);
}

TEST(ClosedFormOracleTest, MatchesEnumeration) {
  Rng rng(123);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int k = 0; k < 1000; ++k) {
    const double y = u(rng), pi = u(rng), yh = u(rng), ph = u(rng);
    for (Estimator e : {Estimator::kNaive, Estimator::kW, Estimator::kPu, Estimator::kAp}) {
      const Moments m = exact_pair_moments(
          y, pi, [&](int o) { return pair_term(e, o, yh, ph, kZeroOne); });
      const double truth = true_pair_term(y, yh, kZeroOne);
      EXPECT_NEAR(pair_bias_term(e, y, pi, yh, ph), truth - m.mean, 1e-12);
      EXPECT_NEAR(pair_variance_term(e, y, pi, yh, ph), m.variance, 1e-12);
    }
  }
}

TEST(ClosedFormOracleTest, DeltaScaling) {
  GroundTruth t{{0.8, 0.4}, {0.6, 0.3}};
  PairEstimates est{{0.2, 0.7}, {0.5, 0.4}};
  for (Estimator e : {Estimator::kNaive, Estimator::kW, Estimator::kPu, Estimator::kAp}) {
    EXPECT_NEAR(bias_closed_form(e, t, est, LossSpec::zero_one(3.0)),
                3.0 * bias_closed_form(e, t, est, kZeroOne), 1e-14);
    EXPECT_NEAR(variance_closed_form(e, t, est, LossSpec::zero_one(3.0)),
                9.0 * variance_closed_form(e, t, est, kZeroOne), 1e-14);
  }
}

// Variance ordering.

TEST(VarianceOrderingTest, RandomConfigurations) {
  Rng rng(99);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int c = 0; c < 1000; ++c) {
    GroundTruth t;
    PairEstimates est;
    for (int k = 0; k < 20; ++k) {
      t.y.push_back(u(rng));
      t.pi.push_back(u(rng));
      est.y_hat.push_back(u(rng));
      est.pi_hat.push_back(u(rng));
    }
    const auto r = check_variance_ordering(t, est);
    ASSERT_TRUE(r.strict_ordering()) << "configuration " << c;
  }
}

TEST(VarianceOrderingTest, UnitPropensityApproachesEquality) {
  GroundTruth t{{0.4, 0.7}, {0.5, 0.8}};
  PairEstimates est{{0.3, 0.8}, {1.0, 1.0}};
  const auto r = check_variance_ordering(t, est);
  EXPECT_FALSE(r.strict_ordering());
  EXPECT_TRUE(r.weak_ordering);
}

TEST(VarianceOrderingTest, DegenerateWhenNoLinks) {
  GroundTruth t{{0.0}, {0.5}};
  const auto r = check_variance_ordering(t, one_pair(0.3, 0.5));
  EXPECT_TRUE(r.degenerate);
}

// Bias conditions.

TEST(BiasConditionTest, PropensityThreshold) {
  EXPECT_NEAR(propensity_lower_bound(0.6), 0.6 / 1.4, 1e-15);
  GroundTruth t{{0.5}, {0.6}};
  std::vector<std::uint8_t> o = {0};
  EXPECT_TRUE(check_bias_conditions(t, one_pair(0.2, 0.5), o).propensity_condition);
  EXPECT_TRUE(check_bias_conditions(t, one_pair(0.2, 0.6), o).propensity_condition);
  const auto r = check_bias_conditions(t, one_pair(0.2, 0.3), o);
  EXPECT_FALSE(r.propensity_condition);
  ASSERT_EQ(r.propensity_violations.size(), 1u);
  EXPECT_EQ(r.propensity_violations[0], 0u);
}

TEST(BiasConditionTest, WeightedBeatsNaiveUnderCondition) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int c = 0; c < 200; ++c) {
    GroundTruth t;
    PairEstimates est;
    std::vector<std::uint8_t> o;
    for (int k = 0; k < 15; ++k) {
      const double y = 0.05 + 0.9 * u(rng);
      const double pi = 0.05 + 0.9 * u(rng);
      const double lb = propensity_lower_bound(pi);
      t.y.push_back(y);
      t.pi.push_back(pi);
      est.pi_hat.push_back(lb + (1.0 - lb) * (0.01 + 0.98 * u(rng)));
      est.y_hat.push_back(0.05 + 0.4 * u(rng));
      o.push_back(k % 3 == 0);
    }
    const auto r = check_bias_conditions(t, est, o);
    ASSERT_TRUE(r.propensity_condition);
    EXPECT_EQ(r.approx_bias_w, r.approx_bias_pu);
    EXPECT_LT(r.approx_bias_w, r.approx_bias_naive);
  }
}

// Capacity.

TEST(RademacherTest, ZeroLossFamily) {
  // Perfect predictions under zero-one loss give r = 0 for every pair.
  std::vector<std::uint8_t> o = {1, 0, 1, 0};
  PairEstimates f{{0.9, 0.1, 0.9, 0.1}, {1, 1, 1, 1}};
  std::vector<PairEstimates> family = {f};
  EXPECT_DOUBLE_EQ(empirical_rademacher(o, family, Estimator::kNaive, 50, 1, kZeroOne), 0.0);
}

TEST(RademacherTest, DuplicatesDoNotChangeResult) {
  std::vector<std::uint8_t> o = {1, 0, 1, 0, 0, 1};
  PairEstimates a{{0.9, 0.2, 0.6, 0.4, 0.3, 0.7}, {0.5, 0.6, 0.7, 0.8, 0.9, 0.5}};
  PairEstimates b{{0.1, 0.8, 0.3, 0.5, 0.6, 0.2}, {0.9, 0.6, 0.5, 0.8, 0.4, 0.5}};
  std::vector<PairEstimates> fam = {a, b};
  std::vector<PairEstimates> dup = {a, b, a, b, b};
  EXPECT_DOUBLE_EQ(empirical_rademacher(o, fam, Estimator::kW, 200, 4),
                   empirical_rademacher(o, dup, Estimator::kW, 200, 4));
}

TEST(RademacherTest, SingletonMatchesDirectMonteCarlo) {
  // For one function the sup is trivial: E[(1/n) sum sigma r] = 0. A
  // separate Monte Carlo of the same quantity agrees within 3 std errors.
  std::vector<std::uint8_t> o = {1, 0, 1, 0, 0, 1, 0, 0};
  PairEstimates f{{0.9, 0.2, 0.6, 0.4, 0.3, 0.7, 0.5, 0.1},
                  {0.5, 0.6, 0.7, 0.8, 0.9, 0.5, 0.3, 0.4}};
  const auto terms = estimate_risk(Estimator::kW, o, f, LossSpec::log_loss(), true).per_pair_terms;
  Rng rng(77);
  std::vector<double> draws;
  for (int m = 0; m < 4000; ++m) {
    double s = 0.0;
    for (double r : terms) s += (bernoulli(rng, 0.5) ? 1.0 : -1.0) * r;
    draws.push_back(s / terms.size());
  }
  const double se = std::sqrt(sample_variance(draws) / draws.size());
  std::vector<PairEstimates> fam = {f};
  const double est = empirical_rademacher(o, fam, Estimator::kW, 4000, 9);
  EXPECT_NEAR(est, mean_of(draws), 3.0 * std::sqrt(2.0) * se);
  EXPECT_THROW(empirical_rademacher(o, {}, Estimator::kW, 10, 1), ConfigError);
}

}  // namespace
}  // namespace exbias
