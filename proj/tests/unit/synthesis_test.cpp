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

#include "exbias/synthesis.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "gtest/gtest.h"

namespace exbias {
namespace {

SyntheticSpec spec_for(std::size_t n, std::uint64_t seed) {
  SyntheticSpec s;
  s.n = n;
  s.dim = 6;
  s.seed = seed;
  return s;
}

TEST(GenerateWorldTest, PropensityRanges) {
  const auto w = generate_world(spec_for(50, 1));
  ASSERT_EQ(w.pi.size(), 4u);
  EXPECT_GE(w.pi[0], 0.7);
  EXPECT_GE(w.pi[3], 0.7);
  EXPECT_LE(w.pi[1], 0.3);
  EXPECT_LE(w.pi[2], 0.3);
  EXPECT_GE(w.pi[1], 0.1);
}

TEST(GenerateWorldTest, SameSeedSameWorld) {
  const auto a = generate_world(spec_for(30, 8));
  const auto b = generate_world(spec_for(30, 8));
  EXPECT_EQ(a.skeleton, b.skeleton);
  EXPECT_EQ(a.pi, b.pi);
  EXPECT_EQ(a.truth, b.truth);
  const auto c = generate_world(spec_for(30, 9));
  EXPECT_NE(a.truth, c.truth);
}

TEST(GenerateWorldTest, ZeroWeightsGiveHalf) {
  auto s = spec_for(10, 2);
  s.true_w = std::vector<double>(6, 0.0);
  s.true_b = 0.0;
  const auto w = generate_world(s);
  for (double y : w.pair_truth().y) EXPECT_DOUBLE_EQ(y, 0.5);
}

TEST(GenerateWorldTest, CalibratedMeanLinkProbability) {
  const auto w = generate_world(spec_for(80, 3));
  EXPECT_NEAR(mean_of(w.pair_truth().y), 0.2, 1e-6);
}

TEST(GenerateWorldTest, InvalidRangeNamesField) {
  auto s = spec_for(10, 1);
  s.diag_range = Range{0.9, 0.2};
  try {
    s.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("diag_range"), std::string::npos);
  }
}

TEST(SampleOutcomesTest, ZeroExposureGivesNoLinks) {
  auto s = spec_for(20, 4);
  s.pi_table = std::vector<double>(4, 0.0);
  const auto w = generate_world(s);
  Rng rng(1);
  const auto sampled = sample_outcomes(w, rng);
  EXPECT_EQ(sampled.observed.num_edges(), 0u);
  EXPECT_GT(sampled.latent.num_edges(), 0u);
}

TEST(SampleOutcomesTest, FullExposureAndRelevanceGiveCompleteGraph) {
  auto s = spec_for(12, 5);
  s.pi_table = std::vector<double>(4, 1.0);
  s.true_w = std::vector<double>(6, 0.0);
  s.true_b = 800.0;
  const auto w = generate_world(s);
  Rng rng(1);
  EXPECT_EQ(sample_observed(w, rng).num_edges(), 12u * 11u);
}

TEST(SampleOutcomesTest, ObservedIsSubsetOfLatent) {
  const auto w = generate_world(spec_for(40, 6));
  Rng rng(2);
  const auto sampled = sample_outcomes(w, rng);
  for (const auto& e : sampled.observed.edges()) {
    EXPECT_TRUE(sampled.latent.has_edge(e.src, e.dst));
  }
}

TEST(SampleOutcomesTest, TwoBlockObservedRates) {
  // Within-block exposure 0.9, cross-block 0.6, y = 0.8 everywhere.
  SyntheticSpec s;
  s.n = 1000;
  s.num_categories = 2;
  s.dim = 1;
  s.true_w = std::vector<double>{0.0};
  s.true_b = logit(0.8);
  s.pi_table = std::vector<double>{0.9, 0.6, 0.6, 0.9};
  s.seed = 10;
  const auto w = generate_world(s);
  Rng rng(3);
  const Graph g = sample_observed(w, rng);
  double same = 0, same_n = 0, cross = 0, cross_n = 0;
  for (NodePair p : PairUniverse(g)) {
    const bool linked = g.has_edge(p.src, p.dst);
    if (g.category(p.src) == g.category(p.dst)) {
      same += linked;
      ++same_n;
    } else {
      cross += linked;
      ++cross_n;
    }
  }
  const double se_same = std::sqrt(0.72 * 0.28 / same_n);
  const double se_cross = std::sqrt(0.48 * 0.52 / cross_n);
  EXPECT_NEAR(same / same_n, 0.72, 3 * se_same);
  EXPECT_NEAR(cross / cross_n, 0.48, 3 * se_cross);
}

TEST(ExactMomentsTest, Values) {
  const Moments z = exact_pair_moments(0.0, 0.4, [](int o) { return o * 3.0 + 1.0; });
  EXPECT_DOUBLE_EQ(z.mean, 1.0);
  EXPECT_DOUBLE_EQ(z.variance, 0.0);
  const Moments m = exact_pair_moments(0.8, 0.6, [](int o) { return double(o); });
  EXPECT_NEAR(m.mean, 0.48, 1e-15);
  EXPECT_NEAR(m.variance, 0.2496, 1e-15);
}

GroundTruth ten_pair_truth() {
  return GroundTruth{{0.8, 0.3, 0.55, 0.1, 0.9, 0.45, 0.6, 0.2, 0.7, 0.35},
                     {0.6, 0.9, 0.2, 0.5, 0.3, 0.8, 0.4, 0.7, 0.95, 0.25}};
}

TEST(MonteCarloTest, NaiveUnbiasedWithoutExposureBias) {
  GroundTruth t = ten_pair_truth();
  t.pi.assign(t.size(), 1.0);
  const auto est = PairEstimates::without_propensity(t.y);
  const auto d = monte_carlo_risk_distribution(t, est, Estimator::kNaive, 5000, 1);
  const double r = true_risk(t, est, LossSpec::zero_one()).value;
  EXPECT_NEAR(d.mean, r, 4 * d.standard_error());
}

TEST(MonteCarloTest, WeightedUnbiasedWhenMatched) {
  const GroundTruth t = ten_pair_truth();
  const PairEstimates est{t.y, t.pi};
  const auto d = monte_carlo_risk_distribution(t, est, Estimator::kW, 5000, 2);
  const double r = true_risk(t, est, LossSpec::zero_one()).value;
  EXPECT_NEAR(d.mean, r, 4 * d.standard_error());
}

TEST(MonteCarloTest, SampleVarianceMatchesClosedForm) {
  const GroundTruth t = ten_pair_truth();
  const PairEstimates est{{0.3, 0.7, 0.2, 0.6, 0.4, 0.8, 0.1, 0.9, 0.55, 0.45},
                          {0.5, 0.7, 0.4, 0.6, 0.35, 0.9, 0.3, 0.6, 0.8, 0.5}};
  for (Estimator e : {Estimator::kNaive, Estimator::kW, Estimator::kPu, Estimator::kAp}) {
    const auto d = monte_carlo_risk_distribution(t, est, e, 100000, 3);
    const double v = variance_closed_form(e, t, est, LossSpec::zero_one());
    EXPECT_NEAR(d.std * d.std, v, 0.1 * v) << to_string(e);
  }
}

TEST(MonteCarloTest, RejectsTooFewTrials) {
  const GroundTruth t = ten_pair_truth();
  EXPECT_THROW(
      monte_carlo_risk_distribution(t, PairEstimates{t.y, t.pi}, Estimator::kW, 50, 1),
      ConfigError);
}

TEST(WorldFilesTest, RoundTrip) {
  const auto w = generate_world(spec_for(25, 12));
  Rng rng(4);
  const auto sampled = sample_outcomes(w, rng);
  const auto dir = std::filesystem::temp_directory_path() / "exbias_world_roundtrip";
  std::filesystem::remove_all(dir);
  save_world(dir, w, sampled);
  for (const char* f : {"nodes.jsonl", "edges.tsv", "true_edges.tsv", "pi.csv", "truth.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  const LoadedData back = load_data_dir(dir);
  EXPECT_EQ(back.observed, sampled.observed);
  ASSERT_TRUE(back.latent.has_value());
  EXPECT_EQ(*back.latent, sampled.latent);
  ASSERT_TRUE(back.world.has_value());
  EXPECT_EQ(back.world->pi, w.pi);
  EXPECT_EQ(back.world->truth, w.truth);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_data_dir(dir), DataError);
}

}  // namespace
}  // namespace exbias
