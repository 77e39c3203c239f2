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

#include "exbias/training.hpp"

#include <cmath>
#include <vector>

#include "exbias/synthesis.hpp"
#include "gtest/gtest.h"

namespace exbias {
namespace {

TEST(NegativeWeightTest, Arithmetic) {
  EXPECT_DOUBLE_EQ(negative_weight(90, 45, 1), 1.0);
  EXPECT_DOUBLE_EQ(negative_weight(90, 9, 3), 3.0);
}

GroundTruthWorld small_world(std::uint64_t seed, std::size_t n = 40) {
  SyntheticSpec s;
  s.n = n;
  s.dim = 4;
  s.seed = seed;
  return generate_world(s);
}

TEST(SampleBatchTest, DeterministicAndWeighted) {
  const auto world = small_world(1);
  Rng r0(3);
  const Graph g = sample_observed(world, r0);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.negatives_per_positive = 3;
  Rng a(11);
  Rng b(11);
  const auto x = sample_batch(g, cfg, a);
  const auto y = sample_batch(g, cfg, b);
  ASSERT_EQ(x.size(), y.size());
  const double w = negative_weight(PairUniverse(g).size(), g.num_edges(), 3);
  for (std::size_t k = 0; k < x.size(); ++k) {
    EXPECT_EQ(x[k].src, y[k].src);
    EXPECT_EQ(x[k].dst, y[k].dst);
    EXPECT_EQ(static_cast<int>(x[k].o), g.has_edge(x[k].src, x[k].dst) ? 1 : 0);
    EXPECT_DOUBLE_EQ(x[k].weight, x[k].o ? 1.0 : w);
  }
  EXPECT_EQ(x.size(), 2u * 4u);
}

TEST(SampleBatchTest, WeightedMeanIsUnbiasedForUniverseMean) {
  // The weighted batch mean of the observed label equals |E| / |U| in
  // expectation: (n_pos * 1) / (n_pos + n_pos k w) per batch, exactly.
  const auto world = small_world(2);
  Rng r0(5);
  const Graph g = sample_observed(world, r0);
  TrainConfig cfg;
  cfg.batch_size = 6;
  cfg.negatives_per_positive = 2;
  Rng rng(1);
  const auto batch = sample_batch(g, cfg, rng);
  double num = 0.0;
  double den = 0.0;
  for (const auto& it : batch) {
    num += it.weight * it.o;
    den += it.weight;
  }
  EXPECT_NEAR(num / den,
              static_cast<double>(g.num_edges()) / PairUniverse(g).size(), 1e-12);
}

TEST(SampleBatchTest, EmptyEdgeSet) {
  const auto world = small_world(3);
  TrainConfig cfg;
  Rng rng(1);
  EXPECT_THROW(sample_batch(world.skeleton, cfg, rng), DataError);
}

TEST(AdamTest, ZeroGradientLeavesParameters) {
  std::vector<double> x = {1.0, -2.0};
  std::vector<double> g = {0.0, 0.0};
  AdamState s(2);
  adam_step(x, g, s, 0.1);
  EXPECT_DOUBLE_EQ(x[0], 1.0);
  EXPECT_DOUBLE_EQ(x[1], -2.0);
}

TEST(AdamTest, ConstantGradientStepApproachesLearningRate) {
  std::vector<double> x = {0.0};
  std::vector<double> g = {3.7};
  AdamState s(1);
  double last = 0.0;
  for (int t = 0; t < 5000; ++t) {
    const double before = x[0];
    adam_step(x, g, s, 0.01);
    last = before - x[0];
  }
  EXPECT_NEAR(last, 0.01, 1e-6);
}

TEST(AdamTest, StateRoundTripsExactly) {
  std::vector<double> x = {0.3, 0.1, -0.4};
  std::vector<double> g = {0.123456789, -1e-7, 42.0};
  AdamState s(3);
  for (int t = 0; t < 3; ++t) adam_step(x, g, s, 0.01);
  const AdamState back = AdamState::from_json(nlohmann::json::parse(s.to_json().dump()));
  EXPECT_EQ(back, s);
}

TEST(TrainConfigTest, EstimatorMapping) {
  EXPECT_EQ(TrainConfig::from_json({{"lambda_r", 0.0}}).objective, Objective::kMle);
  EXPECT_EQ(TrainConfig::from_json({{"estimator", "none"}}).objective, Objective::kNoProp);
  EXPECT_EQ(TrainConfig::from_json({{"estimator", "ap"}}).objective, Objective::kAp);
  const TrainConfig d;
  EXPECT_DOUBLE_EQ(d.lambda_l, 1.0);
  EXPECT_DOUBLE_EQ(d.lambda_r, 10.0);
  EXPECT_DOUBLE_EQ(d.learning_rate, 1e-4);
  EXPECT_EQ(d.batch_size, 32u);
}

TEST(TrainConfigTest, InvalidFieldsNamed) {
  try {
    TrainConfig::from_json({{"learning_rate", -1.0}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
  EXPECT_THROW(TrainConfig::from_json({{"batch_size", "big"}}), ConfigError);
}

TEST(TrainTest, ZeroEpochsReturnsInitialModels) {
  const auto world = small_world(4);
  Rng r0(1);
  const Graph g = sample_observed(world, r0);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 9;
  const auto rep = train(g, cfg);
  Rng rng(9);
  LinkModel m;
  PropensityModel p;
  init_models(g.feature_dim(), g.num_categories(), cfg.init_scale, rng, m, p);
  EXPECT_EQ(rep.link, m);
  EXPECT_EQ(rep.propensity, p);
  EXPECT_EQ(rep.epochs_run, 0u);
}

TEST(TrainTest, InitialModelReplacesRandomInit) {
  const auto world = small_world(4);
  Rng r0(1);
  const Graph g = sample_observed(world, r0);
  TrainConfig cfg;
  cfg.epochs = 0;
  Checkpoint init{LinkModel{std::vector<double>(g.feature_dim(), 0.25), -1.0},
                  PropensityModel(g.num_categories(), 0.5)};
  const auto rep = train(g, cfg, &init);
  EXPECT_EQ(rep.link, init.link);
  EXPECT_EQ(rep.propensity, init.propensity);
  Checkpoint wrong{LinkModel{{0.0}, 0.0}, PropensityModel(g.num_categories())};
  EXPECT_THROW(train(g, cfg, &wrong), DataError);
}

TEST(TrainTest, LikelihoodDescends) {
  const auto world = small_world(5, 60);
  Rng r0(2);
  const Graph g = sample_observed(world, r0);
  TrainConfig cfg;
  cfg.objective = Objective::kMle;
  cfg.lambda_r = 0.0;
  cfg.learning_rate = 0.02;
  cfg.epochs = 30;
  cfg.seed = 1;
  TrainConfig none = cfg;
  none.epochs = 0;
  const PairUniverse u(g);
  const LossConfig lc = cfg.loss_config();
  const auto init = train(g, none);
  const auto fit = train(g, cfg);
  EXPECT_LT(mean_objective(fit.link, fit.propensity, g, u, lc),
            mean_objective(init.link, init.propensity, g, u, lc));
}

TEST(TrainTest, DeterministicUnderSeed) {
  const auto world = small_world(6);
  Rng r0(3);
  const Graph g = sample_observed(world, r0);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 21;
  const auto a = train(g, cfg);
  const auto b = train(g, cfg);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
}

TEST(TrainTest, PackRoundTrip) {
  LinkModel m{{1.0, 2.0}, 3.0};
  PropensityModel p(2);
  p.logits = {4.0, 5.0, 6.0, 7.0};
  const auto x = pack_parameters(m, p);
  EXPECT_EQ(x, (std::vector<double>{1, 2, 3, 4, 5, 6, 7}));
  LinkModel m2{{0, 0}, 0};
  PropensityModel p2(2);
  unpack_parameters(x, m2, p2);
  EXPECT_EQ(m2, m);
  EXPECT_EQ(p2, p);
}

}  // namespace
}  // namespace exbias
