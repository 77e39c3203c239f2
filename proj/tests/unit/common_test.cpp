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

#include "exbias/common.hpp"

#include <cmath>
#include <vector>

#include "gtest/gtest.h"

namespace exbias {
namespace {

TEST(SigmoidTest, KnownValues) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(1.0), 0.7310585786300049, 1e-15);
  EXPECT_NEAR(sigmoid(-1.0), 1.0 - 0.7310585786300049, 1e-15);
}

TEST(SigmoidTest, StableAtExtremes) {
  EXPECT_EQ(sigmoid(800.0), 1.0);
  EXPECT_GE(sigmoid(-800.0), 0.0);
  EXPECT_TRUE(std::isfinite(sigmoid(-800.0)));
  EXPECT_NEAR(logit(sigmoid(2.5)), 2.5, 1e-12);
}

TEST(ClampTest, LogArgument) {
  EXPECT_DOUBLE_EQ(clamp_log_arg(0.0), kLogClamp);
  EXPECT_DOUBLE_EQ(clamp_log_arg(1.0), 1.0 - kLogClamp);
  EXPECT_DOUBLE_EQ(clamp_log_arg(0.3), 0.3);
}

TEST(CompensatedSumTest, RecoversSmallTerms) {
  std::vector<double> xs = {1e16, 1.0, -1e16, 1.0};
  EXPECT_DOUBLE_EQ(compensated_sum(xs), 2.0);
}

TEST(MomentsTest, MeanAndUnbiasedVariance) {
  std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(mean_of(xs), 2.5);
  EXPECT_NEAR(sample_variance(xs), 5.0 / 3.0, 1e-15);
}

TEST(BernoulliTest, EmpiricalRate) {
  Rng rng(7);
  int hits = 0;
  for (int i = 0; i < 100000; ++i) hits += bernoulli(rng, 0.3);
  EXPECT_NEAR(hits / 100000.0, 0.3, 0.006);
}

}  // namespace
}  // namespace exbias
