// Copyright 2026 The Realign Authors
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

#include <gtest/gtest.h>

#include "realign/human_oracle.hpp"
#include "realign/planner.hpp"
#include "realign/scenario_io.hpp"

namespace realign {
namespace {

Scenario laptop_scenario() {
  return load_scenario(REALIGN_SOURCE_DIR "/scenarios/laptop_moved.json");
}

// The robot's first plan in the laptop scenario, made with stale features.
Trajectory first_plan(const Scenario& s) {
  PlannerParams params = s.planner;
  params.seed = s.seed;
  return plan(s.model, s.features, s.initial_theta, s.start, s.goal, params).trajectory;
}

TEST(TrueHuman, FeaturesFollowLiveObjects) {
  const Scenario s = laptop_scenario();
  const TrueHuman human(s.human);
  const FeatureSet fs = human.true_features(s.env_test);
  ASSERT_EQ(fs.size(), 2u);
  EXPECT_EQ(fs[0].peak(), Vec2(2.1, 0.6));
  EXPECT_EQ(fs[1].peak(), Vec2(-0.5, 1.2));
}

TEST(TrueHuman, CorrectsStalePlanAndLowersItsCost) {
  const Scenario s = laptop_scenario();
  const Trajectory traj = first_plan(s);
  const DeformationShape shape(s.planner.horizon, s.mu);
  TrueHuman human(s.human);
  const auto c = human.maybe_correct(traj, s.env_test, s.model, shape);
  ASSERT_TRUE(c.has_value());
  EXPECT_GT(c->waypoint, 0u);
  EXPECT_LT(c->waypoint, s.planner.horizon);
  ASSERT_TRUE(human.last_target().has_value());
  EXPECT_EQ(*human.last_target(), 0u);
  const double before = human.true_cost(traj, s.env_test, s.model);
  const double after = human.true_cost(deform(traj, *c, shape), s.env_test, s.model);
  EXPECT_LT(after + s.human.effort * c->torque.squaredNorm(), before);
  // The push moves the arm away from the laptop.
  const Trajectory pushed = deform(traj, *c, shape);
  EXPECT_GT(min_clearance(pushed, s.model, Vec2(2.1, 0.6)), min_clearance(traj, s.model, Vec2(2.1, 0.6)));
}

TEST(TrueHuman, AcceptsTheirOwnOptimalPlan) {
  const Scenario s = laptop_scenario();
  TrueHuman human(s.human);
  const FeatureSet truth = human.true_features(s.env_test);
  PlannerParams params = s.planner;
  params.seed = s.seed;
  const Trajectory traj = plan(s.model, truth, s.human.theta, s.start, s.goal, params).trajectory;
  const DeformationShape shape(s.planner.horizon, s.mu);
  EXPECT_FALSE(human.maybe_correct(traj, s.env_test, s.model, shape).has_value());
}

TEST(TrueHuman, CorrectionShrinksAsEffortGrows) {
  const Scenario s = laptop_scenario();
  const Trajectory traj = first_plan(s);
  const DeformationShape shape(s.planner.horizon, s.mu);
  double last = std::numeric_limits<double>::infinity();
  for (double effort : {0.25, 1.0, 4.0}) {
    HumanParams p = s.human;
    p.effort = effort;
    p.trigger = 0.0;
    TrueHuman human(p);
    const auto c = human.maybe_correct(traj, s.env_test, s.model, shape);
    const double norm = c ? c->torque.norm() : 0.0;
    EXPECT_LE(norm, last + 1e-9) << "effort " << effort;
    last = norm;
  }
  HumanParams lazy = s.human;
  lazy.effort = 1e6;
  TrueHuman human(lazy);
  EXPECT_FALSE(human.maybe_correct(traj, s.env_test, s.model, shape).has_value());
}

TEST(TrueHuman, ZeroWeightsNeverCorrect) {
  const Scenario s = laptop_scenario();
  HumanParams p = s.human;
  p.theta.setZero();
  TrueHuman human(p);
  EXPECT_FALSE(
      human.maybe_correct(first_plan(s), s.env_test, s.model, DeformationShape(s.planner.horizon, s.mu))
          .has_value());
}

TEST(TrueHuman, StochasticChoiceIsSeededAndHelpful) {
  const Scenario s = laptop_scenario();
  const Trajectory traj = first_plan(s);
  const DeformationShape shape(s.planner.horizon, s.mu);
  HumanParams p = s.human;
  p.rationality = 5.0;
  p.seed = 31;
  TrueHuman a(p);
  TrueHuman b(p);
  const auto ca = a.maybe_correct(traj, s.env_test, s.model, shape);
  const auto cb = b.maybe_correct(traj, s.env_test, s.model, shape);
  ASSERT_EQ(ca.has_value(), cb.has_value());
  if (ca) {
    EXPECT_EQ(ca->waypoint, cb->waypoint);
    EXPECT_EQ(ca->torque, cb->torque);
    const double before = a.true_cost(traj, s.env_test, s.model);
    EXPECT_LT(a.true_cost(deform(traj, *ca, shape), s.env_test, s.model) +
                  p.effort * ca->torque.squaredNorm(),
              before);
  }
}

TEST(TrueHuman, QueryLabelsComeFromTargetedFeature) {
  Scenario s = laptop_scenario();
  TrueHuman human(s.human);
  const DeformationShape shape(s.planner.horizon, s.mu);
  ASSERT_TRUE(human.maybe_correct(first_plan(s), s.env_test, s.model, shape).has_value());
  const MissingFeatureQuery near{Vec2(2.0, 0.5), 0.5, 64};
  const auto samples = human.answer_feature_query(near, s.env_test);
  ASSERT_EQ(samples.size(), 64u);
  double peak = 0.0;
  for (const auto& smp : samples) {
    EXPECT_GE(smp.point.x(), near.lower().x());
    EXPECT_LE(smp.point.y(), near.upper().y());
    peak = std::max(peak, smp.value);
  }
  EXPECT_GT(peak, 0.9);
  const MissingFeatureQuery far{Vec2(-2.0, -2.0), 0.5, 16};
  for (const auto& smp : human.answer_feature_query(far, s.env_test)) EXPECT_LT(smp.value, 1e-3);
}

TEST(HumanParams, Validation) {
  HumanParams p;
  EXPECT_THROW(p.validate(), Error);
  p.features = {{"a", 0.5, "laptop", Vec2::Zero()}};
  p.theta = Eigen::VectorXd::Ones(2);
  EXPECT_THROW(p.validate(), Error);
  p.theta = Eigen::VectorXd::Ones(1);
  p.validate();
  p.theta[0] = -1.0;
  EXPECT_THROW(p.validate(), Error);
  p.theta[0] = 1.0;
  p.rationality = 0.0;
  EXPECT_THROW(p.validate(), Error);
}

}  // namespace
}  // namespace realign
