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

#include <random>

#include <gtest/gtest.h>

#include "realign/reward_learning.hpp"
#include "support/correction_oracle.hpp"

namespace realign {
namespace {

TEST(EstimateBeta, SaturatesWhenCorrectionIsAlreadyOptimal) {
  const LearnerParams p;
  Torque u(3);
  u << 1.0, -0.5, 0.25;
  EXPECT_EQ(estimate_beta(u, u, p), p.beta_max);
  EXPECT_EQ(estimate_beta(1.0, 1.5, p), p.beta_max);
}

TEST(EstimateBeta, ZeroOptimalCorrection) {
  // k = 3, lambda = 0.5, |u_H|^2 = 2: beta = 3 / (2 * 0.5 * 2).
  const LearnerParams p;
  EXPECT_DOUBLE_EQ(estimate_beta(2.0, 0.0, p), 1.5);
}

TEST(EstimateBeta, FollowsClosedForm) {
  LearnerParams p;
  p.action_dim = 2;
  p.effort = 0.25;
  EXPECT_DOUBLE_EQ(estimate_beta(5.0, 1.0, p), 2.0 / (2 * 0.25 * 4.0));
  EXPECT_EQ(estimate_beta(1e6, 0.0, p), 2.0 / (2 * 0.25 * 1e6));
  EXPECT_THROW(estimate_beta(std::nan(""), 0.0, p), Error);
}

TEST(EstimateBeta, NonIncreasingInObservedEffort) {
  const LearnerParams p;
  double last = p.beta_max;
  for (double n = 0.1; n < 50.0; n *= 1.3) {
    const double b = estimate_beta(n, 0.05, p);
    EXPECT_LE(b, last);
    EXPECT_GE(b, 0.0);
    last = b;
  }
}

TEST(PExplainable, LogisticAroundThreshold) {
  const LearnerParams p;
  EXPECT_DOUBLE_EQ(p_explainable(p.beta_threshold, p), 0.5);
  EXPECT_NEAR(p_explainable(2.0, p), 1.0 / (1.0 + std::exp(-10.0)), 1e-15);
  EXPECT_LT(p_explainable(0.0, p), 1e-4);
}

TEST(NaiveUpdate, SubtractsFeatureDifference) {
  const Eigen::Vector2d theta(1.0, 2.0), phi_h(3.0, 0.5), phi_r(1.0, 1.5);
  const Eigen::VectorXd out = naive_update(theta, phi_h, phi_r, 0.1);
  EXPECT_NEAR(out[0], 1.0 - 0.1 * 2.0, 1e-15);
  EXPECT_NEAR(out[1], 2.0 + 0.1 * 1.0, 1e-15);
  EXPECT_THROW(naive_update(theta, Eigen::VectorXd::Zero(3), phi_r, 0.1), Error);
}

TEST(ConfidenceUpdate, ReducesToNaiveWhenAlwaysExplainable) {
  LearnerParams p;
  p.p_explainable_override = 1.0;
  std::mt19937_64 rng(101);
  std::normal_distribution<double> n(0.0, 3.0);
  std::uniform_real_distribution<double> beta(0.0, 100.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index m = 1 + trial % 5;
    Eigen::VectorXd theta(m), phi_h(m), phi_r(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      theta[i] = n(rng);
      phi_h[i] = std::abs(n(rng));
      phi_r[i] = std::abs(n(rng));
    }
    const ConfidenceStep s = confidence_update(theta, phi_h, phi_r, beta(rng), p);
    const Eigen::VectorXd naive = naive_update(theta, phi_h, phi_r, p.alpha);
    ASSERT_LE((s.theta - naive).cwiseAbs().maxCoeff(), 1e-9) << "trial " << trial;
    EXPECT_EQ(s.weight, 1.0);
  }
}

TEST(ConfidenceUpdate, NeverExplainableLeavesWeightsAlone) {
  LearnerParams p;
  p.p_explainable_override = 0.0;
  const Eigen::Vector2d theta(1.0, 2.0), phi_h(3.0, 0.5), phi_r(1.0, 1.5);
  const ConfidenceStep s = confidence_update(theta, phi_h, phi_r, 0.0, p);
  EXPECT_EQ(s.weight, 0.0);
  EXPECT_EQ(s.theta, Eigen::VectorXd(theta));
}

TEST(ConfidenceUpdate, WeightMatchesPosteriorFormula) {
  const LearnerParams p;
  const Eigen::Vector2d theta(1.0, 0.5), phi_h(1.2, 0.4), phi_r(1.0, 0.6);
  const double beta = 1.05;
  const Eigen::Vector2d diff = phi_h - phi_r;
  const double p1 = 1.0 / (1.0 + std::exp(-10.0 * (beta - 1.0)));
  const double l1 = std::exp(-theta.dot(diff));
  const double l0 = std::pow(0.5 / kPi, 1.5) * std::exp(-0.5 * diff.squaredNorm());
  const double expected = p1 * l1 / (p1 * l1 + (1.0 - p1) * l0);
  const ConfidenceStep s = confidence_update(theta, phi_h, phi_r, beta, p);
  EXPECT_NEAR(s.weight, expected, 1e-12);
  EXPECT_NEAR((s.theta - (theta - p.alpha * expected * diff)).norm(), 0.0, 1e-12);
}

TEST(ConfidenceUpdate, WeightGrowsWithConfidence) {
  const LearnerParams p;
  const Eigen::Vector2d theta(1.0, 0.5), phi_h(1.2, 0.4), phi_r(1.0, 0.6);
  double last = -1.0;
  for (double beta = 0.0; beta <= 3.0; beta += 0.1) {
    const double w = confidence_update(theta, phi_h, phi_r, beta, p).weight;
    EXPECT_GE(w, last);
    EXPECT_GE(w, 0.0);
    EXPECT_LE(w, 1.0);
    last = w;
  }
}

TEST(ConfidenceUpdate, ExtremeInputsStayFinite) {
  const LearnerParams p;
  const Eigen::Vector2d theta(1e3, -1e3), phi_h(50.0, 0.0), phi_r(0.0, 50.0);
  const ConfidenceStep s = confidence_update(theta, phi_h, phi_r, 0.9, p);
  EXPECT_TRUE(s.theta.allFinite());
  EXPECT_TRUE(std::isfinite(s.weight));
}

TEST(OptimalCorrection, UnchangedFeatureNeedsNoTorque) {
  const ArmModel arm = ArmModel::planar({1.0, 1.0, 1.0});
  JointConfig a(3), b(3);
  a << -1.4, 0.9, 0.9;
  b << 0.2, 0.9, 0.9;
  const Trajectory xi_r = straight_line(a, b, 20);
  const DeformationShape shape(20, 0.15);
  // A feature far outside the workspace does not see the push.
  const FeatureSet fs({TrainedFeature::radial("far", Vec2(30.0, 30.0), 0.3)});
  Torque u(3);
  u << 1.0, 1.0, 0.0;
  const Trajectory xi_h = deform(xi_r, 10, u, shape);
  const OptimalCorrection c = optimal_correction(xi_r, xi_h, 0, shape, arm, fs);
  EXPECT_TRUE(c.feasible);
  EXPECT_EQ(c.norm_sq, 0.0);
}

TEST(OptimalCorrection, NeverWorseThanObservedTorque) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto s = testing::random_instance(rng);
    const OptimalCorrection c =
        optimal_correction(s.xi_r, s.xi_h, 0, s.shape, s.arm, s.fs, {}, &s.observed);
    ASSERT_TRUE(c.feasible);
    EXPECT_LE(c.norm_sq, s.observed.torque.squaredNorm() + 1e-6);
    EXPECT_LE(c.residual, 1e-3);
    // The reported residual is the real one.
    const double phi = feature_sum(deform(s.xi_r, c.waypoint, c.torque, s.shape), s.fs[0], s.arm);
    EXPECT_NEAR(std::abs(phi - feature_sum(s.xi_h, s.fs[0], s.arm)), c.residual, 1e-12);
  }
}

TEST(OptimalCorrection, MatchesGridOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    const auto s = testing::random_instance(rng);
    const OptimalCorrection c =
        optimal_correction(s.xi_r, s.xi_h, 0, s.shape, s.arm, s.fs, {}, &s.observed);
    const double oracle = testing::grid_optimal_norm_sq(s);
    ASSERT_TRUE(c.feasible);
    EXPECT_LE(std::abs(c.norm_sq - oracle), 0.05 * oracle) << "trial " << trial;
  }
}

TEST(OptimalCorrection, RejectsBadIndices) {
  std::mt19937_64 rng(1);
  const auto s = testing::random_instance(rng);
  EXPECT_THROW(optimal_correction(s.xi_r, s.xi_h, 1, s.shape, s.arm, s.fs), Error);
  EXPECT_THROW(optimal_correction(s.xi_r, s.xi_h, 0, DeformationShape(7, 0.15), s.arm, s.fs), Error);
}

// Scalar maximizer of log sigmoid(theta d) - reg theta^2 by bisection on
// the derivative.
double logistic_fit(double d, double reg) {
  double lo = 0.0, hi = 1e3;
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (lo + hi);
    const double g = d / (1.0 + std::exp(m * d)) - 2.0 * reg * m;
    (g > 0.0 ? lo : hi) = m;
  }
  return 0.5 * (lo + hi);
}

TEST(FitOffline, DemoAlonePartitionGivesZero) {
  const ArmModel arm = ArmModel::planar({1.0, 1.0, 1.0});
  JointConfig a(3), b(3);
  a << -1.4, 0.9, 0.9;
  b << 0.2, 0.9, 0.9;
  const FeatureSet fs({TrainedFeature::radial("laptop", Vec2(1.5, 1.0), 0.35)});
  const FitResult r = fit_offline({straight_line(a, b, 20)}, fs, arm);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.theta[0], 0.0, 1e-9);
}

TEST(FitOffline, MatchesScalarLogisticOracle) {
  const ArmModel arm = ArmModel::planar({1.0, 1.0, 1.0});
  JointConfig a(3), b(3);
  a << -1.4, 0.9, 0.9;
  b << 0.2, 0.9, 0.9;
  const Trajectory demo = straight_line(a, b, 20);
  const FeatureSet fs({TrainedFeature::radial("laptop", Vec2(1.5, 1.0), 0.35)});
  Torque u(3);
  u << -3.0, 2.0, 1.0;
  const Trajectory worse = deform(demo, 15, u, DeformationShape(20, 0.15));
  const double d = feature_sum(worse, fs[0], arm) - feature_sum(demo, fs[0], arm);
  ASSERT_GT(d, 0.0) << "the alternative should sit closer to the feature";
  FitParams params;
  params.partition_extra = {worse};
  const FitResult r = fit_offline({demo}, fs, arm, params);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.theta[0], logistic_fit(d, params.regularization), 1e-5);
}

TEST(FitOffline, ProjectsOntoNonNegativeWeights) {
  const ArmModel arm = ArmModel::planar({1.0, 1.0, 1.0});
  JointConfig a(3), b(3);
  a << -1.4, 0.9, 0.9;
  b << 0.2, 0.9, 0.9;
  const Trajectory demo = straight_line(a, b, 20);
  const FeatureSet fs({TrainedFeature::radial("laptop", Vec2(1.5, 1.0), 0.35)});
  Torque u(3);
  u << 3.0, -2.0, -1.0;
  const Trajectory away = deform(demo, 15, u, DeformationShape(20, 0.15));
  ASSERT_LT(feature_sum(away, fs[0], arm), feature_sum(demo, fs[0], arm));
  FitParams params;
  params.partition_extra = {away};
  const FitResult r = fit_offline({demo}, fs, arm, params);
  EXPECT_EQ(r.theta[0], 0.0);
}

TEST(Detection, SaturatedConfidenceForExplainedPush) {
  std::mt19937_64 rng(44);
  const auto s = testing::random_instance(rng);
  LearnerParams p;
  p.action_dim = 2;
  const Detection d =
      detect_misalignment(s.xi_r, s.xi_h, s.observed, s.fs, s.arm, s.shape, p);
  ASSERT_EQ(d.beta.size(), 1u);
  EXPECT_EQ(d.observed_norm_sq, s.observed.torque.squaredNorm());
  EXPECT_LE(d.optimal_norm_sq[0], d.observed_norm_sq + 1e-6);
  EXPECT_EQ(d.beta_max, d.beta[0]);
}

}  // namespace
}  // namespace realign
