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

// Waypoint trajectory optimizer for
//   J(xi) = theta^T Phi(xi) + w_s * sum_t |q_{t+1} - q_t|^2
// with fixed endpoints. Descent directions are preconditioned by the
// smoothness Hessian (covariant gradient descent, as in CHOMP) and accepted
// with an Armijo backtracking line search.

#ifndef REALIGN_PLANNER_HPP_
#define REALIGN_PLANNER_HPP_

#include <cstdint>
#include <limits>
#include <random>

#include "realign/common.hpp"
#include "realign/features.hpp"
#include "realign/kinematics.hpp"
#include "realign/trajectory.hpp"

namespace realign {

struct PlannerParams {
  std::size_t horizon = 20;
  double smoothness = 1.0;
  // Converged once the largest preconditioned step entry drops below this.
  double tolerance = 1e-5;
  int max_iterations = 3000;
  int restarts = 0;
  double jitter = 0.3;
  std::uint64_t seed = 0;
  double armijo = 1e-4;

  bool operator==(const PlannerParams&) const = default;
};

struct PlanResult {
  Trajectory trajectory;
  double cost = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  // Which initialization won: 0 is the straight line.
  int restart = 0;
};

inline void check_weights(const Eigen::VectorXd& theta, const FeatureSet& fs) {
  require(static_cast<std::size_t>(theta.size()) == fs.size(), ErrorCode::kDimensionMismatch,
          "weight vector length differs from feature count");
  require(theta.allFinite(), ErrorCode::kNonFinite, "weights must be finite");
}

inline double smoothness_cost(const Trajectory& traj) {
  double sum = 0.0;
  for (std::size_t t = 0; t + 1 < traj.size(); ++t) {
    sum += (traj[t + 1] - traj[t]).squaredNorm();
  }
  return sum;
}

inline double trajectory_cost(const Trajectory& traj, const FeatureSet& fs,
                              const Eigen::VectorXd& theta, const ArmModel& model,
                              double smoothness) {
  const double cost = theta.dot(feature_sum(traj, fs, model)) + smoothness * smoothness_cost(traj);
  if (!std::isfinite(cost)) throw Error(ErrorCode::kNonFinite, "trajectory cost is not finite");
  return cost;
}

// Gradient with respect to the interior waypoints: J x (T-1), column t-1
// belongs to waypoint t.
inline Eigen::MatrixXd cost_gradient(const Trajectory& traj, const FeatureSet& fs,
                                     const Eigen::VectorXd& theta, const ArmModel& model,
                                     double smoothness) {
  const std::size_t horizon = traj.horizon();
  Eigen::MatrixXd grad(traj.dof(), static_cast<Eigen::Index>(horizon - 1));
  for (std::size_t t = 1; t < horizon; ++t) {
    const JointConfig& q = traj[t];
    Eigen::VectorXd g = 2.0 * smoothness * (2.0 * q - traj[t - 1] - traj[t + 1]);
    bool any_weight = false;
    for (std::size_t i = 0; i < fs.size(); ++i) {
      if (theta[static_cast<Eigen::Index>(i)] != 0.0) any_weight = true;
    }
    if (any_weight) {
      const Vec2 ee = end_effector(model, q);
      Vec2 dee = Vec2::Zero();
      for (std::size_t i = 0; i < fs.size(); ++i) {
        const double w = theta[static_cast<Eigen::Index>(i)];
        if (w != 0.0) dee += w * feature_gradient(fs[i], ee);
      }
      g += jacobian(model, q).transpose() * dee;
    }
    grad.col(static_cast<Eigen::Index>(t - 1)) = g;
  }
  return grad;
}

namespace detail {

inline JointConfig clamp_to_limits(const ArmModel& model, JointConfig q) {
  for (Eigen::Index j = 0; j < q.size(); ++j) {
    const auto& lim = model.joint_limits[static_cast<std::size_t>(j)];
    q[j] = std::clamp(q[j], lim.lower, lim.upper);
  }
  return q;
}

// Uniform in [-1, 1) from the raw generator output; avoids the
// implementation-defined std distributions so runs match across libraries.
inline double signed_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;
}

struct Descent {
  Trajectory trajectory;
  double cost;
  double gradient_norm;
  int iterations;
  bool converged;
};

inline Descent descend(Trajectory traj, const FeatureSet& fs, const Eigen::VectorXd& theta,
                       const ArmModel& model, const PlannerParams& params) {
  const std::size_t horizon = traj.horizon();
  const auto n = static_cast<Eigen::Index>(horizon - 1);
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    lap(r, r) = 2.0;
    if (r > 0) lap(r, r - 1) = -1.0;
    if (r + 1 < n) lap(r, r + 1) = -1.0;
  }
  // The Hessian of the smoothness term is 2 w_s lap; factor lap alone so
  // that scaling theta and w_s together leaves every iterate unchanged.
  const Eigen::LLT<Eigen::MatrixXd> precond(lap);

  double cost = trajectory_cost(traj, fs, theta, model, params.smoothness);
  Eigen::MatrixXd grad = cost_gradient(traj, fs, theta, model, params.smoothness);
  int iter = 0;
  bool converged = false;
  for (; iter < params.max_iterations; ++iter) {
    Eigen::MatrixXd dir = params.smoothness > 0.0
                              ? Eigen::MatrixXd(-precond.solve(grad.transpose()).transpose() /
                                                (2.0 * params.smoothness))
                              : Eigen::MatrixXd(-grad);
    if (dir.cwiseAbs().maxCoeff() <= params.tolerance) {
      converged = true;
      break;
    }
    const double slope = (grad.array() * dir.array()).sum();
    double step = 1.0;
    bool accepted = false;
    Trajectory trial = traj;
    double trial_cost = cost;
    for (int k = 0; k < 60; ++k) {
      for (std::size_t t = 1; t < horizon; ++t) {
        trial[t] = clamp_to_limits(
            model, traj[t] + step * dir.col(static_cast<Eigen::Index>(t - 1)));
      }
      trial_cost = trajectory_cost(trial, fs, theta, model, params.smoothness);
      if (trial_cost <= cost + params.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    traj = std::move(trial);
    cost = trial_cost;
    grad = cost_gradient(traj, fs, theta, model, params.smoothness);
  }
  return {std::move(traj), cost, grad.norm(), iter, converged};
}

}  // namespace detail

// Locally optimal trajectory from start to goal. Deterministic for a given
// seed; restarts jitter the straight-line initialization and the lowest cost
// wins (first seed on ties).
inline PlanResult plan(const ArmModel& model, const FeatureSet& fs, const Eigen::VectorXd& theta,
                       const JointConfig& start, const JointConfig& goal,
                       const PlannerParams& params = {}) {
  model.check_config(start);
  model.check_config(goal);
  check_weights(theta, fs);
  require(params.smoothness >= 0.0 && params.tolerance > 0.0, ErrorCode::kInvalidArgument,
          "planner needs smoothness >= 0 and tolerance > 0");

  const Trajectory line = straight_line(start, goal, params.horizon);
  PlanResult best;
  best.cost = std::numeric_limits<double>::infinity();
  for (int r = 0; r <= params.restarts; ++r) {
    Trajectory init = line;
    if (r > 0) {
      std::mt19937_64 rng(params.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(r));
      Eigen::VectorXd dir(model.dof());
      for (Eigen::Index j = 0; j < dir.size(); ++j) dir[j] = detail::signed_unit(rng);
      const double h = static_cast<double>(params.horizon);
      for (std::size_t t = 1; t < params.horizon; ++t) {
        const double bump = std::sin(kPi * static_cast<double>(t) / h);
        init[t] = detail::clamp_to_limits(model, init[t] + params.jitter * bump * dir);
      }
    }
    detail::Descent d = detail::descend(std::move(init), fs, theta, model, params);
    if (d.cost < best.cost) {
      best.trajectory = std::move(d.trajectory);
      best.cost = d.cost;
      best.gradient_norm = d.gradient_norm;
      best.iterations = d.iterations;
      best.converged = d.converged;
      best.restart = r;
    }
  }
  return best;
}

// Smallest end-effector distance to `point` over all waypoints.
inline double min_clearance(const Trajectory& traj, const ArmModel& model, const Vec2& point) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : traj.waypoints) best = std::min(best, (end_effector(model, q) - point).norm());
  return best;
}

}  // namespace realign

#endif  // REALIGN_PLANNER_HPP_
