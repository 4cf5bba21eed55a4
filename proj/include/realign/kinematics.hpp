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

// Planar serial-link arm: forward kinematics, end-effector Jacobian,
// damped-least-squares inverse kinematics, and rigid workspace shifts of
// whole trajectories.

#ifndef REALIGN_KINEMATICS_HPP_
#define REALIGN_KINEMATICS_HPP_

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "realign/common.hpp"
#include "realign/waypoints.hpp"

namespace realign {

struct JointLimit {
  double lower = -kPi;
  double upper = kPi;
  bool operator==(const JointLimit&) const = default;
};

struct ArmModel {
  Vec2 base = Vec2::Zero();
  std::vector<double> link_lengths;
  std::vector<JointLimit> joint_limits;

  // Arm with the given links and default [-pi, pi] limits.
  static ArmModel planar(std::vector<double> lengths, Vec2 base = Vec2::Zero()) {
    ArmModel m;
    m.base = base;
    m.joint_limits.assign(lengths.size(), JointLimit{});
    m.link_lengths = std::move(lengths);
    m.validate();
    return m;
  }

  Eigen::Index dof() const { return static_cast<Eigen::Index>(link_lengths.size()); }

  bool operator==(const ArmModel& o) const {
    return base == o.base && link_lengths == o.link_lengths && joint_limits == o.joint_limits;
  }

  double reach() const {
    return std::accumulate(link_lengths.begin(), link_lengths.end(), 0.0);
  }

  // Inner radius of the reachable annulus.
  double inner_radius() const {
    const double longest = *std::max_element(link_lengths.begin(), link_lengths.end());
    return std::max(0.0, 2.0 * longest - reach());
  }

  void validate() const {
    require(link_lengths.size() >= 2, ErrorCode::kInvalidArgument,
            "arm needs at least 2 links");
    require(joint_limits.size() == link_lengths.size(), ErrorCode::kDimensionMismatch,
            "one joint limit per link required");
    require(base.allFinite(), ErrorCode::kNonFinite, "arm base must be finite");
    for (std::size_t j = 0; j < link_lengths.size(); ++j) {
      require(std::isfinite(link_lengths[j]) && link_lengths[j] > 0.0,
              ErrorCode::kInvalidArgument, "link lengths must be positive");
      require(joint_limits[j].lower < joint_limits[j].upper, ErrorCode::kInvalidArgument,
              "joint limit min must be below max");
    }
  }

  void check_config(const JointConfig& q) const {
    if (q.size() != dof()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "joint config has " + std::to_string(q.size()) + " entries, arm has " +
                      std::to_string(dof()) + " joints");
    }
  }

  bool within_limits(const JointConfig& q, double slack = 1e-12) const {
    for (Eigen::Index j = 0; j < q.size(); ++j) {
      const auto& lim = joint_limits[static_cast<std::size_t>(j)];
      if (q[j] < lim.lower - slack || q[j] > lim.upper + slack) return false;
    }
    return true;
  }

  // Full-turn joints wrap; narrower ranges clamp.
  JointConfig enforce_limits(JointConfig q) const {
    for (Eigen::Index j = 0; j < q.size(); ++j) {
      const auto& lim = joint_limits[static_cast<std::size_t>(j)];
      const double span = lim.upper - lim.lower;
      if (span >= 2.0 * kPi - 1e-12) {
        if (q[j] < lim.lower || q[j] > lim.upper) {
          double w = std::fmod(q[j] - lim.lower, 2.0 * kPi);
          if (w < 0.0) w += 2.0 * kPi;
          q[j] = lim.lower + w;
        }
      } else {
        q[j] = std::clamp(q[j], lim.lower, lim.upper);
      }
    }
    return q;
  }
};

// Joint positions from base to end-effector: J+1 points, end-effector last.
inline std::vector<Vec2> forward_kinematics(const ArmModel& model, const JointConfig& q) {
  model.check_config(q);
  std::vector<Vec2> points;
  points.reserve(model.link_lengths.size() + 1);
  Vec2 p = model.base;
  points.push_back(p);
  double heading = 0.0;
  for (Eigen::Index j = 0; j < q.size(); ++j) {
    heading += q[j];
    const double len = model.link_lengths[static_cast<std::size_t>(j)];
    p += len * Vec2(std::cos(heading), std::sin(heading));
    points.push_back(p);
  }
  return points;
}

inline Vec2 end_effector(const ArmModel& model, const JointConfig& q) {
  return forward_kinematics(model, q).back();
}

// 2 x J matrix; column j is d(end-effector)/d(q_j).
inline Eigen::MatrixXd jacobian(const ArmModel& model, const JointConfig& q) {
  model.check_config(q);
  const Eigen::Index n = q.size();
  Eigen::MatrixXd jac(2, n);
  // Suffix sums of each link's contribution, accumulated from the tip.
  std::vector<double> headings(static_cast<std::size_t>(n));
  double heading = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    heading += q[j];
    headings[static_cast<std::size_t>(j)] = heading;
  }
  Vec2 tail = Vec2::Zero();
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    const auto k = static_cast<std::size_t>(j);
    const double len = model.link_lengths[k];
    tail += len * Vec2(-std::sin(headings[k]), std::cos(headings[k]));
    jac.col(j) = tail;
  }
  return jac;
}

struct IkParams {
  double tolerance = 1e-9;
  int max_iterations = 500;
  double damping = 0.05;
  // Largest per-joint change in one iteration, radians.
  double step_clamp = 0.2;

  bool operator==(const IkParams&) const = default;
};

// Damped-least-squares IK seeded at `seed`. Throws kUnreachable when the
// target lies outside the annulus and kNoConvergence when the residual is
// still above tolerance after max_iterations.
inline JointConfig inverse_kinematics(const ArmModel& model, const JointConfig& seed,
                                      const Vec2& target, const IkParams& params = {}) {
  model.check_config(seed);
  require(target.allFinite(), ErrorCode::kNonFinite, "IK target must be finite");
  const double dist = (target - model.base).norm();
  if (dist > model.reach() + 1e-12 || dist < model.inner_radius() - 1e-12) {
    throw Error(ErrorCode::kUnreachable, "target at distance " + std::to_string(dist) +
                                             " lies outside the reachable annulus");
  }

  JointConfig q = seed;
  const double damping_sq = params.damping * params.damping;
  for (int iter = 0; iter <= params.max_iterations; ++iter) {
    const Vec2 err = target - end_effector(model, q);
    if (err.norm() <= params.tolerance) {
      if (!model.within_limits(q)) q = model.enforce_limits(q);
      return q;
    }
    if (iter == params.max_iterations) break;
    const Eigen::MatrixXd jac = jacobian(model, q);
    const Eigen::Matrix2d jjt = jac * jac.transpose() + damping_sq * Eigen::Matrix2d::Identity();
    Eigen::VectorXd dq = jac.transpose() * jjt.ldlt().solve(err);
    const double biggest = dq.cwiseAbs().maxCoeff();
    if (biggest > params.step_clamp) dq *= params.step_clamp / biggest;
    q = model.enforce_limits(q + dq);
  }
  throw Error(ErrorCode::kNoConvergence,
              "IK residual above tolerance after " + std::to_string(params.max_iterations) +
                  " iterations");
}

// Moves every waypoint's end-effector by `delta`, keeping the base fixed.
// Each waypoint is seeded at its own configuration, then at the previous
// shifted waypoint, so the result stays on one IK branch.
inline Trajectory shift_trajectory_end_effector(const ArmModel& model, const Trajectory& traj,
                                                const Vec2& delta, const IkParams& params = {}) {
  require(delta.allFinite(), ErrorCode::kNonFinite, "shift must be finite");
  Trajectory out;
  out.waypoints.reserve(traj.size());
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const JointConfig& q = traj[t];
    const Vec2 target = end_effector(model, q) + delta;
    std::vector<JointConfig> seeds{q};
    if (t > 0) seeds.push_back(out.waypoints.back());
    for (double bump : {0.3, -0.3}) {
      JointConfig s = q;
      for (Eigen::Index j = 0; j < s.size(); ++j) s[j] += (j % 2 == 0 ? bump : -bump);
      seeds.push_back(model.enforce_limits(s));
    }
    std::optional<JointConfig> solved;
    for (const auto& s : seeds) {
      try {
        solved = inverse_kinematics(model, s, target, params);
        break;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kUnreachable) {
          throw Error(ErrorCode::kUnreachable,
                      "shifted waypoint " + std::to_string(t) + " is unreachable", t);
        }
      }
    }
    if (!solved) {
      throw Error(ErrorCode::kNoConvergence,
                  "IK failed for shifted waypoint " + std::to_string(t), t);
    }
    out.waypoints.push_back(std::move(*solved));
  }
  return out;
}

}  // namespace realign

#endif  // REALIGN_KINEMATICS_HPP_
