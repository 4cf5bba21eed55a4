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

#ifndef REALIGN_WAYPOINTS_HPP_
#define REALIGN_WAYPOINTS_HPP_

#include <algorithm>
#include <cstddef>
#include <vector>

#include "realign/common.hpp"

namespace realign {

// Joint-space trajectory with T+1 waypoints. Index 0 is the start and index
// T the goal; both are fixed under deformation and planning.
struct Trajectory {
  std::vector<JointConfig> waypoints;

  std::size_t horizon() const { return waypoints.empty() ? 0 : waypoints.size() - 1; }
  std::size_t size() const { return waypoints.size(); }
  Eigen::Index dof() const { return waypoints.empty() ? 0 : waypoints.front().size(); }

  const JointConfig& operator[](std::size_t t) const { return waypoints[t]; }
  JointConfig& operator[](std::size_t t) { return waypoints[t]; }

  void validate() const {
    require(waypoints.size() >= 3, ErrorCode::kInvalidArgument,
            "trajectory needs at least 3 waypoints (T >= 2)");
    for (const auto& q : waypoints) {
      require(q.size() == dof(), ErrorCode::kDimensionMismatch,
              "waypoints have inconsistent joint dimension");
      require(q.allFinite(), ErrorCode::kNonFinite, "non-finite waypoint");
    }
  }

  // Largest per-entry difference; used by tests and replanning checks.
  double max_abs_diff(const Trajectory& other) const {
    require(other.size() == size(), ErrorCode::kDimensionMismatch,
            "trajectory lengths differ");
    double out = 0.0;
    for (std::size_t t = 0; t < size(); ++t) {
      out = std::max(out, (waypoints[t] - other.waypoints[t]).cwiseAbs().maxCoeff());
    }
    return out;
  }
};

// Linear joint-space interpolation with `horizon` segments.
inline Trajectory straight_line(const JointConfig& start, const JointConfig& goal,
                                std::size_t horizon) {
  require(start.size() == goal.size(), ErrorCode::kDimensionMismatch,
          "start and goal differ in dimension");
  require(horizon >= 2, ErrorCode::kInvalidArgument, "horizon must be >= 2");
  Trajectory traj;
  traj.waypoints.reserve(horizon + 1);
  const double n = static_cast<double>(horizon);
  for (std::size_t t = 0; t <= horizon; ++t) {
    const double s = static_cast<double>(t) / n;
    traj.waypoints.push_back((1.0 - s) * start + s * goal);
  }
  traj.waypoints.front() = start;
  traj.waypoints.back() = goal;
  return traj;
}

}  // namespace realign

#endif  // REALIGN_WAYPOINTS_HPP_
