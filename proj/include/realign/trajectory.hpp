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

#ifndef REALIGN_TRAJECTORY_HPP_
#define REALIGN_TRAJECTORY_HPP_

#include <memory>
#include <string>

#include "realign/common.hpp"
#include "realign/features.hpp"
#include "realign/kinematics.hpp"
#include "realign/waypoints.hpp"

namespace realign {

// Shape of a physical-correction deformation over the T-1 interior
// waypoints. A = K^T K with K the square second-difference operator whose
// boundary rows see the fixed endpoints as zero displacement. The cached
// inverse is scaled so its largest entry is 1; mu then bounds the
// displacement per unit torque.
class DeformationShape {
 public:
  DeformationShape(std::size_t horizon, double mu) : horizon_(horizon), mu_(mu) {
    require(horizon >= 2, ErrorCode::kInvalidArgument, "deformation horizon must be >= 2");
    require(std::isfinite(mu) && mu > 0.0, ErrorCode::kInvalidArgument, "mu must be positive");
    const auto n = static_cast<Eigen::Index>(horizon - 1);
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
      k(r, r) = -2.0;
      if (r > 0) k(r, r - 1) = 1.0;
      if (r + 1 < n) k(r, r + 1) = 1.0;
    }
    const Eigen::MatrixXd a = k.transpose() * k;
    Eigen::MatrixXd inv = a.llt().solve(Eigen::MatrixXd::Identity(n, n));
    inv = 0.5 * (inv + inv.transpose()).eval();
    inv /= inv.cwiseAbs().maxCoeff();
    inverse_ = std::make_shared<const Eigen::MatrixXd>(std::move(inv));
  }

  std::size_t horizon() const { return horizon_; }
  double mu() const { return mu_; }
  // Scaled A^{-1}, (T-1) x (T-1), rows/cols indexed by waypoint - 1.
  const Eigen::MatrixXd& inverse() const { return *inverse_; }

  // Displacement weight of waypoint s for a push at waypoint t (both in
  // [0, T]); zero at the endpoints.
  double weight(std::size_t s, std::size_t t) const {
    if (s == 0 || s >= horizon_ || t == 0 || t >= horizon_) return 0.0;
    return mu_ * (*inverse_)(static_cast<Eigen::Index>(s - 1), static_cast<Eigen::Index>(t - 1));
  }

 private:
  std::size_t horizon_;
  double mu_;
  std::shared_ptr<const Eigen::MatrixXd> inverse_;
};

// A single-waypoint human push: u_H at `waypoint`, zero elsewhere.
struct CorrectionEvent {
  std::size_t waypoint = 1;
  Torque torque;
  // Loop step at which the push happened; the simulation has no wall clock.
  long step = 0;
};

inline void check_correction(const Trajectory& traj, const CorrectionEvent& corr) {
  if (corr.waypoint == 0 || corr.waypoint >= traj.horizon()) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "correction waypoint " + std::to_string(corr.waypoint) + " is not interior",
                corr.waypoint);
  }
  require(corr.torque.size() == traj.dof(), ErrorCode::kDimensionMismatch,
          "correction torque dimension differs from trajectory");
  require(corr.torque.allFinite(), ErrorCode::kNonFinite, "correction torque must be finite");
}

// xi_H = xi_R + mu A^{-1} U_H, applied to each joint independently.
inline Trajectory deform(const Trajectory& traj, const CorrectionEvent& corr,
                         const DeformationShape& shape) {
  require(traj.horizon() == shape.horizon(), ErrorCode::kDimensionMismatch,
          "deformation shape built for a different horizon");
  check_correction(traj, corr);
  Trajectory out = traj;
  for (std::size_t s = 1; s < traj.horizon(); ++s) {
    out[s] += shape.weight(s, corr.waypoint) * corr.torque;
  }
  return out;
}

inline Trajectory deform(const Trajectory& traj, std::size_t waypoint, const Torque& torque,
                         const DeformationShape& shape) {
  return deform(traj, CorrectionEvent{waypoint, torque, 0}, shape);
}

// Phi(xi): per-feature sum over all T+1 waypoints.
inline Eigen::VectorXd feature_sum(const Trajectory& traj, const FeatureSet& fs,
                                   const ArmModel& model) {
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fs.size()));
  for (const auto& q : traj.waypoints) {
    const Vec2 ee = end_effector(model, q);
    for (std::size_t i = 0; i < fs.size(); ++i) {
      phi[static_cast<Eigen::Index>(i)] += eval_feature(fs[i], ee);
    }
  }
  return phi;
}

// Single-feature sum.
inline double feature_sum(const Trajectory& traj, const TrainedFeature& f,
                          const ArmModel& model) {
  double sum = 0.0;
  for (const auto& q : traj.waypoints) sum += eval_feature(f, model, q);
  return sum;
}

// Phi(xi + delta): the trajectory is moved rigidly in the workspace first.
inline Eigen::VectorXd shifted_feature_sum(const Trajectory& traj, const Vec2& delta,
                                           const FeatureSet& fs, const ArmModel& model,
                                           const IkParams& ik = {}) {
  return feature_sum(shift_trajectory_end_effector(model, traj, delta, ik), fs, model);
}

}  // namespace realign

#endif  // REALIGN_TRAJECTORY_HPP_
