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

// Brute-force reference for the minimum-effort correction, plus a generator
// of small random instances. Shared by the unit and acceptance tests.

#ifndef REALIGN_TESTS_SUPPORT_CORRECTION_ORACLE_HPP_
#define REALIGN_TESTS_SUPPORT_CORRECTION_ORACLE_HPP_

#include <cmath>
#include <limits>
#include <random>

#include "realign/reward_learning.hpp"

namespace realign::testing {

struct SmallInstance {
  ArmModel arm = ArmModel::planar({1.0, 1.0});
  FeatureSet fs;
  Trajectory xi_r;
  Trajectory xi_h;
  CorrectionEvent observed;
  DeformationShape shape{6, 0.15};
};

// T = 6, J = 2. Redraws until the push changes the feature sum by at least
// `min_change`, so the solver tolerance is small against the change.
inline SmallInstance random_instance(std::mt19937_64& rng, double min_change = 0.2) {
  std::uniform_real_distribution<double> angle(-2.0, 2.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> waypoint(1, 5);
  SmallInstance s;
  for (;;) {
    JointConfig start(2), goal(2);
    start << angle(rng), 0.3 + std::abs(angle(rng));
    goal << angle(rng), 0.3 + std::abs(angle(rng));
    s.xi_r = straight_line(start, goal, 6);
    const std::size_t mid = waypoint(rng);
    const Vec2 anchor = end_effector(s.arm, s.xi_r[mid]) + 0.4 * Vec2(unit(rng), unit(rng));
    s.fs = FeatureSet({TrainedFeature::radial("f", anchor, 0.3 + 0.3 * std::abs(unit(rng)))});
    Torque u(2);
    u << 2.0 * unit(rng), 2.0 * unit(rng);
    if (u.norm() < 0.5) continue;
    s.observed = {waypoint(rng), u, 0};
    s.xi_h = deform(s.xi_r, s.observed, s.shape);
    const double change = std::abs(feature_sum(s.xi_h, s.fs[0], s.arm) -
                                   feature_sum(s.xi_r, s.fs[0], s.arm));
    if (change >= min_change) return s;
  }
}

// Smallest |u|^2 over a polar grid at every interior waypoint such that the
// deformed feature sum matches xi_H. Along each ray the first sign change of
// the residual is refined by bisection. `tol` only decides whether no push
// is needed at all.
inline double grid_optimal_norm_sq(const SmallInstance& s, double tol = 1e-3, int rays = 720,
                                   double dr = 0.01) {
  const TrainedFeature& f = s.fs[0];
  const double target = feature_sum(s.xi_h, f, s.arm);
  const double r_max = 1.01 * s.observed.torque.norm() + 0.01;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t < s.xi_r.horizon(); ++t) {
    auto residual = [&](const Torque& u) {
      return feature_sum(deform(s.xi_r, t, u, s.shape), f, s.arm) - target;
    };
    const double g0 = residual(Torque::Zero(2));
    if (std::abs(g0) <= tol) return 0.0;
    for (int k = 0; k < rays; ++k) {
      const double phi = 2.0 * kPi * k / rays;
      const Torque dir = Eigen::Vector2d(std::cos(phi), std::sin(phi));
      for (double r = dr; r <= r_max && (r - dr) * (r - dr) < best; r += dr) {
        const double g = residual(r * dir);
        if (g != 0.0 && (g > 0.0) == (g0 > 0.0)) continue;
        double lo = r - dr;
        double hi = r;
        for (int it = 0; it < 50; ++it) {
          const double m = 0.5 * (lo + hi);
          const double gm = residual(m * dir);
          ((gm > 0.0) != (g0 > 0.0) || gm == 0.0 ? hi : lo) = m;
        }
        best = std::min(best, hi * hi);
        break;
      }
    }
  }
  return best;
}

}  // namespace realign::testing

#endif  // REALIGN_TESTS_SUPPORT_CORRECTION_ORACLE_HPP_
