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

// Simulated human. Its features are re-anchored on the live object poses,
// so unlike the robot's they follow objects around. It corrects one
// feature at a time and answers feature queries with labelled samples.

#ifndef REALIGN_HUMAN_ORACLE_HPP_
#define REALIGN_HUMAN_ORACLE_HPP_

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "realign/common.hpp"
#include "realign/diagnosis.hpp"
#include "realign/features.hpp"
#include "realign/kinematics.hpp"
#include "realign/planner.hpp"
#include "realign/trajectory.hpp"

namespace realign {

// A true feature peaks at `offset` from the live position of `object_id`.
struct TrueFeatureSpec {
  std::string id;
  double sigma = 0.5;
  std::string object_id;
  Vec2 offset = Vec2::Zero();

  bool operator==(const TrueFeatureSpec& o) const {
    return id == o.id && sigma == o.sigma && object_id == o.object_id && offset == o.offset;
  }
};

struct HumanParams {
  std::vector<TrueFeatureSpec> features;
  Eigen::VectorXd theta;
  double effort = 0.5;
  // Minimum cost improvement worth a correction.
  double trigger = 0.2;
  // Boltzmann inverse temperature; unset means the exact best response.
  std::optional<double> rationality;
  // Largest push magnitude on the stochastic candidate grid.
  double max_torque = 4.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(!features.empty(), ErrorCode::kInvalidArgument, "human needs at least one feature");
    require(static_cast<std::size_t>(theta.size()) == features.size(),
            ErrorCode::kDimensionMismatch, "human weight count differs from feature count");
    require(theta.allFinite() && theta.minCoeff() >= 0.0, ErrorCode::kInvalidArgument,
            "human weights must be finite and non-negative");
    require(std::isfinite(effort) && effort > 0.0, ErrorCode::kInvalidArgument,
            "human effort weight must be positive");
    require(std::isfinite(trigger) && trigger >= 0.0, ErrorCode::kInvalidArgument,
            "correction trigger must be non-negative");
    require(max_torque > 0.0, ErrorCode::kInvalidArgument, "max torque must be positive");
    if (rationality) {
      require(*rationality > 0.0, ErrorCode::kInvalidArgument, "rationality must be positive");
    }
    for (const auto& f : features) {
      require(!f.id.empty() && std::isfinite(f.sigma) && f.sigma > 0.0,
              ErrorCode::kInvalidArgument, "true feature needs an id and a positive width");
    }
  }

  bool operator==(const HumanParams& o) const {
    return features == o.features && theta.size() == o.theta.size() && theta == o.theta &&
           effort == o.effort && trigger == o.trigger && rationality == o.rationality &&
           max_torque == o.max_torque && seed == o.seed;
  }
};

class TrueHuman {
 public:
  explicit TrueHuman(HumanParams params) : params_(std::move(params)), rng_(params_.seed) {
    params_.validate();
  }

  const HumanParams& params() const { return params_; }
  // Index of the feature behind the last correction.
  std::optional<std::size_t> last_target() const { return last_target_; }

  FeatureSet true_features(const Environment& env) const {
    std::vector<TrainedFeature> out;
    for (const auto& spec : params_.features) {
      const Vec2 anchor = env.at(spec.object_id).position + spec.offset;
      out.push_back(TrainedFeature::radial(spec.id, anchor, spec.sigma, env, spec.object_id));
    }
    return FeatureSet(std::move(out));
  }

  double true_cost(const Trajectory& traj, const Environment& env, const ArmModel& model) const {
    return params_.theta.dot(feature_sum(traj, true_features(env), model));
  }

  // The correction the human would apply to `traj`, if any.
  std::optional<CorrectionEvent> maybe_correct(const Trajectory& traj, const Environment& env,
                                               const ArmModel& model,
                                               const DeformationShape& shape) {
    traj.validate();
    const FeatureSet fs = true_features(env);
    const Eigen::VectorXd phi = feature_sum(traj, fs, model);
    const double full = params_.theta.dot(phi);

    struct Candidate {
      std::size_t feature;
      std::size_t waypoint;
      Torque torque;
      double gain;
    };
    std::vector<Candidate> ranked;
    for (std::size_t i = 0; i < fs.size(); ++i) {
      const double w = params_.theta[static_cast<Eigen::Index>(i)];
      if (w <= 0.0) continue;
      const double before = w * phi[static_cast<Eigen::Index>(i)];
      Candidate best{i, 1, Torque::Zero(traj.dof()), 0.0};
      for (std::size_t t = 1; t < traj.horizon(); ++t) {
        const auto [u, value] = best_push(traj, fs[i], w, t, model, shape);
        if (before - value > best.gain) best = {i, t, u, before - value};
      }
      if (best.gain > params_.trigger) ranked.push_back(std::move(best));
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const Candidate& a, const Candidate& b) { return a.gain > b.gain; });

    for (const auto& c : ranked) {
      std::optional<CorrectionEvent> event;
      if (params_.rationality) {
        event = sample_push(traj, fs[c.feature], c.feature, model, shape);
      } else {
        event = CorrectionEvent{c.waypoint, c.torque, 0};
      }
      if (!event) return std::nullopt;
      const double after =
          params_.theta.dot(feature_sum(deform(traj, *event, shape), fs, model)) +
          params_.effort * event->torque.squaredNorm();
      if (after < full) {
        last_target_ = c.feature;
        return event;
      }
    }
    return std::nullopt;
  }

  // Labels for the feature behind the last correction on a jittered grid
  // over the query box.
  std::vector<FeatureSample> answer_feature_query(const MissingFeatureQuery& q,
                                                  const Environment& env) {
    q.validate();
    const FeatureSet fs = true_features(env);
    const TrainedFeature& f = fs[last_target_.value_or(0)];
    const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(q.sample_count))));
    const double cell = 2.0 * q.half_extent / side;
    std::vector<FeatureSample> out;
    for (int r = 0; r < side && static_cast<int>(out.size()) < q.sample_count; ++r) {
      for (int c = 0; c < side && static_cast<int>(out.size()) < q.sample_count; ++c) {
        Vec2 p = q.lower() + Vec2((c + 0.5) * cell, (r + 0.5) * cell);
        p.x() += 0.25 * cell * detail::signed_unit(rng_);
        p.y() += 0.25 * cell * detail::signed_unit(rng_);
        out.push_back({p, eval_feature(f, p)});
      }
    }
    return out;
  }

 private:
  // min over u of w Phi_f(deform(traj, t, u)) + effort |u|^2 by gradient
  // descent from rest and from pushes down the initial gradient.
  std::pair<Torque, double> best_push(const Trajectory& traj, const TrainedFeature& f, double w,
                                      std::size_t t, const ArmModel& model,
                                      const DeformationShape& shape) const {
    const double lambda = params_.effort;
    auto value = [&](const Torque& u) {
      double sum = 0.0;
      for (std::size_t s = 0; s < traj.size(); ++s) {
        sum += eval_feature(f, model, traj[s] + shape.weight(s, t) * u);
      }
      return w * sum + lambda * u.squaredNorm();
    };
    auto gradient = [&](const Torque& u) {
      Eigen::VectorXd g = 2.0 * lambda * u;
      for (std::size_t s = 1; s < traj.horizon(); ++s) {
        const double k = shape.weight(s, t);
        if (k != 0.0) g += w * k * feature_joint_gradient(f, model, traj[s] + k * u);
      }
      return g;
    };

    const Torque zero = Torque::Zero(traj.dof());
    std::vector<Torque> starts{zero};
    const Eigen::VectorXd g0 = gradient(zero);
    if (g0.norm() > 1e-12) {
      for (double m : {0.5, 1.5, 3.0}) starts.push_back(-m * g0.normalized());
    }
    Torque best = zero;
    double best_value = value(zero);
    for (Torque u : starts) {
      double v = value(u);
      double step = 1.0;
      for (int it = 0; it < 400; ++it) {
        const Eigen::VectorXd g = gradient(u);
        if (g.norm() < 1e-10) break;
        bool moved = false;
        step = std::min(1.0, 2.0 * step);
        for (int k = 0; k < 40; ++k) {
          const Torque trial = u - step * g;
          const double vt = value(trial);
          if (vt <= v - 1e-4 * step * g.squaredNorm()) {
            u = trial;
            v = vt;
            moved = true;
            break;
          }
          step *= 0.5;
        }
        if (!moved) break;
      }
      if (v < best_value) {
        best_value = v;
        best = u;
      }
    }
    return {best, best_value};
  }

  // Boltzmann choice over 9 waypoints x 21 magnitudes along the steepest
  // descent direction of the target feature; magnitude 0 means no push.
  std::optional<CorrectionEvent> sample_push(const Trajectory& traj, const TrainedFeature& f,
                                             std::size_t feature, const ArmModel& model,
                                             const DeformationShape& shape) {
    const double w = params_.theta[static_cast<Eigen::Index>(feature)];
    const std::size_t horizon = traj.horizon();
    std::vector<CorrectionEvent> options;
    std::vector<double> costs;
    for (int k = 0; k < 9; ++k) {
      const auto t = static_cast<std::size_t>(
          std::lround(1.0 + k * static_cast<double>(horizon - 2) / 8.0));
      Eigen::VectorXd dir = Eigen::VectorXd::Zero(traj.dof());
      for (std::size_t s = 1; s < horizon; ++s) {
        dir += shape.weight(s, t) * feature_joint_gradient(f, model, traj[s]);
      }
      if (dir.norm() < 1e-12) continue;
      dir = -dir.normalized();
      for (int m = 0; m < 21; ++m) {
        const Torque u = (params_.max_torque * m / 20.0) * dir;
        const Trajectory d = deform(traj, t, u, shape);
        options.push_back({t, u, 0});
        costs.push_back(w * feature_sum(d, f, model) + params_.effort * u.squaredNorm());
      }
    }
    if (options.empty()) return std::nullopt;
    const double lo = *std::min_element(costs.begin(), costs.end());
    std::vector<double> cumulative;
    double total = 0.0;
    for (double c : costs) {
      total += std::exp(-*params_.rationality * (c - lo));
      cumulative.push_back(total);
    }
    const double pick = 0.5 * (detail::signed_unit(rng_) + 1.0) * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    const auto& chosen = options[static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(it - cumulative.begin(), static_cast<std::ptrdiff_t>(options.size()) - 1))];
    if (chosen.torque.squaredNorm() == 0.0) return std::nullopt;
    return chosen;
  }

  HumanParams params_;
  std::mt19937_64 rng_;
  std::optional<std::size_t> last_target_;
};

}  // namespace realign

#endif  // REALIGN_HUMAN_ORACLE_HPP_
