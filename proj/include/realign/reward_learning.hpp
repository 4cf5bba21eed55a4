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

// Weight learning from demonstrations and physical corrections, plus the
// confidence machinery that decides whether a correction is explainable by
// the current features.

#ifndef REALIGN_REWARD_LEARNING_HPP_
#define REALIGN_REWARD_LEARNING_HPP_

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "realign/common.hpp"
#include "realign/features.hpp"
#include "realign/kinematics.hpp"
#include "realign/planner.hpp"
#include "realign/trajectory.hpp"

namespace realign {

struct LearnerParams {
  double alpha = 0.1;
  // Effort trade-off lambda.
  double effort = 0.5;
  // Action-space dimension k; normally the number of joints.
  int action_dim = 3;
  double beta_threshold = 1.0;
  double beta_max = 100.0;
  double logistic_slope = 10.0;
  double denominator_guard = 1e-9;
  // Forces P(E=1 | beta) to a fixed value when set.
  std::optional<double> p_explainable_override;

  void validate() const {
    require(alpha > 0.0 && effort > 0.0 && action_dim > 0 && beta_threshold > 0.0 &&
                beta_max > 0.0 && logistic_slope > 0.0 && denominator_guard > 0.0,
            ErrorCode::kInvalidArgument, "learner parameters must be positive");
    require(beta_threshold < beta_max, ErrorCode::kInvalidArgument,
            "beta threshold must be below beta_max");
    if (p_explainable_override) {
      require(*p_explainable_override >= 0.0 && *p_explainable_override <= 1.0,
              ErrorCode::kInvalidArgument, "P(E=1) override must lie in [0,1]");
    }
  }

  bool operator==(const LearnerParams&) const = default;
};

struct Belief {
  Eigen::VectorXd theta;
  double beta = 0.0;
  double e_posterior = 0.0;
};

// beta = k / (2 lambda (|u_H|^2 - |u*|^2)), clamped to [0, beta_max]. A
// vanishing or negative denominator means the correction is as efficient
// as it can be, so beta saturates.
inline double estimate_beta(double observed_norm_sq, double optimal_norm_sq,
                            const LearnerParams& p) {
  require(std::isfinite(observed_norm_sq) && std::isfinite(optimal_norm_sq),
          ErrorCode::kNonFinite, "correction norms must be finite");
  const double gap = observed_norm_sq - optimal_norm_sq;
  const double den = 2.0 * p.effort * gap;
  if (den <= p.denominator_guard) return p.beta_max;
  return std::clamp(static_cast<double>(p.action_dim) / den, 0.0, p.beta_max);
}

inline double estimate_beta(const Torque& observed, const Torque& optimal,
                            const LearnerParams& p) {
  return estimate_beta(observed.squaredNorm(), optimal.squaredNorm(), p);
}

// P(E = 1 | beta): logistic centered on the threshold.
inline double p_explainable(double beta, const LearnerParams& p) {
  if (p.p_explainable_override) return *p.p_explainable_override;
  return 1.0 / (1.0 + std::exp(-p.logistic_slope * (beta - p.beta_threshold)));
}

namespace detail {
inline Eigen::VectorXd weighted_step(const Eigen::VectorXd& theta, const Eigen::VectorXd& phi_h,
                                     const Eigen::VectorXd& phi_r, double alpha, double weight) {
  require(theta.size() == phi_h.size() && theta.size() == phi_r.size(),
          ErrorCode::kDimensionMismatch, "weight and feature vectors differ in length");
  return theta - (alpha * weight) * (phi_h - phi_r);
}
}  // namespace detail

// theta <- theta - alpha (Phi_H - Phi_R).
inline Eigen::VectorXd naive_update(const Eigen::VectorXd& theta, const Eigen::VectorXd& phi_h,
                                    const Eigen::VectorXd& phi_r, double alpha) {
  return detail::weighted_step(theta, phi_h, phi_r, alpha, 1.0);
}

struct ConfidenceStep {
  Eigen::VectorXd theta;
  // Gamma(1) / (Gamma(1) + Gamma(0)) in [0, 1].
  double weight = 0.0;
};

// Posterior-weighted update. The explainable likelihood is the Boltzmann
// improvement exp(-theta^T dPhi); the unexplainable one is the effort-only
// Gaussian (lambda/pi)^{k/2} exp(-lambda |dPhi|^2). Evaluated in log space.
inline ConfidenceStep confidence_update(const Eigen::VectorXd& theta, const Eigen::VectorXd& phi_h,
                                        const Eigen::VectorXd& phi_r, double beta,
                                        const LearnerParams& p) {
  require(theta.size() == phi_h.size() && theta.size() == phi_r.size(),
          ErrorCode::kDimensionMismatch, "weight and feature vectors differ in length");
  const Eigen::VectorXd diff = phi_h - phi_r;
  const double p1 = p_explainable(beta, p);
  const double p0 = 1.0 - p1;
  double weight = 0.0;
  if (p0 <= 0.0) {
    weight = 1.0;
  } else if (p1 <= 0.0) {
    weight = 0.0;
  } else {
    const double log_l1 = -theta.dot(diff);
    const double log_l0 = 0.5 * p.action_dim * std::log(p.effort / kPi) -
                          p.effort * diff.squaredNorm();
    const double log_g1 = std::log(p1) + log_l1;
    const double log_g0 = std::log(p0) + log_l0;
    if (!std::isfinite(log_g1) && !std::isfinite(log_g0)) {
      throw Error(ErrorCode::kNonFinite, "confidence update likelihoods are not finite");
    }
    weight = 1.0 / (1.0 + std::exp(log_g0 - log_g1));
  }
  if (!std::isfinite(weight)) throw Error(ErrorCode::kNonFinite, "confidence weight not finite");
  return {detail::weighted_step(theta, phi_h, phi_r, p.alpha, weight), weight};
}

// ---------------------------------------------------------------------------
// Minimum-effort correction explaining one feature's change.

struct CorrectionSolverParams {
  // Target feature sum must be matched this closely.
  double feature_tolerance = 1e-3;
  std::vector<double> penalties{1e2, 1e3, 1e4};
  int inner_iterations = 60;
  int polish_iterations = 30;

  bool operator==(const CorrectionSolverParams&) const = default;
};

struct OptimalCorrection {
  bool feasible = false;
  std::size_t waypoint = 1;
  Torque torque;
  double norm_sq = 0.0;
  // |Phi_i(deformed) - target| at the returned torque.
  double residual = 0.0;
};

namespace detail {

// Residual r(u) = Phi_i(deform(xi_R, t, u)) - target and its gradient.
class SingleFeatureConstraint {
 public:
  SingleFeatureConstraint(const Trajectory& base, const TrainedFeature& f, const ArmModel& model,
                          const DeformationShape& shape, std::size_t waypoint, double target)
      : base_(base), f_(f), model_(model), shape_(shape), t_(waypoint), target_(target) {}

  double residual(const Torque& u) const {
    double sum = 0.0;
    for (std::size_t s = 0; s < base_.size(); ++s) {
      sum += eval_feature(f_, model_, base_[s] + shape_.weight(s, t_) * u);
    }
    return sum - target_;
  }

  Eigen::VectorXd gradient(const Torque& u) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(u.size());
    for (std::size_t s = 1; s < base_.horizon(); ++s) {
      const double w = shape_.weight(s, t_);
      if (w == 0.0) continue;
      g += w * feature_joint_gradient(f_, model_, base_[s] + w * u);
    }
    return g;
  }

 private:
  const Trajectory& base_;
  const TrainedFeature& f_;
  const ArmModel& model_;
  const DeformationShape& shape_;
  std::size_t t_;
  double target_;
};

// Gauss-Newton on |u|^2 + rho r(u)^2, one penalty weight.
inline Torque minimize_penalty(const SingleFeatureConstraint& c, Torque u, double rho,
                               int iterations) {
  auto objective = [&](const Torque& v) {
    const double r = c.residual(v);
    return v.squaredNorm() + rho * r * r;
  };
  double f = objective(u);
  for (int it = 0; it < iterations; ++it) {
    const double r = c.residual(u);
    const Eigen::VectorXd g = c.gradient(u);
    const Eigen::VectorXd b = u + rho * r * g;
    if (b.norm() < 1e-14) break;
    // (I + rho g g^T) delta = -b, by Sherman-Morrison.
    const Eigen::VectorXd delta = -b + (rho * g.dot(b) / (1.0 + rho * g.squaredNorm())) * g;
    double step = 1.0;
    bool moved = false;
    for (int k = 0; k < 30; ++k) {
      const Torque trial = u + step * delta;
      const double ft = objective(trial);
      if (ft < f) {
        u = trial;
        f = ft;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved || step * delta.norm() < 1e-13) break;
  }
  return u;
}

// Newton steps along the constraint gradient to land on r(u) = 0.
inline Torque project_to_constraint(const SingleFeatureConstraint& c, Torque u, double tol,
                                    int iterations) {
  double r = c.residual(u);
  for (int it = 0; it < iterations && std::abs(r) > tol; ++it) {
    const Eigen::VectorXd g = c.gradient(u);
    const double gg = g.squaredNorm();
    if (gg < 1e-300) break;
    const Eigen::VectorXd delta = -(r / gg) * g;
    double step = 1.0;
    bool moved = false;
    for (int k = 0; k < 30; ++k) {
      const Torque trial = u + step * delta;
      const double rt = c.residual(trial);
      if (std::abs(rt) < std::abs(r)) {
        u = trial;
        r = rt;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return u;
}

}  // namespace detail

// min |u|^2  s.t.  Phi_i(xi_R + mu A^{-1} u e_t) = Phi_i(xi_H), searched over
// every interior waypoint t. The observed correction, when passed as
// `observed`, seeds the search and is itself a candidate.
inline OptimalCorrection optimal_correction(const Trajectory& xi_r, const Trajectory& xi_h,
                                            std::size_t feature, const DeformationShape& shape,
                                            const ArmModel& model, const FeatureSet& fs,
                                            const CorrectionSolverParams& params = {},
                                            const CorrectionEvent* observed = nullptr) {
  require(feature < fs.size(), ErrorCode::kIndexOutOfRange, "feature index out of range");
  require(xi_r.size() == xi_h.size() && xi_r.dof() == xi_h.dof(), ErrorCode::kDimensionMismatch,
          "original and deformed trajectories differ in shape");
  require(xi_r.horizon() == shape.horizon(), ErrorCode::kDimensionMismatch,
          "deformation shape built for a different horizon");
  const TrainedFeature& f = fs[feature];
  const double target = feature_sum(xi_h, f, model);
  const Eigen::Index dof = xi_r.dof();
  const double tol = params.feature_tolerance;

  OptimalCorrection best;
  best.torque = Torque::Zero(dof);
  best.waypoint = observed != nullptr ? observed->waypoint : 1;
  best.residual = std::abs(feature_sum(xi_r, f, model) - target);
  if (best.residual <= tol) {
    best.feasible = true;
    return best;
  }

  double best_norm = std::numeric_limits<double>::infinity();
  double best_infeasible = best.residual;
  OptimalCorrection fallback = best;

  auto consider = [&](std::size_t t, const Torque& u, double residual) {
    const double n = u.squaredNorm();
    if (residual <= tol) {
      if (n < best_norm) {
        best_norm = n;
        best = {true, t, u, n, residual};
      }
    } else if (residual < best_infeasible) {
      best_infeasible = residual;
      fallback = {false, t, u, n, residual};
    }
  };

  for (std::size_t t = 1; t < xi_r.horizon(); ++t) {
    const detail::SingleFeatureConstraint c(xi_r, f, model, shape, t, target);
    const Torque zero = Torque::Zero(dof);
    const double r0 = c.residual(zero);
    const Eigen::VectorXd g0 = c.gradient(zero);

    std::vector<Torque> starts;
    double scale = 0.5;
    if (g0.squaredNorm() > 1e-300) {
      Torque lin = -(r0 / g0.squaredNorm()) * g0;
      if (lin.allFinite()) {
        scale = std::max(scale, lin.norm());
        starts.push_back(lin);
      }
    }
    if (observed != nullptr && observed->torque.size() == dof) {
      if (observed->waypoint == t) consider(t, observed->torque, std::abs(c.residual(observed->torque)));
      starts.push_back(observed->torque);
      scale = std::max(scale, observed->torque.norm());
    }
    starts.push_back(zero);
    for (Eigen::Index j = 0; j < dof; ++j) {
      for (double sign : {1.0, -1.0}) {
        Torque s = Torque::Zero(dof);
        s[j] = sign * scale;
        starts.push_back(s);
      }
    }

    for (Torque u : starts) {
      for (double rho : params.penalties) {
        u = detail::minimize_penalty(c, u, rho, params.inner_iterations);
      }
      u = detail::project_to_constraint(c, u, 1e-3 * tol, params.polish_iterations);
      consider(t, u, std::abs(c.residual(u)));
    }
  }
  return best.feasible ? best : fallback;
}

// ---------------------------------------------------------------------------
// Offline maximum-likelihood weights from demonstrations.

struct FitParams {
  double regularization = 1e-2;
  // Perturbed copies of the demos added to the partition sum.
  int samples = 0;
  double sample_torque = 3.0;
  double sample_mu = 0.15;
  std::uint64_t seed = 0;
  int max_iterations = 5000;
  double tolerance = 1e-8;
  // Extra trajectories that only enter the partition sum.
  std::vector<Trajectory> partition_extra;
};

struct FitResult {
  Eigen::VectorXd theta;
  double log_likelihood = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Maximizes L(theta) = -sum_demo C(xi) - D log sum_j exp(-C(xi_j)) - reg |theta|^2
// over theta >= 0, where j ranges over demos, sampled perturbations and
// `partition_extra`. L is concave, so projected ascent finds the maximizer.
inline FitResult fit_offline(const std::vector<Trajectory>& demos, const FeatureSet& fs,
                             const ArmModel& model, const FitParams& params = {}) {
  require(!demos.empty(), ErrorCode::kInvalidArgument, "need at least one demonstration");
  require(params.regularization > 0.0, ErrorCode::kInvalidArgument,
          "regularization must be positive");
  const auto m = static_cast<Eigen::Index>(fs.size());

  std::vector<Eigen::VectorXd> demo_phi;
  std::vector<Eigen::VectorXd> partition_phi;
  for (const auto& d : demos) {
    demo_phi.push_back(feature_sum(d, fs, model));
    partition_phi.push_back(demo_phi.back());
  }
  if (params.samples > 0) {
    std::mt19937_64 rng(params.seed);
    const DeformationShape shape(demos.front().horizon(), params.sample_mu);
    for (int s = 0; s < params.samples; ++s) {
      const Trajectory& base = demos[static_cast<std::size_t>(s) % demos.size()];
      const std::size_t t = 1 + static_cast<std::size_t>(rng() % (base.horizon() - 1));
      Torque u(base.dof());
      for (Eigen::Index j = 0; j < u.size(); ++j) {
        u[j] = params.sample_torque * detail::signed_unit(rng);
      }
      partition_phi.push_back(feature_sum(deform(base, t, u, shape), fs, model));
    }
  }
  for (const auto& extra : params.partition_extra) {
    partition_phi.push_back(feature_sum(extra, fs, model));
  }
  Eigen::VectorXd demo_total = Eigen::VectorXd::Zero(m);
  for (const auto& phi : demo_phi) demo_total += phi;
  const double d = static_cast<double>(demos.size());

  auto evaluate = [&](const Eigen::VectorXd& theta, Eigen::VectorXd* grad) {
    double max_exp = -std::numeric_limits<double>::infinity();
    for (const auto& phi : partition_phi) max_exp = std::max(max_exp, -theta.dot(phi));
    double z = 0.0;
    Eigen::VectorXd expect = Eigen::VectorXd::Zero(m);
    for (const auto& phi : partition_phi) {
      const double w = std::exp(-theta.dot(phi) - max_exp);
      z += w;
      expect += w * phi;
    }
    const double log_z = max_exp + std::log(z);
    const double value = -theta.dot(demo_total) - d * log_z - params.regularization * theta.squaredNorm();
    if (!std::isfinite(value)) throw Error(ErrorCode::kNonFinite, "likelihood is not finite");
    if (grad != nullptr) {
      *grad = -demo_total + d * expect / z - 2.0 * params.regularization * theta;
    }
    return value;
  };

  FitResult result;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd grad;
  double value = evaluate(theta, &grad);
  double step = 1.0;
  int it = 0;
  for (; it < params.max_iterations; ++it) {
    const Eigen::VectorXd projected = (theta + grad).cwiseMax(0.0) - theta;
    if (projected.norm() <= params.tolerance) {
      result.converged = true;
      break;
    }
    bool accepted = false;
    step *= 2.0;
    for (int k = 0; k < 60; ++k) {
      const Eigen::VectorXd trial = (theta + step * grad).cwiseMax(0.0);
      Eigen::VectorXd trial_grad;
      const double trial_value = evaluate(trial, &trial_grad);
      if (trial_value >= value + 1e-4 * grad.dot(trial - theta)) {
        theta = trial;
        value = trial_value;
        grad = trial_grad;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.converged = true;
      break;
    }
  }
  result.theta = theta;
  result.log_likelihood = value;
  result.gradient_norm = ((theta + grad).cwiseMax(0.0) - theta).norm();
  result.iterations = it;
  return result;
}

// ---------------------------------------------------------------------------
// Detection: how well each feature explains an observed correction.

struct Detection {
  std::vector<double> beta;
  std::vector<double> optimal_norm_sq;
  std::vector<bool> feasible;
  double observed_norm_sq = 0.0;
  // Best available explanation: max over features.
  double beta_max = 0.0;
  std::size_t best_feature = 0;

  bool misaligned(const LearnerParams& p) const { return beta_max < p.beta_threshold; }
};

inline Detection detect_misalignment(const Trajectory& xi_r, const Trajectory& xi_h,
                                     const CorrectionEvent& observed, const FeatureSet& fs,
                                     const ArmModel& model, const DeformationShape& shape,
                                     const LearnerParams& learner,
                                     const CorrectionSolverParams& solver = {}) {
  Detection d;
  d.observed_norm_sq = observed.torque.squaredNorm();
  for (std::size_t i = 0; i < fs.size(); ++i) {
    const OptimalCorrection u = optimal_correction(xi_r, xi_h, i, shape, model, fs, solver, &observed);
    const double norm_sq = u.feasible ? u.norm_sq : 0.0;
    d.optimal_norm_sq.push_back(norm_sq);
    d.feasible.push_back(u.feasible);
    d.beta.push_back(u.feasible ? estimate_beta(d.observed_norm_sq, norm_sq, learner) : 0.0);
    if (i == 0 || d.beta.back() > d.beta_max) {
      d.beta_max = d.beta.back();
      d.best_feature = i;
    }
  }
  return d;
}

}  // namespace realign

#endif  // REALIGN_REWARD_LEARNING_HPP_
