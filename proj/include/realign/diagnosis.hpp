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

// Misalignment diagnosis and correction.
//
// When no feature explains a correction, each feature is tested against the
// hypothesis that it belongs to a moved object: both trajectories are moved
// back to where the object sat during training (xi + delta, with
// delta = o_train - o_test) and the minimum-effort explanation is solved
// there. Features whose shifted confidence clears the threshold get their
// anchors moved by -delta so they peak at the object's new position. If no
// feature qualifies, the feature is missing and the human is asked for data.

#ifndef REALIGN_DIAGNOSIS_HPP_
#define REALIGN_DIAGNOSIS_HPP_

#include <algorithm>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "realign/common.hpp"
#include "realign/features.hpp"
#include "realign/kinematics.hpp"
#include "realign/reward_learning.hpp"
#include "realign/trajectory.hpp"

namespace realign {

enum class Verdict { kShiftedWithObject, kUnrelated };

inline const char* to_string(Verdict v) {
  return v == Verdict::kShiftedWithObject ? "ShiftedWithObject" : "Unrelated";
}

enum class AlignmentPolicy { kPermissive, kConservative };

inline const char* to_string(AlignmentPolicy p) {
  return p == AlignmentPolicy::kPermissive ? "permissive" : "conservative";
}

struct FeatureDiagnosis {
  std::string feature_id;
  Vec2 delta = Vec2::Zero();
  double beta_delta = 0.0;
  // |u*_{H delta}|; zero when no explanation was found.
  double optimal_norm = 0.0;
  Verdict verdict = Verdict::kUnrelated;
  // The shifted trajectory left the workspace.
  bool unreachable = false;
  // No single-waypoint correction matched the shifted feature change.
  bool infeasible = false;
};

struct DiagnosisReport {
  // Object whose displacement was tested; empty when nothing moved.
  std::string object_id;
  Vec2 delta = Vec2::Zero();
  std::vector<FeatureDiagnosis> per_feature;
  bool missing_feature = true;
  std::vector<std::string> aligned_feature_ids;

  // missing_feature iff every verdict is Unrelated; aligned ids are a
  // subset of the ShiftedWithObject verdicts.
  bool consistent() const {
    const bool all_unrelated =
        std::all_of(per_feature.begin(), per_feature.end(),
                    [](const FeatureDiagnosis& d) { return d.verdict == Verdict::kUnrelated; });
    if (missing_feature != all_unrelated) return false;
    for (const auto& id : aligned_feature_ids) {
      auto it = std::find_if(per_feature.begin(), per_feature.end(),
                             [&](const FeatureDiagnosis& d) { return d.feature_id == id; });
      if (it == per_feature.end() || it->verdict != Verdict::kShiftedWithObject) return false;
    }
    return true;
  }
};

// Workspace box in which the human is asked to label the missing feature.
struct MissingFeatureQuery {
  Vec2 center = Vec2::Zero();
  double half_extent = 1.0;
  int sample_count = 64;

  Vec2 lower() const { return center - Vec2::Constant(half_extent); }
  Vec2 upper() const { return center + Vec2::Constant(half_extent); }

  void validate() const {
    require(center.allFinite() && std::isfinite(half_extent) && half_extent > 0.0,
            ErrorCode::kInvalidArgument, "query box must be finite and non-empty");
    require(sample_count > 0, ErrorCode::kInvalidArgument, "query needs a positive sample count");
  }
};

struct DeltaHypothesis {
  std::string object_id;
  Vec2 delta = Vec2::Zero();
  // Filled in by diagnose_unknown_object.
  double best_beta_delta = 0.0;
};

struct DiagnosisParams {
  AlignmentPolicy policy = AlignmentPolicy::kPermissive;
  CorrectionSolverParams solver;
  IkParams ik;
  double query_half_extent = 1.0;
  int query_samples = 64;

  bool operator==(const DiagnosisParams& o) const {
    return policy == o.policy && solver == o.solver && ik == o.ik &&
           query_half_extent == o.query_half_extent && query_samples == o.query_samples;
  }
};

struct ShiftedCorrection {
  OptimalCorrection correction;
  bool unreachable = false;
};

// min |u|^2 s.t. Phi_i(xi_R + delta + mu A^{-1} u) = Phi_i(xi_H + delta).
// Features whose anchors are tied to objects are shifted on the feature side
// instead (only the anchors of `object_id` move, by -delta). Both pose the
// same feature targets; the torques differ with the joint path's Jacobian.
inline ShiftedCorrection shifted_optimal_correction(
    const Trajectory& xi_r, const Trajectory& xi_h, const Vec2& delta, std::size_t feature,
    const DeformationShape& shape, const ArmModel& model, const FeatureSet& fs,
    const CorrectionSolverParams& solver = {}, const IkParams& ik = {},
    const CorrectionEvent* observed = nullptr, const std::string& object_id = {}) {
  require(feature < fs.size(), ErrorCode::kIndexOutOfRange, "feature index out of range");
  ShiftedCorrection out;
  if (!object_id.empty() && fs[feature].tagged()) {
    const FeatureSet moved = fs.with_replaced(feature, align_feature(fs[feature], -delta, object_id));
    out.correction = optimal_correction(xi_r, xi_h, feature, shape, model, moved, solver, observed);
    return out;
  }
  try {
    const Trajectory shifted_r = shift_trajectory_end_effector(model, xi_r, delta, ik);
    const Trajectory shifted_h = shift_trajectory_end_effector(model, xi_h, delta, ik);
    out.correction =
        optimal_correction(shifted_r, shifted_h, feature, shape, model, fs, solver, observed);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUnreachable && e.code() != ErrorCode::kNoConvergence) throw;
    out.unreachable = true;
    out.correction.feasible = false;
    out.correction.torque = Torque::Zero(xi_r.dof());
  }
  return out;
}

// Same clamps as estimate_beta.
inline double estimate_beta_delta(double observed_norm_sq, double shifted_optimal_norm_sq,
                                  const LearnerParams& p) {
  return estimate_beta(observed_norm_sq, shifted_optimal_norm_sq, p);
}

inline FeatureDiagnosis diagnose_feature(const Trajectory& xi_r, const CorrectionEvent& observed,
                                         const Trajectory& xi_h, const FeatureSet& fs,
                                         std::size_t feature, const Vec2& delta,
                                         const std::string& object_id, const ArmModel& model,
                                         const DeformationShape& shape,
                                         const LearnerParams& learner,
                                         const DiagnosisParams& params) {
  FeatureDiagnosis d;
  d.feature_id = fs[feature].id;
  d.delta = delta;
  const ShiftedCorrection sc = shifted_optimal_correction(
      xi_r, xi_h, delta, feature, shape, model, fs, params.solver, params.ik, &observed, object_id);
  d.unreachable = sc.unreachable;
  d.infeasible = !sc.unreachable && !sc.correction.feasible;
  if (sc.correction.feasible) {
    d.optimal_norm = std::sqrt(sc.correction.norm_sq);
    d.beta_delta =
        estimate_beta_delta(observed.torque.squaredNorm(), sc.correction.norm_sq, learner);
  }
  // A feature the correction left unchanged (zero optimal push) cannot have
  // moved with the object, whatever the clamp gives for beta.
  // Neither can a tagged feature with no anchor on the object under test.
  const bool follows =
      object_id.empty() || !fs[feature].tagged() ||
      std::any_of(fs[feature].anchors.begin(), fs[feature].anchors.end(),
                  [&](const FeatureAnchor& a) { return a.object_id == object_id; });
  const bool moved = follows && delta.squaredNorm() > 0.0;
  const bool explains = sc.correction.feasible && sc.correction.norm_sq > 0.0;
  d.verdict = (moved && explains && d.beta_delta >= learner.beta_threshold)
                  ? Verdict::kShiftedWithObject
                  : Verdict::kUnrelated;
  return d;
}

namespace detail {

// Indices to act on under the alignment policy: every ShiftedWithObject
// verdict, or only the one with the largest beta_delta.
inline std::vector<std::size_t> select_for_alignment(const std::vector<FeatureDiagnosis>& diags,
                                                     const std::vector<std::size_t>& indices,
                                                     AlignmentPolicy policy) {
  std::vector<std::size_t> picked;
  for (std::size_t k = 0; k < diags.size(); ++k) {
    if (diags[k].verdict != Verdict::kShiftedWithObject) continue;
    if (policy == AlignmentPolicy::kPermissive || picked.empty()) {
      picked.push_back(k);
    } else if (diags[k].beta_delta > diags[picked.front()].beta_delta) {
      picked.front() = k;
    }
  }
  for (auto& k : picked) k = indices[k];
  return picked;
}

inline MissingFeatureQuery make_query(const Trajectory& xi_r, const CorrectionEvent& observed,
                                      const ArmModel& model, const DiagnosisParams& params) {
  MissingFeatureQuery q;
  q.center = end_effector(model, xi_r[observed.waypoint]);
  q.half_extent = params.query_half_extent;
  q.sample_count = params.query_samples;
  // Keep the box inside the square that bounds the workspace.
  const double r = model.reach();
  const Vec2 lo = model.base - Vec2::Constant(r - q.half_extent);
  const Vec2 hi = model.base + Vec2::Constant(r - q.half_extent);
  if ((hi - lo).minCoeff() >= 0.0) q.center = q.center.cwiseMax(lo).cwiseMin(hi);
  return q;
}

}  // namespace detail

struct DiagnosisOutcome {
  FeatureSet features;
  // One report per object tested, in processing order.
  std::vector<DiagnosisReport> reports;
  bool missing_feature = true;
  std::vector<std::string> aligned_feature_ids;
  std::optional<MissingFeatureQuery> query;
  // Confidence recomputed on the aligned features after each object pass.
  std::vector<double> recomputed_beta;
};

// Moves every feature with a ShiftedWithObject verdict by -delta.
// `features` is replaced as a whole; a feature is never half-aligned.
//
// Per-feature displacements come from each feature's own training snapshot
// (falling back to `env_train`), so a feature aligned earlier no longer
// sees its object as moved. Objects are processed in test-environment
// order and processing stops once the recomputed confidence clears the
// threshold.
inline DiagnosisOutcome diagnose_and_correct(const Trajectory& xi_r, const CorrectionEvent& observed,
                                             const Trajectory& xi_h, const FeatureSet& fs,
                                             const Environment& env_train,
                                             const Environment& env_test, const ArmModel& model,
                                             const DeformationShape& shape,
                                             const LearnerParams& learner,
                                             const DiagnosisParams& params = {}) {
  check_correction(xi_r, observed);
  DiagnosisOutcome out;
  out.features = fs;

  auto feature_delta = [&](const TrainedFeature& f, const ObjectPose& now) -> std::optional<Vec2> {
    const ObjectPose* then = f.training_env.find(now.id);
    if (then == nullptr) then = env_train.find(now.id);
    if (then == nullptr) return std::nullopt;
    return then->position - now.position;
  };

  std::vector<const ObjectPose*> moved;
  for (const auto& obj : env_test.objects) {
    for (const auto& f : fs) {
      const auto d = feature_delta(f, obj);
      if (d && d->squaredNorm() > 0.0) {
        moved.push_back(&obj);
        break;
      }
    }
  }

  std::vector<bool> touched(fs.size(), false);
  if (moved.empty()) {
    DiagnosisReport report;
    for (std::size_t i = 0; i < fs.size(); ++i) {
      report.per_feature.push_back(diagnose_feature(xi_r, observed, xi_h, fs, i, Vec2::Zero(), {},
                                                    model, shape, learner, params));
    }
    report.missing_feature = true;
    out.reports.push_back(std::move(report));
  }

  for (const ObjectPose* obj : moved) {
    DiagnosisReport report;
    report.object_id = obj->id;
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < out.features.size(); ++i) {
      if (i < touched.size() && touched[i]) continue;
      const Vec2 delta = feature_delta(out.features[i], *obj).value_or(Vec2::Zero());
      if (delta.squaredNorm() > report.delta.squaredNorm()) report.delta = delta;
      report.per_feature.push_back(diagnose_feature(xi_r, observed, xi_h, out.features, i, delta,
                                                    obj->id, model, shape, learner, params));
      indices.push_back(i);
    }
    const auto picked = detail::select_for_alignment(report.per_feature, indices, params.policy);
    FeatureSet next = out.features;
    for (std::size_t i : picked) {
      const Vec2 delta = feature_delta(out.features[i], *obj).value_or(Vec2::Zero());
      next = next.with_replaced(i, align_feature(out.features[i], -delta, obj->id));
      touched[i] = true;
      report.aligned_feature_ids.push_back(out.features[i].id);
      out.aligned_feature_ids.push_back(out.features[i].id);
    }
    report.missing_feature = picked.empty();
    out.features = std::move(next);
    out.reports.push_back(std::move(report));
    if (!picked.empty()) {
      const Detection again = detect_misalignment(xi_r, xi_h, observed, out.features, model, shape,
                                                  learner, params.solver);
      out.recomputed_beta.push_back(again.beta_max);
      if (!again.misaligned(learner)) break;
    }
  }

  out.missing_feature = out.aligned_feature_ids.empty();
  if (out.missing_feature) out.query = detail::make_query(xi_r, observed, model, params);
  return out;
}

// Hypotheses for a new object at `position`: it could be a behavior-invariant
// copy of any training object, delta = o_i - position.
inline std::vector<DeltaHypothesis> new_object_hypotheses(const Environment& env_train,
                                                          const Vec2& position) {
  std::vector<DeltaHypothesis> out;
  for (const auto& o : env_train.objects) out.push_back({o.id, o.position - position, 0.0});
  return out;
}

struct UnknownObjectOutcome {
  std::vector<DeltaHypothesis> hypotheses;
  std::size_t best = 0;
  DiagnosisReport report;
  bool missing_feature = true;
  std::optional<MissingFeatureQuery> query;
};

// Runs the per-feature shifted confidence for every hypothesis and keeps the
// one whose best feature explains the correction most confidently. Ties go
// to the smaller |delta|, then to list order.
inline UnknownObjectOutcome diagnose_unknown_object(
    const Trajectory& xi_r, const CorrectionEvent& observed, const Trajectory& xi_h,
    const FeatureSet& fs, std::vector<DeltaHypothesis> hypotheses, const ArmModel& model,
    const DeformationShape& shape, const LearnerParams& learner, const DiagnosisParams& params = {}) {
  require(!hypotheses.empty(), ErrorCode::kInvalidArgument, "need at least one delta hypothesis");
  check_correction(xi_r, observed);
  UnknownObjectOutcome out;
  std::vector<DiagnosisReport> reports;
  for (auto& h : hypotheses) {
    DiagnosisReport report;
    report.object_id = h.object_id;
    report.delta = h.delta;
    std::vector<std::size_t> indices;
    double top = 0.0;
    for (std::size_t i = 0; i < fs.size(); ++i) {
      report.per_feature.push_back(diagnose_feature(xi_r, observed, xi_h, fs, i, h.delta, h.object_id, model,
                                                    shape, learner, params));
      indices.push_back(i);
      top = std::max(top, report.per_feature.back().beta_delta);
    }
    h.best_beta_delta = top;
    for (std::size_t i : detail::select_for_alignment(report.per_feature, indices, params.policy)) {
      report.aligned_feature_ids.push_back(fs[i].id);
    }
    report.missing_feature = report.aligned_feature_ids.empty();
    reports.push_back(std::move(report));
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < hypotheses.size(); ++k) {
    const auto& a = hypotheses[k];
    const auto& b = hypotheses[best];
    if (a.best_beta_delta > b.best_beta_delta ||
        (a.best_beta_delta == b.best_beta_delta && a.delta.norm() < b.delta.norm())) {
      best = k;
    }
  }
  out.hypotheses = std::move(hypotheses);
  out.best = best;
  out.report = std::move(reports[best]);
  out.missing_feature = out.report.missing_feature;
  if (out.missing_feature) out.query = detail::make_query(xi_r, observed, model, params);
  return out;
}

// Adds one clone per aligned feature of `report`, translated by -delta so
// it peaks at the new object (index M+1, M+2, ...).
inline FeatureSet clone_for_new_object(const FeatureSet& fs, const DiagnosisReport& report,
                                       const std::string& new_object_id) {
  FeatureSet out = fs;
  for (const auto& id : report.aligned_feature_ids) {
    const auto i = fs.index_of(id);
    if (!i) continue;
    out = out.with_appended(clone_feature_for_new_object(
        fs[*i], -report.delta, out.fresh_id(id + "@" + new_object_id)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Missing-feature learning from labelled samples.

struct FeatureSample {
  Vec2 point = Vec2::Zero();
  double value = 0.0;
};

struct LearnedFeature {
  TrainedFeature feature;
  double rmse = 0.0;
};

namespace detail {

struct RadialFit {
  Vec2 center;
  double log_sigma;
  double sse;
};

inline double radial_sse(const std::vector<FeatureSample>& samples, const Vec2& c, double log_sigma) {
  const double s2 = std::exp(2.0 * log_sigma);
  double sse = 0.0;
  for (const auto& s : samples) {
    const double r = std::exp(-(s.point - c).squaredNorm() / (2.0 * s2)) - s.value;
    sse += r * r;
  }
  return sse;
}

// Levenberg-Marquardt on (cx, cy, log sigma).
inline RadialFit refine_radial(const std::vector<FeatureSample>& samples, RadialFit fit) {
  double damping = 1e-3;
  for (int it = 0; it < 300; ++it) {
    const double s2 = std::exp(2.0 * fit.log_sigma);
    Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
    Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
    for (const auto& s : samples) {
      const Vec2 d = s.point - fit.center;
      const double v = std::exp(-d.squaredNorm() / (2.0 * s2));
      const double r = v - s.value;
      Eigen::Vector3d g;
      g << v * d.x() / s2, v * d.y() / s2, v * d.squaredNorm() / s2;
      jtj += g * g.transpose();
      jtr += g * r;
    }
    bool improved = false;
    for (int k = 0; k < 20; ++k) {
      Eigen::Matrix3d a = jtj;
      a.diagonal() += damping * (jtj.diagonal().array() + 1e-12).matrix();
      const Eigen::Vector3d step = -a.ldlt().solve(jtr);
      RadialFit trial{fit.center + step.head<2>(), fit.log_sigma + step[2], 0.0};
      trial.sse = radial_sse(samples, trial.center, trial.log_sigma);
      if (std::isfinite(trial.sse) && trial.sse < fit.sse) {
        const double gain = fit.sse - trial.sse;
        fit = trial;
        damping = std::max(damping * 0.3, 1e-12);
        improved = true;
        if (gain < 1e-18) return fit;
        break;
      }
      damping *= 10.0;
    }
    if (!improved) break;
  }
  return fit;
}

}  // namespace detail

// Fits anchor and width of a radial basis to the human's labels by
// grid-seeded nonlinear least squares.
inline LearnedFeature learn_missing_feature(const MissingFeatureQuery& query,
                                            const std::vector<FeatureSample>& samples,
                                            std::string id = "learned") {
  query.validate();
  require(samples.size() >= 8, ErrorCode::kInvalidArgument, "need at least 8 samples");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : samples) {
    require(s.point.allFinite() && std::isfinite(s.value), ErrorCode::kNonFinite,
            "samples must be finite");
    lo = std::min(lo, s.value);
    hi = std::max(hi, s.value);
  }
  if (hi - lo <= 1e-9) {
    throw Error(ErrorCode::kDegenerateFit, "all sample values are equal");
  }

  std::vector<std::size_t> order(samples.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return samples[a].value > samples[b].value;
  });
  std::vector<Vec2> centers;
  for (std::size_t k = 0; k < std::min<std::size_t>(5, order.size()); ++k) {
    centers.push_back(samples[order[k]].point);
  }
  Vec2 weighted = Vec2::Zero();
  double wsum = 0.0;
  for (const auto& s : samples) {
    const double w = std::pow(std::max(s.value - lo, 0.0), 4);
    weighted += w * s.point;
    wsum += w;
  }
  if (wsum > 0.0) centers.push_back(weighted / wsum);

  std::vector<detail::RadialFit> seeds;
  for (const auto& c : centers) {
    for (double sigma : {0.1, 0.15, 0.25, 0.35, 0.5, 0.7, 1.0, 1.5}) {
      seeds.push_back({c, std::log(sigma), detail::radial_sse(samples, c, std::log(sigma))});
    }
  }
  std::stable_sort(seeds.begin(), seeds.end(),
                   [](const auto& a, const auto& b) { return a.sse < b.sse; });
  detail::RadialFit best = seeds.front();
  for (std::size_t k = 0; k < std::min<std::size_t>(3, seeds.size()); ++k) {
    const detail::RadialFit refined = detail::refine_radial(samples, seeds[k]);
    if (refined.sse < best.sse) best = refined;
  }

  LearnedFeature out;
  out.feature = TrainedFeature::radial(std::move(id), best.center, std::exp(best.log_sigma));
  out.rmse = std::sqrt(best.sse / static_cast<double>(samples.size()));
  return out;
}

}  // namespace realign

#endif  // REALIGN_DIAGNOSIS_HPP_
