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

// Environments, trained end-effector features and their alignment.
//
// A TrainedFeature is anchored in absolute workspace coordinates captured at
// training time. Its value never looks at the current environment, so when
// an object moves the feature keeps peaking where the object used to be.
// Alignment translates the anchors; the accumulated translation is kept in
// each anchor's `offset`.

#ifndef REALIGN_FEATURES_HPP_
#define REALIGN_FEATURES_HPP_

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "realign/common.hpp"
#include "realign/kinematics.hpp"

namespace realign {

struct ObjectPose {
  std::string id;
  Vec2 position = Vec2::Zero();

  bool operator==(const ObjectPose& o) const { return id == o.id && position == o.position; }
};

struct Environment {
  std::string label;
  std::vector<ObjectPose> objects;

  const ObjectPose* find(const std::string& id) const {
    auto it = std::find_if(objects.begin(), objects.end(),
                           [&](const ObjectPose& o) { return o.id == id; });
    return it == objects.end() ? nullptr : &*it;
  }

  ObjectPose* find(const std::string& id) {
    auto it = std::find_if(objects.begin(), objects.end(),
                           [&](const ObjectPose& o) { return o.id == id; });
    return it == objects.end() ? nullptr : &*it;
  }

  const ObjectPose& at(const std::string& id) const {
    const ObjectPose* o = find(id);
    if (o == nullptr) throw Error(ErrorCode::kUnknownObject, "no object '" + id + "'");
    return *o;
  }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& o : objects) {
      require(seen.insert(o.id).second, ErrorCode::kInvalidArgument,
              "duplicate object id '" + o.id + "'");
      require(o.position.allFinite(), ErrorCode::kNonFinite,
              "object '" + o.id + "' has a non-finite position");
    }
  }

  bool operator==(const Environment& o) const {
    return label == o.label && objects == o.objects;
  }
};

// One radial-basis factor of a feature. `object_id` optionally ties the
// anchor to an object so alignment for that object only moves this factor.
struct FeatureAnchor {
  Vec2 position = Vec2::Zero();
  std::string object_id;
  Vec2 offset = Vec2::Zero();

  Vec2 center() const { return position + offset; }
  bool operator==(const FeatureAnchor& o) const {
    return position == o.position && object_id == o.object_id && offset == o.offset;
  }
};

// phi(p) = prod_k exp(-|p - c_k|^2 / (2 sigma^2)), p the end-effector.
// With one anchor this is the isotropic radial basis; two anchors give a
// multi-object feature.
struct TrainedFeature {
  std::string id;
  double sigma = 0.5;
  std::vector<FeatureAnchor> anchors;
  Environment training_env;

  static TrainedFeature radial(std::string id, Vec2 anchor, double sigma,
                               Environment training_env = {}, std::string object_id = {}) {
    TrainedFeature f;
    f.id = std::move(id);
    f.sigma = sigma;
    f.anchors.push_back(FeatureAnchor{anchor, std::move(object_id), Vec2::Zero()});
    f.training_env = std::move(training_env);
    f.validate();
    return f;
  }

  void validate() const {
    require(!id.empty(), ErrorCode::kInvalidArgument, "feature id must not be empty");
    require(std::isfinite(sigma) && sigma > 0.0, ErrorCode::kInvalidArgument,
            "feature '" + id + "' needs a positive width");
    require(!anchors.empty(), ErrorCode::kInvalidArgument,
            "feature '" + id + "' has no anchor");
    for (const auto& a : anchors) {
      require(a.position.allFinite() && a.offset.allFinite(), ErrorCode::kNonFinite,
              "feature '" + id + "' has a non-finite anchor");
    }
  }

  // Accumulated translation of the first anchor.
  const Vec2& alignment_offset() const { return anchors.front().offset; }
  Vec2 peak() const { return anchors.front().center(); }

  bool tagged() const {
    return std::any_of(anchors.begin(), anchors.end(),
                       [](const FeatureAnchor& a) { return !a.object_id.empty(); });
  }

  bool operator==(const TrainedFeature& o) const {
    return id == o.id && sigma == o.sigma && anchors == o.anchors &&
           training_env == o.training_env;
  }
};

inline double eval_feature(const TrainedFeature& f, const Vec2& ee) {
  double sq = 0.0;
  for (const auto& a : f.anchors) sq += (ee - (a.position + a.offset)).squaredNorm();
  return std::exp(-sq / (2.0 * f.sigma * f.sigma));
}

inline double eval_feature(const TrainedFeature& f, const ArmModel& model, const JointConfig& q) {
  return eval_feature(f, end_effector(model, q));
}

// d(phi)/d(end-effector).
inline Vec2 feature_gradient(const TrainedFeature& f, const Vec2& ee) {
  const double value = eval_feature(f, ee);
  Vec2 sum = Vec2::Zero();
  for (const auto& a : f.anchors) sum += ee - (a.position + a.offset);
  return -value / (f.sigma * f.sigma) * sum;
}

// d(phi)/d(q) via the Jacobian transpose.
inline Eigen::VectorXd feature_joint_gradient(const TrainedFeature& f, const ArmModel& model,
                                              const JointConfig& q) {
  return jacobian(model, q).transpose() * feature_gradient(f, end_effector(model, q));
}

// Translates the feature by `shift` in the workspace. When `object_id` is
// given and the feature has anchors tied to objects, only the anchors tied
// to that object move; untagged features move as a whole.
inline TrainedFeature align_feature(const TrainedFeature& f, const Vec2& shift,
                                    const std::string& object_id = {}) {
  require(shift.allFinite(), ErrorCode::kNonFinite, "alignment shift must be finite");
  TrainedFeature out = f;
  const bool selective = !object_id.empty() && f.tagged();
  for (auto& a : out.anchors) {
    if (!selective || a.object_id == object_id) a.offset = a.offset + shift;
  }
  if (!object_id.empty()) {
    if (ObjectPose* o = out.training_env.find(object_id)) o->position += shift;
  }
  return out;
}

// Aligned copy under a new id; the source feature is left untouched.
inline TrainedFeature clone_feature_for_new_object(const TrainedFeature& f, const Vec2& shift,
                                                   std::string new_id) {
  TrainedFeature out = align_feature(f, shift);
  out.id = std::move(new_id);
  return out;
}

class FeatureSet {
 public:
  FeatureSet() = default;
  explicit FeatureSet(std::vector<TrainedFeature> features) : features_(std::move(features)) {
    validate();
  }

  std::size_t size() const { return features_.size(); }
  bool empty() const { return features_.empty(); }
  const TrainedFeature& operator[](std::size_t i) const { return features_[i]; }
  const std::vector<TrainedFeature>& features() const { return features_; }
  auto begin() const { return features_.begin(); }
  auto end() const { return features_.end(); }

  std::optional<std::size_t> index_of(const std::string& id) const {
    for (std::size_t i = 0; i < features_.size(); ++i) {
      if (features_[i].id == id) return i;
    }
    return std::nullopt;
  }

  FeatureSet with_replaced(std::size_t i, TrainedFeature f) const {
    require(i < features_.size(), ErrorCode::kIndexOutOfRange, "feature index out of range");
    auto copy = features_;
    copy[i] = std::move(f);
    return FeatureSet(std::move(copy));
  }

  FeatureSet with_appended(TrainedFeature f) const {
    auto copy = features_;
    copy.push_back(std::move(f));
    return FeatureSet(std::move(copy));
  }

  // An id not yet used in the set, built from `base`.
  std::string fresh_id(const std::string& base) const {
    if (!index_of(base)) return base;
    for (std::size_t n = 2;; ++n) {
      std::string candidate = base + "#" + std::to_string(n);
      if (!index_of(candidate)) return candidate;
    }
  }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& f : features_) {
      f.validate();
      require(seen.insert(f.id).second, ErrorCode::kInvalidArgument,
              "duplicate feature id '" + f.id + "'");
    }
  }

  bool operator==(const FeatureSet& o) const { return features_ == o.features_; }

 private:
  std::vector<TrainedFeature> features_;
};

// Appends a clone of feature `i` translated by `shift` (index M+1).
inline FeatureSet add_cloned_feature(const FeatureSet& fs, std::size_t i, const Vec2& shift) {
  require(i < fs.size(), ErrorCode::kIndexOutOfRange, "feature index out of range");
  return fs.with_appended(
      clone_feature_for_new_object(fs[i], shift, fs.fresh_id(fs[i].id + "+clone")));
}

struct ObjectDisplacement {
  std::string object_id;
  Vec2 delta = Vec2::Zero();
};

// delta_i = o_i(train) - o_i(test), in training-object order.
inline std::vector<ObjectDisplacement> object_displacements(const Environment& train,
                                                            const Environment& test) {
  if (train.objects.size() != test.objects.size()) {
    throw Error(ErrorCode::kUnknownObject, "environments hold different object sets");
  }
  std::vector<ObjectDisplacement> out;
  out.reserve(train.objects.size());
  for (const auto& o : train.objects) {
    const ObjectPose* moved = test.find(o.id);
    if (moved == nullptr) {
      throw Error(ErrorCode::kUnknownObject, "object '" + o.id + "' missing from test env");
    }
    out.push_back({o.id, o.position - moved->position});
  }
  return out;
}

}  // namespace realign

#endif  // REALIGN_FEATURES_HPP_
