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

// JSON encodings of the core types and a strict reader that rejects
// unknown fields by path.

#ifndef REALIGN_JSON_IO_HPP_
#define REALIGN_JSON_IO_HPP_

#include <initializer_list>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "realign/common.hpp"
#include "realign/diagnosis.hpp"
#include "realign/features.hpp"
#include "realign/waypoints.hpp"

namespace realign {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Writers.

inline Json to_json(const Vec2& v) { return Json::array({v.x(), v.y()}); }

inline Json vector_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Json to_json(const Trajectory& traj) {
  Json out = Json::array();
  for (const auto& q : traj.waypoints) out.push_back(vector_json(q));
  return out;
}

inline Json to_json(const Environment& env) {
  Json objects = Json::array();
  for (const auto& o : env.objects) objects.push_back({{"id", o.id}, {"position", to_json(o.position)}});
  return {{"label", env.label}, {"objects", objects}};
}

inline Json to_json(const TrainedFeature& f, bool with_training_env = true) {
  Json anchors = Json::array();
  for (const auto& a : f.anchors) {
    Json j = {{"position", to_json(a.position)}, {"offset", to_json(a.offset)}};
    if (!a.object_id.empty()) j["object_id"] = a.object_id;
    anchors.push_back(j);
  }
  Json out = {{"id", f.id}, {"sigma", f.sigma}, {"anchors", anchors}};
  if (with_training_env) out["training_env"] = to_json(f.training_env);
  return out;
}

inline Json to_json(const FeatureSet& fs) {
  Json out = Json::array();
  for (const auto& f : fs) out.push_back(to_json(f));
  return out;
}

inline Json to_json(const FeatureDiagnosis& d) {
  return {{"feature_id", d.feature_id},   {"delta", to_json(d.delta)},
          {"beta_delta", d.beta_delta},   {"optimal_norm", d.optimal_norm},
          {"verdict", to_string(d.verdict)}, {"unreachable", d.unreachable},
          {"infeasible", d.infeasible}};
}

inline Json to_json(const DiagnosisReport& r) {
  Json per = Json::array();
  for (const auto& d : r.per_feature) per.push_back(to_json(d));
  return {{"object_id", r.object_id},
          {"delta", to_json(r.delta)},
          {"per_feature", per},
          {"missing_feature", r.missing_feature},
          {"aligned_feature_ids", r.aligned_feature_ids}};
}

inline Json to_json(const MissingFeatureQuery& q) {
  return {{"center", to_json(q.center)},
          {"half_extent", q.half_extent},
          {"sample_count", q.sample_count}};
}

// ---------------------------------------------------------------------------
// Strict reader. Every accessor names the JSON path on failure.

class JsonReader {
 public:
  JsonReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const Json& raw() const { return j_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::kSchema, path_ + ": " + what);
  }

  // Rejects any key outside `allowed`.
  const JsonReader& only(std::initializer_list<const char*> allowed) const {
    if (!j_.is_object()) fail("expected an object");
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!keys.count(it.key())) {
        throw Error(ErrorCode::kSchema, "unknown field '" + it.key() + "' at " + path_);
      }
    }
    return *this;
  }

  bool has(const char* key) const { return j_.is_object() && j_.contains(key) && !j_.at(key).is_null(); }

  JsonReader at(const char* key) const {
    if (!j_.is_object()) fail("expected an object");
    if (!j_.contains(key)) {
      throw Error(ErrorCode::kSchema, "missing field '" + std::string(key) + "' at " + path_);
    }
    return {j_.at(key), path_ + "." + key};
  }

  JsonReader at(std::size_t i) const {
    return {j_.at(i), path_ + "[" + std::to_string(i) + "]"};
  }

  std::size_t size() const {
    if (!j_.is_array()) fail("expected an array");
    return j_.size();
  }

  double number() const {
    if (!j_.is_number()) fail("expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }

  long integer() const {
    if (!j_.is_number_integer()) fail("expected an integer");
    return j_.get<long>();
  }

  std::uint64_t unsigned_integer() const {
    if (!j_.is_number_unsigned() && !(j_.is_number_integer() && j_.get<long>() >= 0)) {
      fail("expected a non-negative integer");
    }
    return j_.get<std::uint64_t>();
  }

  bool boolean() const {
    if (!j_.is_boolean()) fail("expected true or false");
    return j_.get<bool>();
  }

  std::string string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }

  Vec2 vec2() const {
    if (size() != 2) fail("expected [x, y]");
    return {at(std::size_t{0}).number(), at(std::size_t{1}).number()};
  }

  Eigen::VectorXd vector() const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) v[static_cast<Eigen::Index>(i)] = at(i).number();
    return v;
  }

  std::vector<std::string> strings() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(at(i).string());
    return out;
  }

  // Optional fields keep the default when absent or null.
  double number_or(const char* key, double fallback) const {
    return has(key) ? at(key).number() : fallback;
  }
  long integer_or(const char* key, long fallback) const {
    return has(key) ? at(key).integer() : fallback;
  }
  bool boolean_or(const char* key, bool fallback) const {
    return has(key) ? at(key).boolean() : fallback;
  }
  std::string string_or(const char* key, std::string fallback) const {
    return has(key) ? at(key).string() : fallback;
  }

 private:
  const Json& j_;
  std::string path_;
};

inline Trajectory read_trajectory(const JsonReader& r) {
  Trajectory t;
  for (std::size_t i = 0; i < r.size(); ++i) t.waypoints.push_back(r.at(i).vector());
  return t;
}

inline Environment read_environment(const JsonReader& r) {
  r.only({"label", "objects"});
  Environment env;
  env.label = r.string_or("label", "");
  const JsonReader objects = r.at("objects");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const JsonReader o = objects.at(i);
    o.only({"id", "position"});
    env.objects.push_back({o.at("id").string(), o.at("position").vec2()});
  }
  try {
    env.validate();
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return env;
}

// `fallback_env` becomes the training snapshot when the entry has none.
// A feature is either {"anchor": [x, y], "object_id"?} or a list of
// "anchors".
inline TrainedFeature read_feature(const JsonReader& r, const Environment& fallback_env) {
  r.only({"id", "sigma", "anchor", "object_id", "anchors", "training_env"});
  TrainedFeature f;
  f.id = r.at("id").string();
  f.sigma = r.number_or("sigma", f.sigma);
  if (r.has("anchor")) {
    if (r.has("anchors")) r.fail("give either 'anchor' or 'anchors'");
    f.anchors.push_back({r.at("anchor").vec2(), r.string_or("object_id", ""), Vec2::Zero()});
  } else {
    if (r.has("object_id")) r.fail("'object_id' belongs inside each anchor");
    const JsonReader anchors = r.at("anchors");
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const JsonReader a = anchors.at(i);
      a.only({"position", "object_id", "offset"});
      f.anchors.push_back({a.at("position").vec2(), a.string_or("object_id", ""),
                           a.has("offset") ? a.at("offset").vec2() : Vec2::Zero()});
    }
  }
  f.training_env = r.has("training_env") ? read_environment(r.at("training_env")) : fallback_env;
  try {
    f.validate();
  } catch (const Error& e) {
    r.fail(e.what());
  }
  return f;
}

inline FeatureSet read_feature_set(const JsonReader& r, const Environment& fallback_env) {
  std::vector<TrainedFeature> out;
  for (std::size_t i = 0; i < r.size(); ++i) out.push_back(read_feature(r.at(i), fallback_env));
  try {
    return FeatureSet(std::move(out));
  } catch (const Error& e) {
    r.fail(e.what());
  }
}

inline Verdict read_verdict(const JsonReader& r) {
  const std::string s = r.string();
  if (s == "ShiftedWithObject") return Verdict::kShiftedWithObject;
  if (s == "Unrelated") return Verdict::kUnrelated;
  r.fail("unknown verdict '" + s + "'");
}

inline DiagnosisReport read_diagnosis(const JsonReader& r) {
  r.only({"object_id", "delta", "per_feature", "missing_feature", "aligned_feature_ids"});
  DiagnosisReport out;
  out.object_id = r.at("object_id").string();
  out.delta = r.at("delta").vec2();
  const JsonReader per = r.at("per_feature");
  for (std::size_t i = 0; i < per.size(); ++i) {
    const JsonReader d = per.at(i);
    d.only({"feature_id", "delta", "beta_delta", "optimal_norm", "verdict", "unreachable",
            "infeasible"});
    out.per_feature.push_back({d.at("feature_id").string(), d.at("delta").vec2(),
                               d.at("beta_delta").number(), d.at("optimal_norm").number(),
                               read_verdict(d.at("verdict")), d.at("unreachable").boolean(),
                               d.at("infeasible").boolean()});
  }
  out.missing_feature = r.at("missing_feature").boolean();
  out.aligned_feature_ids = r.at("aligned_feature_ids").strings();
  return out;
}

}  // namespace realign

#endif  // REALIGN_JSON_IO_HPP_
