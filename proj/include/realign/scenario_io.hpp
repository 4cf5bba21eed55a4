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

// Scenario and report files. The formats are described in
// docs/scenario_format.md and docs/report_format.md.

#ifndef REALIGN_SCENARIO_IO_HPP_
#define REALIGN_SCENARIO_IO_HPP_

#include <fstream>
#include <sstream>
#include <string>

#include "realign/episode.hpp"
#include "realign/json_io.hpp"

namespace realign {

namespace detail {

inline void check_version(const JsonReader& r) {
  const long v = r.at("schema_version").integer();
  if (v != kSchemaVersion) {
    r.fail("unsupported schema_version " + std::to_string(v) + " (expected " +
           std::to_string(kSchemaVersion) + ")");
  }
}

inline AlignmentPolicy read_policy(const JsonReader& r) {
  const std::string s = r.string();
  if (s == "permissive") return AlignmentPolicy::kPermissive;
  if (s == "conservative") return AlignmentPolicy::kConservative;
  r.fail("policy must be 'permissive' or 'conservative'");
}

inline Json parse_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kSchema, origin + ": " + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kSchema, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write '" + path + "'");
  out << text;
}

// Reports a validation failure as a schema error.
template <typename F>
void as_schema_error(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kSchema) throw;
    throw Error(ErrorCode::kSchema, e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scenario.

inline Scenario scenario_from_json(const Json& j) {
  const JsonReader r(j, "$");
  r.only({"schema_version", "name", "seed", "budget", "arm", "start", "goal", "env_train",
          "env_test", "new_object", "features", "initial_theta", "human", "learner", "planner",
          "deformation", "diagnosis", "force_naive_update"});
  detail::check_version(r);
  Scenario s;
  s.name = r.string_or("name", s.name);
  if (r.has("seed")) s.seed = r.at("seed").unsigned_integer();
  s.budget = static_cast<int>(r.integer_or("budget", s.budget));
  s.force_naive_update = r.boolean_or("force_naive_update", s.force_naive_update);
  s.new_object = r.boolean_or("new_object", s.new_object);

  {
    const JsonReader a = r.at("arm");
    a.only({"base", "link_lengths", "joint_limits"});
    std::vector<double> lengths;
    const JsonReader l = a.at("link_lengths");
    for (std::size_t i = 0; i < l.size(); ++i) lengths.push_back(l.at(i).number());
    ArmModel m;
    m.base = a.has("base") ? a.at("base").vec2() : Vec2::Zero();
    m.link_lengths = lengths;
    m.joint_limits.assign(lengths.size(), JointLimit{});
    if (a.has("joint_limits")) {
      const JsonReader lim = a.at("joint_limits");
      if (lim.size() != lengths.size()) lim.fail("need one [lower, upper] per link");
      for (std::size_t i = 0; i < lim.size(); ++i) {
        const Vec2 v = lim.at(i).vec2();
        m.joint_limits[i] = {v.x(), v.y()};
      }
    }
    detail::as_schema_error([&] { m.validate(); });
    s.model = m;
  }

  s.start = r.at("start").vector();
  s.goal = r.at("goal").vector();
  s.env_train = read_environment(r.at("env_train"));
  s.env_test = read_environment(r.at("env_test"));
  s.features = read_feature_set(r.at("features"), s.env_train);
  s.initial_theta = r.at("initial_theta").vector();

  {
    const JsonReader h = r.at("human");
    h.only({"features", "theta", "effort", "trigger", "rationality", "max_torque"});
    const JsonReader fs = h.at("features");
    for (std::size_t i = 0; i < fs.size(); ++i) {
      const JsonReader f = fs.at(i);
      f.only({"id", "sigma", "object_id", "offset"});
      TrueFeatureSpec spec;
      spec.id = f.at("id").string();
      spec.sigma = f.number_or("sigma", spec.sigma);
      spec.object_id = f.at("object_id").string();
      if (f.has("offset")) spec.offset = f.at("offset").vec2();
      s.human.features.push_back(spec);
    }
    s.human.theta = h.at("theta").vector();
    s.human.effort = h.number_or("effort", s.human.effort);
    s.human.trigger = h.number_or("trigger", s.human.trigger);
    if (h.has("rationality")) s.human.rationality = h.at("rationality").number();
    s.human.max_torque = h.number_or("max_torque", s.human.max_torque);
  }

  if (r.has("learner")) {
    const JsonReader l = r.at("learner");
    l.only({"alpha", "effort", "action_dim", "beta_threshold", "beta_max", "logistic_slope",
            "denominator_guard", "p_explainable_override"});
    LearnerParams& p = s.learner;
    p.alpha = l.number_or("alpha", p.alpha);
    p.effort = l.number_or("effort", p.effort);
    p.action_dim = static_cast<int>(l.integer_or("action_dim", s.model.dof()));
    p.beta_threshold = l.number_or("beta_threshold", p.beta_threshold);
    p.beta_max = l.number_or("beta_max", p.beta_max);
    p.logistic_slope = l.number_or("logistic_slope", p.logistic_slope);
    p.denominator_guard = l.number_or("denominator_guard", p.denominator_guard);
    if (l.has("p_explainable_override")) {
      p.p_explainable_override = l.at("p_explainable_override").number();
    }
  } else {
    s.learner.action_dim = static_cast<int>(s.model.dof());
  }

  if (r.has("planner")) {
    const JsonReader p = r.at("planner");
    p.only({"horizon", "smoothness", "tolerance", "max_iterations", "restarts", "jitter",
            "armijo"});
    PlannerParams& q = s.planner;
    const long horizon = p.integer_or("horizon", static_cast<long>(q.horizon));
    if (horizon < 2) p.at("horizon").fail("horizon must be >= 2");
    q.horizon = static_cast<std::size_t>(horizon);
    q.smoothness = p.number_or("smoothness", q.smoothness);
    q.tolerance = p.number_or("tolerance", q.tolerance);
    q.max_iterations = static_cast<int>(p.integer_or("max_iterations", q.max_iterations));
    q.restarts = static_cast<int>(p.integer_or("restarts", q.restarts));
    q.jitter = p.number_or("jitter", q.jitter);
    q.armijo = p.number_or("armijo", q.armijo);
  }

  if (r.has("deformation")) {
    const JsonReader d = r.at("deformation");
    d.only({"mu"});
    s.mu = d.number_or("mu", s.mu);
  }

  if (r.has("diagnosis")) {
    const JsonReader d = r.at("diagnosis");
    d.only({"policy", "query_half_extent", "query_samples", "feature_tolerance"});
    DiagnosisParams& p = s.diagnosis;
    if (d.has("policy")) p.policy = detail::read_policy(d.at("policy"));
    p.query_half_extent = d.number_or("query_half_extent", p.query_half_extent);
    p.query_samples = static_cast<int>(d.integer_or("query_samples", p.query_samples));
    p.solver.feature_tolerance = d.number_or("feature_tolerance", p.solver.feature_tolerance);
  }

  detail::as_schema_error([&] { s.validate(); });
  return s;
}

inline Json scenario_to_json(const Scenario& s) {
  Json limits = Json::array();
  for (const auto& l : s.model.joint_limits) limits.push_back({l.lower, l.upper});
  Json features = Json::array();
  for (const auto& f : s.features) {
    features.push_back(to_json(f, !(f.training_env == s.env_train)));
  }
  Json human_features = Json::array();
  for (const auto& f : s.human.features) {
    human_features.push_back(
        {{"id", f.id}, {"sigma", f.sigma}, {"object_id", f.object_id}, {"offset", to_json(f.offset)}});
  }
  Json human = {{"features", human_features},
                {"theta", vector_json(s.human.theta)},
                {"effort", s.human.effort},
                {"trigger", s.human.trigger},
                {"max_torque", s.human.max_torque}};
  if (s.human.rationality) human["rationality"] = *s.human.rationality;
  Json learner = {{"alpha", s.learner.alpha},
                  {"effort", s.learner.effort},
                  {"action_dim", s.learner.action_dim},
                  {"beta_threshold", s.learner.beta_threshold},
                  {"beta_max", s.learner.beta_max},
                  {"logistic_slope", s.learner.logistic_slope},
                  {"denominator_guard", s.learner.denominator_guard}};
  if (s.learner.p_explainable_override) {
    learner["p_explainable_override"] = *s.learner.p_explainable_override;
  }
  return {{"schema_version", kSchemaVersion},
          {"name", s.name},
          {"seed", s.seed},
          {"budget", s.budget},
          {"arm",
           {{"base", to_json(s.model.base)},
            {"link_lengths", s.model.link_lengths},
            {"joint_limits", limits}}},
          {"start", vector_json(s.start)},
          {"goal", vector_json(s.goal)},
          {"env_train", to_json(s.env_train)},
          {"env_test", to_json(s.env_test)},
          {"new_object", s.new_object},
          {"features", features},
          {"initial_theta", vector_json(s.initial_theta)},
          {"human", human},
          {"learner", learner},
          {"planner",
           {{"horizon", s.planner.horizon},
            {"smoothness", s.planner.smoothness},
            {"tolerance", s.planner.tolerance},
            {"max_iterations", s.planner.max_iterations},
            {"restarts", s.planner.restarts},
            {"jitter", s.planner.jitter},
            {"armijo", s.planner.armijo}}},
          {"deformation", {{"mu", s.mu}}},
          {"diagnosis",
           {{"policy", to_string(s.diagnosis.policy)},
            {"query_half_extent", s.diagnosis.query_half_extent},
            {"query_samples", s.diagnosis.query_samples},
            {"feature_tolerance", s.diagnosis.solver.feature_tolerance}}},
          {"force_naive_update", s.force_naive_update}};
}

inline Scenario parse_scenario(const std::string& text, const std::string& origin = "scenario") {
  return scenario_from_json(detail::parse_text(text, origin));
}

inline Scenario load_scenario(const std::string& path) {
  try {
    return parse_scenario(detail::read_file(path), path);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kSchema) throw;
    const std::string what = e.what();
    if (what.find(path) != std::string::npos) throw;
    throw Error(ErrorCode::kSchema, path + ": " + what);
  }
}

inline void emit_scenario(const Scenario& s, const std::string& path) {
  detail::write_file(path, scenario_to_json(s).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Report.

inline Json metrics_json(const EpisodeMetrics& m) {
  return {{"correction_count", m.correction_count},
          {"total_effort", m.total_effort},
          {"clearance_before", m.clearance_before},
          {"clearance_after", m.clearance_after}};
}

inline Json report_to_json(const EpisodeReport& r) {
  Json events = Json::array();
  for (const auto& e : r.events) events.push_back(to_json(e));
  return {{"schema_version", kSchemaVersion},
          {"scenario", r.scenario},
          {"seed", r.seed},
          {"policy", to_string(r.policy)},
          {"force_naive_update", r.force_naive_update},
          {"converged", r.converged},
          {"budget_exhausted", r.budget_exhausted},
          {"final_theta", vector_json(r.final_theta)},
          {"features", to_json(r.features)},
          {"metrics", metrics_json(r.metrics)},
          {"events", events}};
}

inline EpisodeReport report_from_json(const Json& j) {
  const JsonReader r(j, "$");
  r.only({"schema_version", "scenario", "seed", "policy", "force_naive_update", "converged",
          "budget_exhausted", "final_theta", "features", "metrics", "events"});
  detail::check_version(r);
  EpisodeReport out;
  out.scenario = r.at("scenario").string();
  out.seed = r.at("seed").unsigned_integer();
  out.policy = detail::read_policy(r.at("policy"));
  out.force_naive_update = r.at("force_naive_update").boolean();
  out.converged = r.at("converged").boolean();
  out.budget_exhausted = r.at("budget_exhausted").boolean();
  out.final_theta = r.at("final_theta").vector();
  out.features = read_feature_set(r.at("features"), Environment{});
  const JsonReader m = r.at("metrics");
  m.only({"correction_count", "total_effort", "clearance_before", "clearance_after"});
  out.metrics.correction_count = static_cast<int>(m.at("correction_count").integer());
  out.metrics.total_effort = m.at("total_effort").number();
  for (const char* key : {"clearance_before", "clearance_after"}) {
    const JsonReader c = m.at(key);
    if (!c.raw().is_object()) c.fail("expected an object");
    auto& target = std::string(key) == "clearance_before" ? out.metrics.clearance_before
                                                          : out.metrics.clearance_after;
    for (auto it = c.raw().begin(); it != c.raw().end(); ++it) {
      target[it.key()] = JsonReader(it.value(), c.path() + "." + it.key()).number();
    }
  }
  const JsonReader events = r.at("events");
  for (std::size_t i = 0; i < events.size(); ++i) {
    const JsonReader e = events.at(i);
    e.only({"seq", "step", "type", "data"});
    out.events.push_back(
        {e.at("seq").integer(), e.at("step").integer(), e.at("type").string(), e.at("data").raw()});
  }
  return out;
}

// Stable text form: fixed key order and shortest round-trip doubles.
inline std::string report_text(const EpisodeReport& r) { return report_to_json(r).dump(2) + "\n"; }

inline void emit_report(const EpisodeReport& r, const std::string& path) {
  detail::write_file(path, report_text(r));
}

inline EpisodeReport load_report(const std::string& path) {
  return report_from_json(detail::parse_text(detail::read_file(path), path));
}

// ---------------------------------------------------------------------------
// CSV extracts.

inline std::string metrics_csv_header() {
  return "scenario,seed,policy,naive,converged,budget_exhausted,corrections,total_effort\n";
}

inline std::string metrics_csv_row(const EpisodeReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << r.scenario << ',' << r.seed << ',' << to_string(r.policy) << ','
      << (r.force_naive_update ? 1 : 0) << ',' << (r.converged ? 1 : 0) << ','
      << (r.budget_exhausted ? 1 : 0) << ',' << r.metrics.correction_count << ','
      << r.metrics.total_effort << '\n';
  return out.str();
}

inline std::string clearance_csv_header() { return "scenario,seed,object,before,after\n"; }

inline std::string clearance_csv_rows(const EpisodeReport& r) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& [id, before] : r.metrics.clearance_before) {
    const auto it = r.metrics.clearance_after.find(id);
    out << r.scenario << ',' << r.seed << ',' << id << ',' << before << ','
        << (it == r.metrics.clearance_after.end() ? before : it->second) << '\n';
  }
  return out.str();
}

}  // namespace realign

#endif  // REALIGN_SCENARIO_IO_HPP_
