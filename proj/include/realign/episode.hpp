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

// The plan / correct / detect / diagnose / update loop as a state machine.
//
//   Planning -> AwaitingInput -> Diagnosing -> Updating -> Planning ...
//                     \-> Done (no correction, or budget spent)
//
// Every mutation appends an Event. The CLI drives the machine with the
// simulated human; the service lets a person answer AwaitingInput instead.

#ifndef REALIGN_EPISODE_HPP_
#define REALIGN_EPISODE_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "realign/common.hpp"
#include "realign/diagnosis.hpp"
#include "realign/features.hpp"
#include "realign/human_oracle.hpp"
#include "realign/json_io.hpp"
#include "realign/kinematics.hpp"
#include "realign/planner.hpp"
#include "realign/reward_learning.hpp"
#include "realign/trajectory.hpp"

namespace realign {

struct Scenario {
  std::string name = "scenario";
  ArmModel model = ArmModel::planar({1.0, 1.0, 1.0});
  Environment env_train;
  Environment env_test;
  // The test environment may hold objects never seen in training.
  bool new_object = false;
  FeatureSet features;
  Eigen::VectorXd initial_theta;
  HumanParams human;
  JointConfig start;
  JointConfig goal;
  LearnerParams learner;
  PlannerParams planner;
  double mu = 0.15;
  DiagnosisParams diagnosis;
  std::uint64_t seed = 0;
  // Plan / correct / update cycles before giving up.
  int budget = 20;
  bool force_naive_update = false;

  void validate() const {
    model.validate();
    env_train.validate();
    env_test.validate();
    features.validate();
    require(!features.empty(), ErrorCode::kInvalidArgument, "scenario needs at least one feature");
    check_weights(initial_theta, features);
    human.validate();
    learner.validate();
    model.check_config(start);
    model.check_config(goal);
    require(planner.horizon >= 2, ErrorCode::kInvalidArgument, "planner horizon must be >= 2");
    require(std::isfinite(mu) && mu > 0.0, ErrorCode::kInvalidArgument, "mu must be positive");
    require(budget >= 1, ErrorCode::kInvalidArgument, "budget must be >= 1");
    for (const auto& o : env_train.objects) {
      require(env_test.find(o.id) != nullptr, ErrorCode::kUnknownObject,
              "training object '" + o.id + "' missing from the test environment");
    }
    if (!new_object) {
      require(env_train.objects.size() == env_test.objects.size(), ErrorCode::kUnknownObject,
              "test environment has objects absent from training; set new_object");
    }
    for (const auto& f : human.features) env_test.at(f.object_id);
  }

  bool operator==(const Scenario& o) const {
    return name == o.name && model == o.model && env_train == o.env_train &&
           env_test == o.env_test && new_object == o.new_object && features == o.features &&
           initial_theta.size() == o.initial_theta.size() && initial_theta == o.initial_theta &&
           human == o.human && start.size() == o.start.size() && start == o.start &&
           goal.size() == o.goal.size() && goal == o.goal && learner == o.learner &&
           planner == o.planner && mu == o.mu && diagnosis == o.diagnosis && seed == o.seed &&
           budget == o.budget && force_naive_update == o.force_naive_update;
  }
};

enum class Phase { kPlanning, kAwaitingInput, kDiagnosing, kUpdating, kDone };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::kPlanning: return "Planning";
    case Phase::kAwaitingInput: return "AwaitingInput";
    case Phase::kDiagnosing: return "Diagnosing";
    case Phase::kUpdating: return "Updating";
    case Phase::kDone: return "Done";
  }
  return "Unknown";
}

struct Event {
  // Position in the log, strictly increasing from 0.
  long seq = 0;
  // Loop cycle the event belongs to; non-decreasing.
  long step = 0;
  std::string type;
  Json data;

  bool operator==(const Event& o) const {
    return seq == o.seq && step == o.step && type == o.type && data == o.data;
  }
};

inline Json to_json(const Event& e) {
  return {{"seq", e.seq}, {"step", e.step}, {"type", e.type}, {"data", e.data}};
}

struct EpisodeMetrics {
  int correction_count = 0;
  // Sum of |u_H|^2 over processed corrections.
  double total_effort = 0.0;
  // End-effector clearance per test object for the first and last plan.
  std::map<std::string, double> clearance_before;
  std::map<std::string, double> clearance_after;

  bool operator==(const EpisodeMetrics&) const = default;
};

inline EpisodeMetrics metrics_from_events(const std::vector<Event>& events) {
  EpisodeMetrics m;
  bool first_plan = true;
  for (const auto& e : events) {
    if (e.type == "plan") {
      std::map<std::string, double> clearance;
      for (auto it = e.data.at("clearance").begin(); it != e.data.at("clearance").end(); ++it) {
        clearance[it.key()] = it.value().get<double>();
      }
      if (first_plan) m.clearance_before = clearance;
      m.clearance_after = std::move(clearance);
      first_plan = false;
    } else if (e.type == "correction") {
      ++m.correction_count;
      m.total_effort += e.data.at("norm_sq").get<double>();
    }
  }
  return m;
}

struct EpisodeReport {
  std::string scenario;
  std::uint64_t seed = 0;
  AlignmentPolicy policy = AlignmentPolicy::kPermissive;
  bool force_naive_update = false;
  std::vector<Event> events;
  Eigen::VectorXd final_theta;
  FeatureSet features;
  EpisodeMetrics metrics;
  bool converged = false;
  bool budget_exhausted = false;

  bool operator==(const EpisodeReport& o) const {
    return scenario == o.scenario && seed == o.seed && policy == o.policy &&
           force_naive_update == o.force_naive_update && events == o.events &&
           final_theta.size() == o.final_theta.size() && final_theta == o.final_theta &&
           features == o.features && metrics == o.metrics && converged == o.converged &&
           budget_exhausted == o.budget_exhausted;
  }
};

class Episode {
 public:
  explicit Episode(Scenario scenario)
      : scenario_(std::move(scenario)),
        shape_(scenario_.planner.horizon, scenario_.mu),
        human_(seeded_human(scenario_)) {
    scenario_.validate();
    features_ = scenario_.features;
    belief_.theta = scenario_.initial_theta;
  }

  const Scenario& scenario() const { return scenario_; }
  Phase phase() const { return phase_; }
  long step() const { return step_; }
  const FeatureSet& features() const { return features_; }
  const Belief& belief() const { return belief_; }
  const DeformationShape& shape() const { return shape_; }
  const std::optional<Trajectory>& trajectory() const { return trajectory_; }
  const std::optional<Trajectory>& deformed() const { return deformed_; }
  const std::optional<CorrectionEvent>& correction() const { return correction_; }
  const std::optional<Detection>& detection() const { return detection_; }
  const std::vector<DiagnosisReport>& diagnoses() const { return diagnoses_; }
  const std::vector<Event>& events() const { return events_; }
  bool converged() const { return converged_; }
  bool budget_exhausted() const { return budget_exhausted_; }
  TrueHuman& human() { return human_; }

  // Planning -> AwaitingInput.
  void plan() {
    expect(Phase::kPlanning, "plan");
    PlannerParams params = scenario_.planner;
    params.seed = scenario_.seed;
    const PlanResult result = realign::plan(scenario_.model, features_, belief_.theta,
                                            scenario_.start, scenario_.goal, params);
    trajectory_ = result.trajectory;
    Json ee = Json::array();
    for (const auto& q : result.trajectory.waypoints) ee.push_back(to_json(end_effector(scenario_.model, q)));
    Json clearance = Json::object();
    for (const auto& o : scenario_.env_test.objects) {
      clearance[o.id] = min_clearance(result.trajectory, scenario_.model, o.position);
    }
    emit("plan", {{"trajectory", to_json(result.trajectory)},
                  {"end_effector", ee},
                  {"cost", result.cost},
                  {"converged", result.converged},
                  {"iterations", result.iterations},
                  {"theta", vector_json(belief_.theta)},
                  {"clearance", clearance}});
    phase_ = Phase::kAwaitingInput;
  }

  // AwaitingInput -> Diagnosing. A zero torque changes nothing and returns
  // false. Once the budget is spent a correction ends the episode instead.
  bool submit_correction(const CorrectionEvent& c, const std::string& source = "oracle") {
    expect(Phase::kAwaitingInput, "accept a correction");
    check_correction(*trajectory_, c);
    if (c.torque.squaredNorm() == 0.0) return false;
    if (step_ >= scenario_.budget) {
      budget_exhausted_ = true;
      emit("budget_exhausted", {{"budget", scenario_.budget},
                                 {"pending_waypoint", c.waypoint},
                                 {"pending_torque", vector_json(c.torque)},
                                 {"source", source}});
      finish_episode();
      return true;
    }
    correction_ = c;
    correction_->step = step_;
    deformed_ = deform(*trajectory_, *correction_, shape_);
    Json data = {{"waypoint", c.waypoint},
                 {"torque", vector_json(c.torque)},
                 {"norm_sq", c.torque.squaredNorm()},
                 {"source", source}};
    if (source == "oracle" && human_.last_target()) {
      data["target_feature"] = human_.params().features[*human_.last_target()].id;
    }
    emit("correction", data);
    phase_ = Phase::kDiagnosing;
    return true;
  }

  // AwaitingInput -> Done: no correction for a full step.
  void finish() {
    expect(Phase::kAwaitingInput, "finish");
    converged_ = true;
    finish_episode();
  }

  // Diagnosing -> Updating.
  void diagnose() {
    expect(Phase::kDiagnosing, "diagnose");
    const LearnerParams& learner = scenario_.learner;
    const auto& solver = scenario_.diagnosis.solver;
    diagnoses_.clear();
    detection_ = detect_misalignment(*trajectory_, *deformed_, *correction_, features_,
                                     scenario_.model, shape_, learner, solver);
    emit("detection", detection_json(*detection_));
    beta_for_update_ = detection_->beta_max;

    if (detection_->misaligned(learner) && !scenario_.force_naive_update) {
      const bool handled_new = scenario_.new_object && diagnose_new_object();
      if (!handled_new) diagnose_moved_objects();
      const Detection again = detect_misalignment(*trajectory_, *deformed_, *correction_,
                                                  features_, scenario_.model, shape_, learner,
                                                  solver);
      emit("recomputed", detection_json(again));
      beta_for_update_ = again.beta_max;
      detection_ = again;
    }
    phase_ = Phase::kUpdating;
  }

  // Updating -> Planning.
  void update() {
    expect(Phase::kUpdating, "update");
    const Eigen::VectorXd phi_h = feature_sum(*deformed_, features_, scenario_.model);
    const Eigen::VectorXd phi_r = feature_sum(*trajectory_, features_, scenario_.model);
    const Eigen::VectorXd before = belief_.theta;
    if (scenario_.force_naive_update) {
      belief_.theta = naive_update(belief_.theta, phi_h, phi_r, scenario_.learner.alpha);
      belief_.e_posterior = 1.0;
    } else {
      const ConfidenceStep s =
          confidence_update(belief_.theta, phi_h, phi_r, beta_for_update_, scenario_.learner);
      belief_.theta = s.theta;
      belief_.e_posterior = s.weight;
    }
    belief_.beta = beta_for_update_;
    emit("update", {{"theta_before", vector_json(before)},
                    {"theta_after", vector_json(belief_.theta)},
                    {"beta", beta_for_update_},
                    {"weight", belief_.e_posterior},
                    {"naive", scenario_.force_naive_update}});
    ++step_;
    correction_.reset();
    deformed_.reset();
    phase_ = Phase::kPlanning;
  }

  // One transition. In AwaitingInput the simulated human answers.
  void advance() {
    switch (phase_) {
      case Phase::kPlanning: plan(); break;
      case Phase::kAwaitingInput: {
        const auto c = human_.maybe_correct(*trajectory_, scenario_.env_test, scenario_.model, shape_);
        if (c) {
          submit_correction(*c, "oracle");
        } else {
          finish();
        }
        break;
      }
      case Phase::kDiagnosing: diagnose(); break;
      case Phase::kUpdating: update(); break;
      case Phase::kDone: throw Error(ErrorCode::kIllegalPhase, "episode is done");
    }
  }

  void run() {
    while (phase_ != Phase::kDone) advance();
  }

  EpisodeReport report() const {
    EpisodeReport r;
    r.scenario = scenario_.name;
    r.seed = scenario_.seed;
    r.policy = scenario_.diagnosis.policy;
    r.force_naive_update = scenario_.force_naive_update;
    r.events = events_;
    r.final_theta = belief_.theta;
    r.features = features_;
    r.metrics = metrics_from_events(events_);
    r.converged = converged_;
    r.budget_exhausted = budget_exhausted_;
    return r;
  }

 private:
  static TrueHuman seeded_human(const Scenario& s) {
    HumanParams p = s.human;
    p.seed = s.seed;
    return TrueHuman(std::move(p));
  }

  void expect(Phase p, const char* what) const {
    if (phase_ != p) {
      throw Error(ErrorCode::kIllegalPhase, std::string("cannot ") + what + " in phase " +
                                                to_string(phase_));
    }
  }

  void emit(std::string type, Json data) {
    events_.push_back({static_cast<long>(events_.size()), step_, std::move(type), std::move(data)});
  }

  void finish_episode() {
    emit("done", {{"converged", converged_},
                  {"budget_exhausted", budget_exhausted_},
                  {"theta", vector_json(belief_.theta)}});
    phase_ = Phase::kDone;
  }

  Json detection_json(const Detection& d) const {
    Json ids = Json::array();
    for (const auto& f : features_) ids.push_back(f.id);
    return {{"feature_ids", ids},
            {"beta", d.beta},
            {"optimal_norm_sq", d.optimal_norm_sq},
            {"feasible", d.feasible},
            {"observed_norm_sq", d.observed_norm_sq},
            {"beta_max", d.beta_max},
            {"misaligned", d.misaligned(scenario_.learner)}};
  }

  void emit_alignment(const std::string& feature_id, const std::string& object_id,
                      const FeatureSet& before) {
    const auto i = features_.index_of(feature_id);
    const auto j = before.index_of(feature_id);
    if (!i || !j) return;
    emit("alignment", {{"feature_id", feature_id},
                       {"object_id", object_id},
                       {"shift", to_json(features_[*i].alignment_offset() -
                                         before[*j].alignment_offset())},
                       {"anchor", to_json(features_[*i].peak())}});
  }

  void diagnose_moved_objects() {
    const DiagnosisOutcome out =
        diagnose_and_correct(*trajectory_, *correction_, *deformed_, features_, scenario_.env_train,
                             scenario_.env_test, scenario_.model, shape_, scenario_.learner,
                             scenario_.diagnosis);
    for (const auto& r : out.reports) {
      diagnoses_.push_back(r);
      emit("diagnosis", to_json(r));
    }
    const FeatureSet before = features_;
    features_ = out.features;
    for (const auto& r : out.reports) {
      for (const auto& id : r.aligned_feature_ids) emit_alignment(id, r.object_id, before);
    }
    if (out.missing_feature && out.query) learn_feature(*out.query);
  }

  // True when a new object was matched to a training object and cloned.
  bool diagnose_new_object() {
    for (const auto& o : scenario_.env_test.objects) {
      if (scenario_.env_train.find(o.id) != nullptr || handled_new_.count(o.id)) continue;
      handled_new_.insert(o.id);
      const UnknownObjectOutcome out = diagnose_unknown_object(
          *trajectory_, *correction_, *deformed_, features_,
          new_object_hypotheses(scenario_.env_train, o.position), scenario_.model, shape_,
          scenario_.learner, scenario_.diagnosis);
      Json hyps = Json::array();
      for (const auto& h : out.hypotheses) {
        hyps.push_back({{"object_id", h.object_id},
                        {"delta", to_json(h.delta)},
                        {"best_beta_delta", h.best_beta_delta}});
      }
      emit("hypotheses", {{"new_object_id", o.id}, {"hypotheses", hyps}, {"best", out.best}});
      diagnoses_.push_back(out.report);
      emit("diagnosis", to_json(out.report));
      if (out.missing_feature) {
        if (out.query) learn_feature(*out.query);
        return true;
      }
      const std::size_t m = features_.size();
      const FeatureSet cloned = clone_for_new_object(features_, out.report, o.id);
      Eigen::VectorXd theta(static_cast<Eigen::Index>(cloned.size()));
      theta.head(static_cast<Eigen::Index>(m)) = belief_.theta;
      for (std::size_t k = m; k < cloned.size(); ++k) {
        const std::string& source = out.report.aligned_feature_ids[k - m];
        theta[static_cast<Eigen::Index>(k)] =
            belief_.theta[static_cast<Eigen::Index>(*features_.index_of(source))];
        emit("feature_cloned", {{"source_id", source},
                                {"feature", to_json(cloned[k])},
                                {"object_id", o.id},
                                {"weight", theta[static_cast<Eigen::Index>(k)]}});
      }
      features_ = cloned;
      belief_.theta = theta;
      return true;
    }
    return false;
  }

  void learn_feature(const MissingFeatureQuery& query) {
    emit("query", to_json(query));
    const std::vector<FeatureSample> samples =
        human_.answer_feature_query(query, scenario_.env_test);
    try {
      LearnedFeature learned = learn_missing_feature(query, samples, features_.fresh_id("learned"));
      learned.feature.training_env = scenario_.env_test;
      features_ = features_.with_appended(learned.feature);
      Eigen::VectorXd theta(belief_.theta.size() + 1);
      theta << belief_.theta, 0.0;
      belief_.theta = theta;
      emit("feature_learned", {{"feature", to_json(learned.feature)},
                               {"rmse", learned.rmse},
                               {"samples", samples.size()}});
    } catch (const Error& e) {
      emit("query_failed", {{"error", e.what()}});
    }
  }

  Scenario scenario_;
  DeformationShape shape_;
  TrueHuman human_;
  FeatureSet features_;
  Belief belief_;
  Phase phase_ = Phase::kPlanning;
  long step_ = 0;
  std::optional<Trajectory> trajectory_;
  std::optional<Trajectory> deformed_;
  std::optional<CorrectionEvent> correction_;
  std::optional<Detection> detection_;
  std::vector<DiagnosisReport> diagnoses_;
  double beta_for_update_ = 0.0;
  std::set<std::string> handled_new_;
  std::vector<Event> events_;
  bool converged_ = false;
  bool budget_exhausted_ = false;
};

inline EpisodeReport run_episode(const Scenario& s) {
  Episode e(s);
  e.run();
  return e.report();
}

// The same scenario restarted from where `previous` ended: its features
// and weights become the robot's starting point.
inline Scenario continue_from(const Scenario& s, const EpisodeReport& previous) {
  Scenario next = s;
  next.features = previous.features;
  next.initial_theta = previous.final_theta;
  return next;
}

}  // namespace realign

#endif  // REALIGN_EPISODE_HPP_
