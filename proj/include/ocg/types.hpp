// Copyright 2026 The ocg Authors
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

#ifndef OCG_TYPES_HPP
#define OCG_TYPES_HPP

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ocg/common.hpp"

namespace ocg {

using Eigen::Matrix2d;
using Eigen::Matrix4d;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::Vector4d;
using Eigen::VectorXd;

// Planar point-mass state. The stacked layout is (px, py, vx, vy) and is the
// layout used for all 4-blocks in solver vectors and multipliers.
struct AgentState {
  Vector2d position = Vector2d::Zero();  // [m]
  Vector2d velocity = Vector2d::Zero();  // [m/s]

  Vector4d stacked() const {
    Vector4d x;
    x << position, velocity;
    return x;
  }
  static AgentState from_stacked(const Vector4d& x) {
    return AgentState{x.head<2>(), x.tail<2>()};
  }
  bool is_finite() const {
    return position.allFinite() && velocity.allFinite();
  }
};

struct ControlInput {
  Vector2d acceleration = Vector2d::Zero();  // [m/s^2]

  bool is_finite() const { return acceleration.allFinite(); }
};

// One agent's motion over a horizon of T steps: T+1 states (index 0 is the
// initial state) and T controls, where controls[k] drives states[k] to
// states[k+1].
struct Trajectory {
  std::vector<AgentState> states;
  std::vector<ControlInput> controls;

  int horizon() const { return static_cast<int>(controls.size()); }
  bool lengths_consistent() const {
    return states.size() == controls.size() + 1;
  }
};

using JointTrajectory = std::vector<Trajectory>;  // one entry per agent

enum class FeatureKind { kGoal, kProximity, kEffort, kLane };

inline std::string to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kGoal: return "goal";
    case FeatureKind::kProximity: return "proximity";
    case FeatureKind::kEffort: return "effort";
    case FeatureKind::kLane: return "lane";
  }
  return "?";
}

// One differentiable running-cost term. Goal features hold a track of goal
// points indexed by time step (a single entry means a static goal; the last
// entry is held for steps past the end). Proximity smooths the inverse
// squared distance with epsilon so values and derivatives stay finite at
// contact. Lane features measure squared perpendicular distance to the line
// through lane_point along lane_direction.
struct CostFeature {
  FeatureKind kind = FeatureKind::kEffort;
  std::vector<Vector2d> goals;             // kGoal
  double epsilon = 1e-3;                   // kProximity [m^2]
  Vector2d lane_point = Vector2d::Zero();  // kLane
  Vector2d lane_direction = Vector2d::UnitX();

  static CostFeature goal(const Vector2d& p) {
    CostFeature f;
    f.kind = FeatureKind::kGoal;
    f.goals = {p};
    return f;
  }
  static CostFeature goal_track(std::vector<Vector2d> track) {
    CostFeature f;
    f.kind = FeatureKind::kGoal;
    f.goals = std::move(track);
    return f;
  }
  static CostFeature proximity(double epsilon = 1e-3) {
    CostFeature f;
    f.kind = FeatureKind::kProximity;
    f.epsilon = epsilon;
    return f;
  }
  static CostFeature effort() { return CostFeature{}; }
  static CostFeature lane(const Vector2d& point, const Vector2d& direction) {
    CostFeature f;
    f.kind = FeatureKind::kLane;
    f.lane_point = point;
    f.lane_direction = direction.normalized();
    return f;
  }

  // Goal position at time step k (clamped to the end of the track).
  const Vector2d& goal_at(int k) const {
    const int idx = std::min<int>(k, static_cast<int>(goals.size()) - 1);
    return goals[static_cast<size_t>(std::max(idx, 0))];
  }
};

struct WeightedFeature {
  CostFeature feature;
  double weight = 0.0;  // nonnegative
};

struct AgentSpec {
  AgentState initial_state;
  std::vector<WeightedFeature> features;

  VectorXd weights() const {
    VectorXd w(features.size());
    for (size_t l = 0; l < features.size(); ++l) w[l] = features[l].weight;
    return w;
  }
};

// Full description of one open-loop dynamic game: M agents with planar
// double-integrator dynamics, a shared horizon and time step, and per-agent
// weighted cost features.
struct GameSpec {
  double dt = 0.1;   // [s]
  int horizon = 30;  // T, number of steps
  std::vector<AgentSpec> agents;

  int num_agents() const { return static_cast<int>(agents.size()); }
};

// Which agents an external observer can measure, and which agents each
// participant can see. Participants always see themselves.
struct VisibilityModel {
  int num_agents = 0;
  std::vector<int> visible;                    // observer-visible set, sorted
  std::vector<std::vector<int>> per_observer;  // per agent, sorted, self added

  VisibilityModel() = default;
  VisibilityModel(int M, std::vector<int> visible_set,
                  std::vector<std::vector<int>> per_observer_sets = {})
      : num_agents(M),
        visible(std::move(visible_set)),
        per_observer(std::move(per_observer_sets)) {
    normalize();
  }

  static VisibilityModel all_visible(int M) {
    std::vector<int> all(M);
    for (int i = 0; i < M; ++i) all[i] = i;
    std::vector<std::vector<int>> per(M, all);
    return VisibilityModel(M, all, per);
  }

  std::vector<int> occluded() const {
    std::vector<int> out;
    for (int i = 0; i < num_agents; ++i)
      if (!is_visible(i)) out.push_back(i);
    return out;
  }

  bool is_visible(int agent) const {
    return std::binary_search(visible.begin(), visible.end(), agent);
  }
  bool sees(int observer, int agent) const {
    const auto& s = per_observer[static_cast<size_t>(observer)];
    return std::binary_search(s.begin(), s.end(), agent);
  }

 private:
  void normalize() {
    auto sort_unique = [](std::vector<int>& v) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    sort_unique(visible);
    if (per_observer.empty())
      per_observer.assign(static_cast<size_t>(num_agents), {});
    for (int i = 0; i < num_agents; ++i) {
      auto& s = per_observer[static_cast<size_t>(i)];
      s.push_back(i);
      sort_unique(s);
    }
  }
};

// Output of a Nash solve: per-agent trajectories, per-agent dynamics
// multipliers (one 4-vector per step), and convergence diagnostics.
struct SolverResult {
  JointTrajectory trajectories;
  std::vector<std::vector<Vector4d>> multipliers;  // [agent][k], k in [0, T)
  double kkt_residual_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;  // infinity norm per iteration
};

// Diagnostic validation of GameSpec invariants. Returns one human-readable
// violation per problem; empty means the spec is well formed.
inline std::vector<std::string> validate_game_spec(const GameSpec& spec) {
  std::vector<std::string> violations;
  if (spec.horizon <= 0) violations.push_back("horizon must be positive");
  if (!(spec.dt > 0.0)) violations.push_back("dt must be positive");
  if (spec.agents.empty()) violations.push_back("game must have at least one agent");
  for (size_t i = 0; i < spec.agents.size(); ++i) {
    const auto& agent = spec.agents[i];
    const std::string tag = "agent " + std::to_string(i) + ": ";
    if (!agent.initial_state.is_finite())
      violations.push_back(tag + "nonfinite initial state");
    bool any_positive = false;
    for (size_t l = 0; l < agent.features.size(); ++l) {
      const auto& wf = agent.features[l];
      if (wf.weight < 0.0)
        violations.push_back(tag + "negative weight at index " + std::to_string(l));
      if (wf.weight > 0.0) any_positive = true;
      if (!std::isfinite(wf.weight))
        violations.push_back(tag + "nonfinite weight at index " + std::to_string(l));
      switch (wf.feature.kind) {
        case FeatureKind::kGoal:
          if (wf.feature.goals.empty())
            violations.push_back(tag + "goal feature without goal points at index " +
                                 std::to_string(l));
          for (const auto& g : wf.feature.goals)
            if (!g.allFinite())
              violations.push_back(tag + "nonfinite goal point at index " +
                                   std::to_string(l));
          break;
        case FeatureKind::kProximity:
          if (!(wf.feature.epsilon > 0.0))
            violations.push_back(tag + "proximity epsilon must be positive at index " +
                                 std::to_string(l));
          break;
        case FeatureKind::kLane:
          if (wf.feature.lane_direction.norm() < 1e-12)
            violations.push_back(tag + "lane direction must be nonzero at index " +
                                 std::to_string(l));
          break;
        case FeatureKind::kEffort:
          break;
      }
    }
    if (agent.features.empty() || !any_positive)
      violations.push_back(tag + "needs at least one strictly positive weight");
  }
  return violations;
}

inline void throw_if_invalid(const GameSpec& spec) {
  const auto violations = validate_game_spec(spec);
  if (!violations.empty()) {
    std::string msg = "invalid game spec:";
    for (const auto& v : violations) msg += "\n  - " + v;
    throw Error(msg);
  }
}

// Partition sanity for a visibility model: visible and occluded sets must
// split [0, M) exactly and every observer must see itself.
inline bool visibility_partition_holds(const VisibilityModel& vis) {
  std::set<int> seen(vis.visible.begin(), vis.visible.end());
  for (int o : vis.occluded()) {
    if (seen.count(o)) return false;
    seen.insert(o);
  }
  if (static_cast<int>(seen.size()) != vis.num_agents) return false;
  if (!seen.empty() && (*seen.begin() < 0 || *seen.rbegin() >= vis.num_agents))
    return false;
  for (int i = 0; i < vis.num_agents; ++i)
    if (!vis.sees(i, i)) return false;
  return true;
}

}  // namespace ocg

#endif  // OCG_TYPES_HPP
