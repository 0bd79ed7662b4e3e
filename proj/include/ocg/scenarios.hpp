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

#ifndef OCG_SCENARIOS_HPP
#define OCG_SCENARIOS_HPP

#include <cmath>
#include <random>
#include <vector>

#include "ocg/types.hpp"

namespace ocg {

// Static-occlusion visibility that flips to a second model at a reveal step.
struct VisibilitySchedule {
  VisibilityModel before;
  VisibilityModel after;
  int reveal_step = 0;

  const VisibilityModel& at(int k) const {
    return k < reveal_step ? before : after;
  }
};

// ---------------------------------------------------------------------------
// Three-agent interaction world (estimation experiments). A bystander
// observer measures two of three mutually visible participants; the third is
// occluded from the observer only. The canonical geometry is a triangle
// exchange: agents start on a circle and cross to roughly antipodal goals,
// which keeps the proximity coupling informative for the inverse problem.
// ---------------------------------------------------------------------------

struct ThreeAgentScenario {
  GameSpec game;
  VisibilityModel visibility;  // observer sees {0, 1}; agent 2 occluded
  AgentState occluded_prior;   // estimator initialization for agent 2
};

inline ThreeAgentScenario build_three_agent_scenario(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  ThreeAgentScenario scenario;
  GameSpec& game = scenario.game;
  game.dt = 0.1;
  game.horizon = 30;

  const double base_angles[3] = {M_PI / 2.0, M_PI * 7.0 / 6.0, M_PI * 11.0 / 6.0};
  const double radius = 4.0;
  for (int i = 0; i < 3; ++i) {
    const double angle = base_angles[i] + 0.15 * unif(rng);
    const Vector2d start(radius * std::cos(angle), radius * std::sin(angle));
    const Vector2d goal = -start + Vector2d(0.4 * unif(rng), 0.4 * unif(rng));

    AgentSpec agent;
    agent.initial_state.position = start;
    agent.initial_state.velocity = 0.35 * (goal - start) / (game.horizon * game.dt);
    agent.features.push_back({CostFeature::goal(goal), 1.0 + 0.2 * unif(rng)});
    agent.features.push_back({CostFeature::proximity(1e-3), 1.5 + 0.5 * unif(rng)});
    agent.features.push_back({CostFeature::effort(), 1.2 + 0.3 * unif(rng)});
    game.agents.push_back(agent);

    if (i == 2) {
      // The observer's prior for the occluded agent: the nominal region
      // center, not the jittered truth.
      scenario.occluded_prior.position =
          Vector2d(radius * std::cos(base_angles[i]), radius * std::sin(base_angles[i]));
      scenario.occluded_prior.velocity = Vector2d::Zero();
    }
  }

  scenario.visibility = VisibilityModel(
      3, {0, 1}, {{0, 1, 2}, {0, 1, 2}, {0, 1, 2}});
  return scenario;
}

// Random fully visible game for estimator round trips: agents on a circle
// crossing to antipodal goals, so every agent's proximity weight is excited.
inline GameSpec build_random_game(int num_agents, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  GameSpec game;
  game.dt = 0.1;
  game.horizon = 30;
  const double radius = 3.5 + 1.0 * unif(rng);
  const double phase = M_PI * unif(rng);
  for (int i = 0; i < num_agents; ++i) {
    const double angle =
        phase + 2.0 * M_PI * i / num_agents + 0.2 * unif(rng);
    const Vector2d start(radius * std::cos(angle), radius * std::sin(angle));
    const Vector2d goal = -start + Vector2d(0.5 * unif(rng), 0.5 * unif(rng));
    AgentSpec agent;
    agent.initial_state.position = start;
    agent.initial_state.velocity = 0.3 * (goal - start) / (game.horizon * game.dt);
    agent.features.push_back({CostFeature::goal(goal), 1.0 + 0.3 * unif(rng)});
    agent.features.push_back({CostFeature::proximity(1e-3), 1.5 + 0.8 * unif(rng)});
    agent.features.push_back({CostFeature::effort(), 1.2 + 0.4 * unif(rng)});
    game.agents.push_back(agent);
  }
  return game;
}

// ---------------------------------------------------------------------------
// Collision-avoidance world (planning experiments). Starts and goals are
// sampled in a square with a minimum pairwise separation; visibility is a
// random symmetric relation that lifts at the branching step. No observation
// noise in this family.
// ---------------------------------------------------------------------------

struct CollisionScenarioOptions {
  double region_half_width = 8.0;   // positions within [-w, w]^2
  double min_separation = 2.0;      // between starts and between goals [m]
  double visible_probability = 0.6; // per unordered agent pair
  int horizon = 20;
  double dt = 0.1;
};

struct CollisionScenario {
  GameSpec game;
  VisibilitySchedule schedule;  // reveal step filled in by the experiment
};

inline CollisionScenario build_collision_avoidance_scenario(
    int num_agents, std::uint64_t seed, const CollisionScenarioOptions& options = {}) {
  if (num_agents < 2)
    throw Error("collision scenario: need at least two agents");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::uniform_real_distribution<double> prob(0.0, 1.0);

  auto sample_points = [&](int count) {
    std::vector<Vector2d> points;
    while (static_cast<int>(points.size()) < count) {
      const Vector2d candidate(options.region_half_width * unif(rng),
                               options.region_half_width * unif(rng));
      bool ok = true;
      for (const auto& p : points)
        if ((candidate - p).norm() < options.min_separation) ok = false;
      if (ok) points.push_back(candidate);
    }
    return points;
  };

  CollisionScenario scenario;
  GameSpec& game = scenario.game;
  game.dt = options.dt;
  game.horizon = options.horizon;

  const auto starts = sample_points(num_agents);
  const auto goals = sample_points(num_agents);
  for (int i = 0; i < num_agents; ++i) {
    AgentSpec agent;
    agent.initial_state.position = starts[static_cast<size_t>(i)];
    const Vector2d to_goal = goals[static_cast<size_t>(i)] - starts[static_cast<size_t>(i)];
    agent.initial_state.velocity =
        0.3 * to_goal / (game.horizon * game.dt);
    agent.features.push_back(
        {CostFeature::goal(goals[static_cast<size_t>(i)]), 1.0 + 0.2 * unif(rng)});
    agent.features.push_back({CostFeature::proximity(1e-3), 1.5 + 0.5 * unif(rng)});
    agent.features.push_back({CostFeature::effort(), 1.0 + 0.3 * unif(rng)});
    game.agents.push_back(agent);
  }

  // Random symmetric visibility with unit diagonal; resample until at least
  // one pair is mutually occluded so occluded-pair metrics are defined.
  std::vector<std::vector<int>> per(static_cast<size_t>(num_agents));
  bool any_occluded = false;
  do {
    any_occluded = false;
    for (auto& row : per) row.clear();
    for (int i = 0; i < num_agents; ++i) per[static_cast<size_t>(i)].push_back(i);
    for (int i = 0; i < num_agents; ++i)
      for (int j = i + 1; j < num_agents; ++j) {
        if (prob(rng) < options.visible_probability) {
          per[static_cast<size_t>(i)].push_back(j);
          per[static_cast<size_t>(j)].push_back(i);
        } else {
          any_occluded = true;
        }
      }
  } while (!any_occluded);

  std::vector<int> all(static_cast<size_t>(num_agents));
  for (int i = 0; i < num_agents; ++i) all[static_cast<size_t>(i)] = i;
  scenario.schedule.before = VisibilityModel(num_agents, all, per);
  scenario.schedule.after = VisibilityModel::all_visible(num_agents);
  scenario.schedule.reveal_step = 0;  // set from t_b by the experiment
  return scenario;
}

// ---------------------------------------------------------------------------
// Crossing-road world (estimation + planning pipeline). Two perpendicular
// two-lane roads, lane width 4 m. The ego (agent 0) and a visible neighbor
// (agent 1) head north in adjacent lanes; two occluded vehicles travel on
// the horizontal lanes. Goals are moving waypoints that pull each vehicle
// along its lane at a nominal speed; before the reveal the ego measures only
// its neighbor, while all participants see each other throughout.
// ---------------------------------------------------------------------------

struct CrossingRoadScenario {
  GameSpec game;            // horizon-length planning template; goal tracks
                            // cover sim_steps + horizon + 1 absolute steps
  VisibilitySchedule schedule;
  int ego_index = 0;
  std::vector<int> occluded_agents;        // {2, 3}
  std::vector<AgentState> occluded_priors; // lane-entry priors, same order
  int sim_steps = 0;
  double nominal_speed = 0.0;
};

inline CrossingRoadScenario build_crossing_road_scenario(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  CrossingRoadScenario scenario;
  GameSpec& game = scenario.game;
  game.dt = 0.1;
  game.horizon = 25;
  scenario.sim_steps = 55;
  scenario.nominal_speed = 2.0;

  struct VehicleInit {
    Vector2d start;
    Vector2d direction;
    Vector2d lane_point;
  };
  // Ego northbound in the right vertical lane (x = +2); neighbor northbound
  // in the left vertical lane (x = -2) slightly ahead; occluded vehicles
  // eastbound (y = +2) and westbound (y = -2).
  const std::vector<VehicleInit> inits = {
      {Vector2d(2.0, -14.0 + 0.8 * unif(rng)), Vector2d(0, 1), Vector2d(2, 0)},
      {Vector2d(-2.0, -9.0 + 0.8 * unif(rng)), Vector2d(0, 1), Vector2d(-2, 0)},
      {Vector2d(-15.0 + 1.0 * unif(rng), 2.0), Vector2d(1, 0), Vector2d(0, 2)},
      {Vector2d(13.0 + 1.0 * unif(rng), -2.0), Vector2d(-1, 0), Vector2d(0, -2)},
  };

  const int track_len = scenario.sim_steps + game.horizon + 1;
  for (size_t i = 0; i < inits.size(); ++i) {
    const auto& init = inits[i];
    AgentSpec agent;
    agent.initial_state.position = init.start;
    agent.initial_state.velocity = scenario.nominal_speed * init.direction;

    // Moving waypoint 1.5 s ahead of nominal lane progress.
    std::vector<Vector2d> track(static_cast<size_t>(track_len));
    for (int k = 0; k < track_len; ++k)
      track[static_cast<size_t>(k)] =
          init.start + init.direction * scenario.nominal_speed * (k * game.dt + 1.5);
    agent.features.push_back({CostFeature::goal_track(track), 1.0});
    agent.features.push_back({CostFeature::proximity(1e-3), 2.0});
    agent.features.push_back({CostFeature::lane(init.lane_point, init.direction), 2.0});
    agent.features.push_back({CostFeature::effort(), 0.4});
    game.agents.push_back(agent);

    if (i >= 2) {
      scenario.occluded_agents.push_back(static_cast<int>(i));
      AgentState prior;
      prior.position = init.direction.x() > 0 ? Vector2d(-15.0, 2.0)
                                              : Vector2d(13.0, -2.0);
      prior.velocity = scenario.nominal_speed * init.direction;
      scenario.occluded_priors.push_back(prior);
    }
  }

  // The ego measures only its visible neighbor before the reveal;
  // participants always see each other.
  std::vector<std::vector<int>> per_before = {
      {0, 1}, {0, 1, 2, 3}, {0, 1, 2, 3}, {0, 1, 2, 3}};
  scenario.schedule.before = VisibilityModel(4, {0, 1}, per_before);
  scenario.schedule.after = VisibilityModel::all_visible(4);
  scenario.schedule.reveal_step = 25;  // t_b = 2.5 s
  return scenario;
}

}  // namespace ocg

#endif  // OCG_SCENARIOS_HPP
