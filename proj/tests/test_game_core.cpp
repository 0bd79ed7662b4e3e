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

#include <random>

#include <gtest/gtest.h>

#include "ocg/dynamics.hpp"
#include "ocg/types.hpp"

namespace ocg {
namespace {

GameSpec ThreeAgentSpec() {
  GameSpec spec;
  spec.dt = 0.1;
  spec.horizon = 10;
  for (int i = 0; i < 3; ++i) {
    AgentSpec agent;
    agent.initial_state.position = Vector2d(i, 0.0);
    agent.initial_state.velocity = Vector2d(0.0, 0.5);
    agent.features.push_back({CostFeature::goal(Vector2d(i, 5.0)), 1.0});
    agent.features.push_back({CostFeature::proximity(), 0.5});
    agent.features.push_back({CostFeature::effort(), 1.0});
    spec.agents.push_back(agent);
  }
  return spec;
}

TEST(ValidateGameSpec, WellFormedSpecHasNoViolations) {
  EXPECT_TRUE(validate_game_spec(ThreeAgentSpec()).empty());
}

TEST(ValidateGameSpec, NegativeWeightNamesAgentAndIndex) {
  GameSpec spec = ThreeAgentSpec();
  spec.agents[0].features[0].weight = -0.1;
  const auto violations = validate_game_spec(spec);
  ASSERT_EQ(violations.size(), 1u);
  EXPECT_EQ(violations[0], "agent 0: negative weight at index 0");
}

TEST(ValidateGameSpec, ZeroHorizonIsRejected) {
  GameSpec spec = ThreeAgentSpec();
  spec.horizon = 0;
  const auto violations = validate_game_spec(spec);
  ASSERT_FALSE(violations.empty());
  EXPECT_EQ(violations[0], "horizon must be positive");
}

TEST(ValidateGameSpec, AllZeroWeightsRejected) {
  GameSpec spec = ThreeAgentSpec();
  for (auto& wf : spec.agents[1].features) wf.weight = 0.0;
  const auto violations = validate_game_spec(spec);
  ASSERT_EQ(violations.size(), 1u);
  EXPECT_NE(violations[0].find("agent 1"), std::string::npos);
}

TEST(FeasibilityResidual, RolloutIsFeasibleByConstruction) {
  GameSpec spec = ThreeAgentSpec();
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<ControlInput> controls(static_cast<size_t>(spec.horizon));
  for (auto& u : controls) u.acceleration = Vector2d(gauss(rng), gauss(rng));
  const Trajectory traj = rollout(spec.agents[0].initial_state, controls, spec.dt);
  EXPECT_LE(trajectory_feasibility_residual(traj, spec), 1e-12);
  EXPECT_TRUE(is_dynamically_feasible(traj, spec));
}

TEST(FeasibilityResidual, SingleEntryPerturbationIsMeasured) {
  GameSpec spec = ThreeAgentSpec();
  std::vector<ControlInput> controls(static_cast<size_t>(spec.horizon));
  Trajectory traj = rollout(spec.agents[0].initial_state, controls, spec.dt);
  traj.states[1].position.x() += 0.5;
  // The perturbed state breaks two defects: into step 1 and out of step 1.
  EXPECT_NEAR(trajectory_feasibility_residual(traj, spec), 0.5, 1e-12);
  EXPECT_FALSE(is_dynamically_feasible(traj, spec));
}

TEST(FeasibilityResidual, EmptyControlSequenceIsVacuouslyFeasible) {
  GameSpec spec = ThreeAgentSpec();
  spec.horizon = 0;  // vacuous trajectory check only; spec validation aside
  Trajectory traj;
  traj.states.push_back(spec.agents[0].initial_state);
  EXPECT_EQ(trajectory_feasibility_residual(traj, spec), 0.0);
}

TEST(FeasibilityResidual, LengthMismatchNamesExpectedAndActual) {
  GameSpec spec = ThreeAgentSpec();
  Trajectory traj;
  traj.states.resize(4);
  traj.controls.resize(5);
  try {
    trajectory_feasibility_residual(traj, spec);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("4"), std::string::npos);
    EXPECT_NE(what.find("5"), std::string::npos);
  }
}

TEST(FeasibilityResidual, ValidatorAgreesWithResidualThreshold) {
  GameSpec spec = ThreeAgentSpec();
  std::vector<ControlInput> controls(static_cast<size_t>(spec.horizon));
  for (double bump : {1e-9, 1e-7}) {
    Trajectory traj = rollout(spec.agents[0].initial_state, controls, spec.dt);
    traj.states[2].velocity.y() += bump;
    const double residual = trajectory_feasibility_residual(traj, spec);
    EXPECT_EQ(is_dynamically_feasible(traj, spec), residual <= 1e-8);
  }
}

TEST(VisibilityModel, PartitionHoldsForRandomInstances) {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    const int M = 2 + static_cast<int>(rng() % 7);
    std::vector<int> visible;
    for (int i = 0; i < M; ++i)
      if (rng() % 2 == 0) visible.push_back(i);
    std::vector<std::vector<int>> per(static_cast<size_t>(M));
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < M; ++j)
        if (rng() % 3 != 0) per[static_cast<size_t>(i)].push_back(j);
    const VisibilityModel vis(M, visible, per);
    EXPECT_TRUE(visibility_partition_holds(vis));
    // Occluded set is exactly the complement.
    const auto occ = vis.occluded();
    EXPECT_EQ(static_cast<int>(occ.size() + vis.visible.size()), M);
    for (int o : occ) EXPECT_FALSE(vis.is_visible(o));
  }
}

TEST(VisibilityModel, EveryAgentSeesItself) {
  const VisibilityModel vis(4, {0, 2}, {{1}, {}, {3}, {0}});
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(vis.sees(i, i));
}

}  // namespace
}  // namespace ocg
