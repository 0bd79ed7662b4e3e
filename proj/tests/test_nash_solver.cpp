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

#include "ocg/nash_solver.hpp"
#include "oracles/riccati_lqr.hpp"

namespace ocg {
namespace {

GameSpec SingleAgentQuadratic(const Vector2d& start, const Vector2d& v0,
                              const Vector2d& goal, double w_goal,
                              double w_effort, int T = 30) {
  GameSpec spec;
  spec.dt = 0.1;
  spec.horizon = T;
  AgentSpec agent;
  agent.initial_state = AgentState{start, v0};
  agent.features.push_back({CostFeature::goal(goal), w_goal});
  agent.features.push_back({CostFeature::effort(), w_effort});
  spec.agents.push_back(agent);
  return spec;
}

GameSpec TwoAgentInteracting() {
  GameSpec spec;
  spec.dt = 0.1;
  spec.horizon = 20;
  AgentSpec a;
  a.initial_state = AgentState{Vector2d(-5.0, 0.5), Vector2d(1.0, 0.0)};
  a.features.push_back({CostFeature::goal(Vector2d(5.0, 0.5)), 1.0});
  a.features.push_back({CostFeature::proximity(1e-3), 2.0});
  a.features.push_back({CostFeature::effort(), 1.0});
  AgentSpec b;
  b.initial_state = AgentState{Vector2d(5.0, -0.5), Vector2d(-1.0, 0.0)};
  b.features.push_back({CostFeature::goal(Vector2d(-5.0, -0.5)), 1.0});
  b.features.push_back({CostFeature::proximity(1e-3), 2.0});
  b.features.push_back({CostFeature::effort(), 1.0});
  spec.agents = {a, b};
  return spec;
}

TEST(KktResidual, VanishesForZeroCostFeasiblePoint) {
  GameSpec spec = SingleAgentQuadratic(Vector2d(0, 0), Vector2d(1, 0),
                                       Vector2d(3, 3), 0.0, 0.0, 8);
  std::vector<ControlInput> controls(8, ControlInput{Vector2d(0.3, -0.1)});
  JointTrajectory joint = {rollout(spec.agents[0].initial_state, controls, spec.dt)};
  std::vector<std::vector<Vector4d>> lambdas = {
      std::vector<Vector4d>(8, Vector4d::Zero())};
  const VectorXd r = kkt_residual(spec, joint, lambdas);
  EXPECT_LE(r.lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(KktResidual, OutputLengthMatchesBlockBookkeeping) {
  GameSpec spec = TwoAgentInteracting();
  const int T = spec.horizon;
  JointTrajectory joint;
  std::vector<std::vector<Vector4d>> lambdas;
  for (int i = 0; i < 2; ++i) {
    std::vector<ControlInput> controls(static_cast<size_t>(T));
    joint.push_back(rollout(spec.agents[static_cast<size_t>(i)].initial_state,
                            controls, spec.dt));
    lambdas.emplace_back(static_cast<size_t>(T), Vector4d::Zero());
  }
  // Per agent: 4T (x-stationarity) + 2T (u-stationarity) + 4T (dynamics).
  EXPECT_EQ(kkt_residual(spec, joint, lambdas).size(), 2 * (4 * T + 2 * T + 4 * T));
}

TEST(KktResidual, DimensionMismatchIsStructuredError) {
  GameSpec spec = TwoAgentInteracting();
  JointTrajectory joint(2);
  std::vector<std::vector<Vector4d>> lambdas(2);
  EXPECT_THROW(kkt_residual(spec, joint, lambdas), Error);
}

TEST(SolveOlne, QuadraticGameSolvedInOneNewtonStep) {
  GameSpec spec;
  spec.dt = 0.1;
  spec.horizon = 15;
  for (int i = 0; i < 2; ++i) {
    AgentSpec agent;
    agent.initial_state =
        AgentState{Vector2d(i * 2.0, -1.0), Vector2d(0.0, 0.4)};
    agent.features.push_back({CostFeature::goal(Vector2d(1.0 - i, 4.0)), 0.8});
    agent.features.push_back({CostFeature::effort(), 1.2});
    spec.agents.push_back(agent);
  }
  const SolverResult result = solve_olne(spec);
  ASSERT_TRUE(result.converged);
  // Affine first-order system: the first full step lands on the solution.
  ASSERT_GE(result.residual_history.size(), 2u);
  EXPECT_LE(result.residual_history[1], 1e-10);
  EXPECT_LE(result.kkt_residual_norm, 1e-10);
}

TEST(SolveOlne, MatchesRiccatiOracleOnRandomSingleAgentGames) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector2d start(8.0 * unif(rng), 8.0 * unif(rng));
    const Vector2d v0(2.0 * unif(rng), 2.0 * unif(rng));
    const Vector2d goal(8.0 * unif(rng), 8.0 * unif(rng));
    const double w_goal = 0.5 + 0.5 * std::abs(unif(rng));
    const double w_effort = 0.5 + 0.5 * std::abs(unif(rng));
    GameSpec spec = SingleAgentQuadratic(start, v0, goal, w_goal, w_effort);

    const SolverResult result = solve_olne(spec);
    ASSERT_TRUE(result.converged);

    const auto jac = dynamics_jacobians(spec.dt);
    const auto oracle = test::solve_tracking_lqr(
        jac.A, jac.B_dt, spec.agents[0].initial_state.stacked(), spec.horizon,
        test::goal_effort_costs(spec.horizon, w_goal, w_effort, goal));
    for (int k = 0; k <= spec.horizon; ++k) {
      const Vector4d x = result.trajectories[0].states[static_cast<size_t>(k)].stacked();
      EXPECT_LE((x - oracle.states[static_cast<size_t>(k)]).lpNorm<Eigen::Infinity>(),
                1e-6);
    }
  }
}

TEST(RiccatiOracle, OutputIsLocallyOptimalUnderControlPerturbations) {
  // Certifies the oracle itself, independently of any solver: random
  // feasible control perturbations must not reduce the quadratic cost.
  const int T = 12;
  const Vector2d goal(2.0, -1.0);
  const double w_goal = 1.0, w_effort = 0.7;
  const auto jac = dynamics_jacobians(0.1);
  const Vector4d x0(0.0, 0.0, 1.0, 0.0);
  const auto costs = test::goal_effort_costs(T, w_goal, w_effort, goal);
  const auto sol = test::solve_tracking_lqr(jac.A, jac.B_dt, x0, T, costs);

  auto total_cost = [&](const std::vector<Vector2d>& controls) {
    double cost = 0.0;
    Vector4d x = x0;
    for (int k = 0; k < T; ++k) {
      cost += w_effort * controls[static_cast<size_t>(k)].squaredNorm();
      x = jac.A * x + jac.B_dt * controls[static_cast<size_t>(k)];
      cost += w_goal * (x.head<2>() - goal).squaredNorm();
    }
    return cost;
  };

  const double nominal = total_cost(sol.controls);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 0.05);
  for (int p = 0; p < 200; ++p) {
    auto perturbed = sol.controls;
    for (auto& u : perturbed) u += Vector2d(gauss(rng), gauss(rng));
    EXPECT_GE(total_cost(perturbed), nominal - 1e-10);
  }
}

TEST(SolveOlne, MirrorSymmetricGameHasMirrorSymmetricSolution) {
  GameSpec spec = TwoAgentInteracting();
  const SolverResult result = solve_olne(spec);
  ASSERT_TRUE(result.converged);
  // The two agents' setups map onto each other under p -> -p.
  for (int k = 0; k <= spec.horizon; ++k) {
    const auto& s0 = result.trajectories[0].states[static_cast<size_t>(k)];
    const auto& s1 = result.trajectories[1].states[static_cast<size_t>(k)];
    EXPECT_LE((s0.position + s1.position).lpNorm<Eigen::Infinity>(), 1e-6);
    EXPECT_LE((s0.velocity + s1.velocity).lpNorm<Eigen::Infinity>(), 1e-6);
  }
}

TEST(SolveOlne, ConvergedSolutionsCarryCertificates) {
  GameSpec spec = TwoAgentInteracting();
  const SolverResult result = solve_olne(spec);
  ASSERT_TRUE(result.converged);
  EXPECT_LE(result.kkt_residual_norm, 1e-6);
  EXPECT_LE(trajectory_feasibility_residual(result.trajectories[0], spec), 1e-8);
  EXPECT_LE(trajectory_feasibility_residual(result.trajectories[1], spec), 1e-8);
  const VectorXd r = kkt_residual(spec, result.trajectories, result.multipliers);
  EXPECT_LE(r.lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(SolveOlne, MeritHistoryIsNonIncreasing) {
  GameSpec spec = TwoAgentInteracting();
  const SolverResult result = solve_olne(spec);
  ASSERT_TRUE(result.converged);
  for (size_t i = 1; i < result.residual_history.size(); ++i)
    EXPECT_LE(result.residual_history[i], result.residual_history[i - 1] + 1e-12);
}

TEST(SolveOlne, WeightScalingLeavesTrajectoryAndScalesMultipliers) {
  GameSpec spec = TwoAgentInteracting();
  const SolverResult base = solve_olne(spec);
  ASSERT_TRUE(base.converged);

  const double c = 3.0;
  GameSpec scaled = spec;
  for (auto& wf : scaled.agents[0].features) wf.weight *= c;
  const SolverResult result = solve_olne(scaled);
  ASSERT_TRUE(result.converged);

  for (int k = 0; k <= spec.horizon; ++k)
    for (int i = 0; i < 2; ++i)
      EXPECT_LE((result.trajectories[static_cast<size_t>(i)]
                     .states[static_cast<size_t>(k)]
                     .stacked() -
                 base.trajectories[static_cast<size_t>(i)]
                     .states[static_cast<size_t>(k)]
                     .stacked())
                    .lpNorm<Eigen::Infinity>(),
                1e-5);
  for (int k = 0; k < spec.horizon; ++k) {
    EXPECT_LE((result.multipliers[0][static_cast<size_t>(k)] -
               c * base.multipliers[0][static_cast<size_t>(k)])
                  .lpNorm<Eigen::Infinity>(),
              1e-5);
    EXPECT_LE((result.multipliers[1][static_cast<size_t>(k)] -
               base.multipliers[1][static_cast<size_t>(k)])
                  .lpNorm<Eigen::Infinity>(),
              1e-5);
  }
}

TEST(LocalNashCheck, ConvergedSolutionPasses) {
  GameSpec spec = TwoAgentInteracting();
  const SolverResult result = solve_olne(spec);
  ASSERT_TRUE(result.converged);
  const auto check = local_nash_check(spec, result, 200, 1e-3, 11);
  EXPECT_TRUE(check.is_local_nash);
}

TEST(LocalNashCheck, NonEquilibriumPointFails) {
  GameSpec spec = TwoAgentInteracting();
  SolverResult result = solve_olne(spec);
  ASSERT_TRUE(result.converged);
  // Push agent 0 hard off its stationary controls and re-roll its states.
  auto& traj = result.trajectories[0];
  for (auto& u : traj.controls) u.acceleration += Vector2d(2.0, -1.5);
  for (size_t k = 0; k < traj.controls.size(); ++k)
    traj.states[k + 1] = step_dynamics(traj.states[k], traj.controls[k], spec.dt);
  const auto check = local_nash_check(spec, result, 200, 1e-1, 11);
  EXPECT_FALSE(check.is_local_nash);
  EXPECT_GT(check.worst_cost_decrease, 0.0);
}

TEST(LocalNashCheck, ZeroRadiusIsTriviallyTrue) {
  GameSpec spec = TwoAgentInteracting();
  const SolverResult result = solve_olne(spec);
  const auto check = local_nash_check(spec, result, 50, 0.0, 11);
  EXPECT_TRUE(check.is_local_nash);
  EXPECT_LE(check.worst_cost_decrease, 1e-12);
}

TEST(SolveOlne, NonConvergenceIsFlaggedNotThrown) {
  GameSpec spec = TwoAgentInteracting();
  NashSolverConfig config;
  config.max_iterations = 1;
  config.kkt_tolerance = 1e-12;
  const SolverResult result = solve_olne(spec, config);
  EXPECT_FALSE(result.converged);
  EXPECT_GT(result.kkt_residual_norm, 1e-12);
}

}  // namespace
}  // namespace ocg
