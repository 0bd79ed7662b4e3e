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
#include <vector>

#include <gtest/gtest.h>

#include "ocg/dynamics.hpp"
#include "ocg/features.hpp"
#include "oracles/finite_diff.hpp"

namespace ocg {
namespace {

TEST(StepDynamics, ZeroAccelerationAdvancesPositionOnly) {
  AgentState x;
  x.position = Vector2d(0, 0);
  x.velocity = Vector2d(1, 0);
  const AgentState next = step_dynamics(x, ControlInput{Vector2d(0, 0)}, 0.1);
  EXPECT_TRUE(next.position.isApprox(Vector2d(0.1, 0.0), 1e-15));
  EXPECT_TRUE(next.velocity.isApprox(Vector2d(1.0, 0.0), 1e-15));
}

TEST(StepDynamics, PositionUsesPreUpdateVelocity) {
  AgentState x;  // at rest; acceleration must not move the position this step
  const AgentState next = step_dynamics(x, ControlInput{Vector2d(0, 2)}, 0.5);
  EXPECT_TRUE(next.position.isZero(1e-15));
  EXPECT_TRUE(next.velocity.isApprox(Vector2d(0.0, 1.0), 1e-15));
}

TEST(StepDynamics, DirectSubstitution) {
  AgentState x;
  x.position = Vector2d(1, 1);
  x.velocity = Vector2d(1, -1);
  const AgentState next = step_dynamics(x, ControlInput{Vector2d(2, 0)}, 1.0);
  EXPECT_TRUE(next.position.isApprox(Vector2d(2.0, 0.0), 1e-15));
  EXPECT_TRUE(next.velocity.isApprox(Vector2d(3.0, -1.0), 1e-15));
}

TEST(StepDynamics, NonfiniteInputIsRejected) {
  AgentState x;
  x.position.x() = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(step_dynamics(x, ControlInput{}, 0.1), Error);
  EXPECT_THROW(step_dynamics(AgentState{}, ControlInput{}, 0.0), Error);
}

TEST(DynamicsJacobians, BlocksReadOffTheTransition) {
  const auto jac = dynamics_jacobians(0.1);
  EXPECT_TRUE((jac.A.topRightCorner<2, 2>().isApprox(0.1 * Matrix2d::Identity())));
  EXPECT_TRUE(jac.B_dt.bottomRows<2>().isApprox(0.1 * Matrix2d::Identity()));
  EXPECT_TRUE(jac.B_dt.topRows<2>().isZero());
  EXPECT_TRUE((dynamics_jacobians(1.0).A.topRightCorner<2, 2>().isApprox(
      Matrix2d::Identity())));
}

TEST(DynamicsJacobians, ConsistentWithStepDynamicsOnRandomInputs) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> gauss(0.0, 3.0);
  const double dt = 0.07;
  const auto jac = dynamics_jacobians(dt);
  for (int trial = 0; trial < 100; ++trial) {
    AgentState x;
    x.position = Vector2d(gauss(rng), gauss(rng));
    x.velocity = Vector2d(gauss(rng), gauss(rng));
    const ControlInput u{Vector2d(gauss(rng), gauss(rng))};
    const Vector4d via_matrix = jac.A * x.stacked() + jac.B_dt * u.acceleration;
    const Vector4d via_step = step_dynamics(x, u, dt).stacked();
    EXPECT_LE((via_matrix - via_step).lpNorm<Eigen::Infinity>(), 1e-14);
  }
}

std::vector<AgentState> MakeJointState(const std::vector<Vector2d>& positions) {
  std::vector<AgentState> joint(positions.size());
  for (size_t i = 0; i < positions.size(); ++i) joint[i].position = positions[i];
  return joint;
}

TEST(FeatureValue, GoalIsSquaredDistance) {
  const auto joint = MakeJointState({Vector2d(1, 1)});
  EXPECT_NEAR(feature_value(CostFeature::goal(Vector2d(0, 0)), joint,
                            ControlInput{}, 0),
              2.0, 1e-15);
}

TEST(FeatureValue, ProximityIsInverseSquaredDistance) {
  const auto joint = MakeJointState({Vector2d(0, 0), Vector2d(2, 0)});
  EXPECT_NEAR(feature_value(CostFeature::proximity(0.0), joint, ControlInput{}, 0),
              0.25, 1e-15);
}

TEST(FeatureValue, ProximityWithSingleAgentIsEmptySum) {
  const auto joint = MakeJointState({Vector2d(0, 0)});
  EXPECT_EQ(feature_value(CostFeature::proximity(), joint, ControlInput{}, 0), 0.0);
}

TEST(FeatureValue, LaneDeviationIsSquaredPerpendicularDistance) {
  const auto joint = MakeJointState({Vector2d(5, 0.3)});
  const auto lane = CostFeature::lane(Vector2d(0, 0), Vector2d(1, 0));
  EXPECT_NEAR(feature_value(lane, joint, ControlInput{}, 0), 0.09, 1e-12);
}

TEST(FeatureValue, GoalTrackReadsTimeIndex) {
  auto f = CostFeature::goal_track({Vector2d(0, 0), Vector2d(1, 0), Vector2d(2, 0)});
  const auto joint = MakeJointState({Vector2d(0, 0)});
  EXPECT_NEAR(feature_value(f, joint, ControlInput{}, 0, 2), 4.0, 1e-15);
  // Past the end of the track the last goal is held.
  EXPECT_NEAR(feature_value(f, joint, ControlInput{}, 0, 9), 4.0, 1e-15);
}

TEST(FeatureDerivatives, EffortGradientAndHessian) {
  const auto joint = MakeJointState({Vector2d(0, 0)});
  const auto d = feature_derivatives(CostFeature::effort(), joint,
                                     ControlInput{Vector2d(3, 4)}, 0);
  EXPECT_TRUE(d.gradient.tail<2>().isApprox(Vector2d(6, 8), 1e-15));
  EXPECT_TRUE((d.hessian.bottomRightCorner<2, 2>().isApprox(
      2.0 * Matrix2d::Identity(), 1e-15)));
  EXPECT_TRUE(d.gradient.head<4>().isZero());
}

TEST(FeatureDerivatives, GoalGradientVanishesAtGoal) {
  const auto joint = MakeJointState({Vector2d(1.5, -2.0)});
  const auto d = feature_derivatives(CostFeature::goal(Vector2d(1.5, -2.0)),
                                     joint, ControlInput{}, 0);
  EXPECT_TRUE(d.gradient.isZero(1e-15));
}

// Finite-difference oracle over the stacked (joint state, control) vector,
// with positions kept away from the smoothed proximity singularity.
TEST(FeatureDerivatives, MatchFiniteDifferencesOnRandomInputs) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unif(-5.0, 5.0);

  const std::vector<CostFeature> features = {
      CostFeature::goal(Vector2d(1.0, -2.0)),
      CostFeature::proximity(1e-3),
      CostFeature::effort(),
      CostFeature::lane(Vector2d(0.5, 0.5), Vector2d(2.0, 1.0)),
  };

  for (const auto& feature : features) {
    int checked = 0;
    while (checked < 100) {
      const int M = 2 + static_cast<int>(rng() % 3);
      std::vector<AgentState> joint(static_cast<size_t>(M));
      for (auto& s : joint) {
        s.position = Vector2d(unif(rng), unif(rng));
        s.velocity = Vector2d(unif(rng), unif(rng));
      }
      bool well_separated = true;
      for (int i = 0; i < M && well_separated; ++i)
        for (int j = i + 1; j < M; ++j)
          if ((joint[static_cast<size_t>(i)].position -
               joint[static_cast<size_t>(j)].position)
                  .norm() < 0.3)
            well_separated = false;
      if (!well_separated) continue;
      ++checked;

      const ControlInput u{Vector2d(unif(rng), unif(rng))};
      const int ego = static_cast<int>(rng() % static_cast<std::uint64_t>(M));
      const int dim = 4 * M + 2;

      auto unstack = [&](const VectorXd& v) {
        std::vector<AgentState> js(static_cast<size_t>(M));
        for (int a = 0; a < M; ++a)
          js[static_cast<size_t>(a)] = AgentState::from_stacked(v.segment<4>(4 * a));
        return std::make_pair(js, ControlInput{v.tail<2>()});
      };
      VectorXd v0(dim);
      for (int a = 0; a < M; ++a)
        v0.segment<4>(4 * a) = joint[static_cast<size_t>(a)].stacked();
      v0.tail<2>() = u.acceleration;

      const auto analytic = feature_derivatives(feature, joint, u, ego, 1);
      const VectorXd fd_grad = test::fd_gradient(
          [&](const VectorXd& v) {
            auto [js, uu] = unstack(v);
            return feature_value(feature, js, uu, ego, 1);
          },
          v0);
      EXPECT_LE(test::relative_error(fd_grad, analytic.gradient), 1e-5);

      const MatrixXd fd_hess = test::fd_hessian_of_gradient(
          [&](const VectorXd& v) {
            auto [js, uu] = unstack(v);
            return feature_derivatives(feature, js, uu, ego, 1).gradient;
          },
          v0);
      EXPECT_LE(test::relative_error(fd_hess, analytic.hessian), 1e-5);
      EXPECT_TRUE(analytic.hessian.isApprox(analytic.hessian.transpose(), 1e-12));
    }
  }
}

TEST(FeatureDerivatives, ProximitySymmetricUnderNonEgoPermutation) {
  const auto joint =
      MakeJointState({Vector2d(0, 0), Vector2d(1, 2), Vector2d(-3, 1)});
  const auto swapped =
      MakeJointState({Vector2d(0, 0), Vector2d(-3, 1), Vector2d(1, 2)});
  const auto f = CostFeature::proximity();
  EXPECT_NEAR(feature_value(f, joint, ControlInput{}, 0),
              feature_value(f, swapped, ControlInput{}, 0), 1e-15);
}

GameSpec TwoAgentSpec() {
  GameSpec spec;
  spec.horizon = 5;
  AgentSpec a;
  a.features.push_back({CostFeature::goal(Vector2d(0, 0)), 1.0});
  a.features.push_back({CostFeature::proximity(), 0.0});
  a.features.push_back({CostFeature::effort(), 0.0});
  spec.agents = {a, a};
  return spec;
}

TEST(RunningCost, UnitWeightSelectsSingleFeature) {
  GameSpec spec = TwoAgentSpec();
  const auto joint = MakeJointState({Vector2d(1, 1), Vector2d(4, 4)});
  const double expected =
      feature_value(spec.agents[0].features[0].feature, joint, ControlInput{}, 0);
  EXPECT_NEAR(running_cost(spec, 0, joint, ControlInput{}, 0), expected, 1e-15);
}

TEST(RunningCost, AllZeroStateCostsNothingExceptProximity) {
  GameSpec spec = TwoAgentSpec();
  spec.agents[0].features[1].weight = 2.0;
  const auto joint = MakeJointState({Vector2d(0, 0), Vector2d(0, 0)});
  const double prox_only =
      2.0 * feature_value(spec.agents[0].features[1].feature, joint,
                          ControlInput{}, 0);
  EXPECT_NEAR(running_cost(spec, 0, joint, ControlInput{}, 0), prox_only, 1e-15);
  EXPECT_GT(prox_only, 0.0);
}

TEST(RunningCost, PositivelyHomogeneousInWeights) {
  GameSpec spec = TwoAgentSpec();
  spec.agents[0].features[1].weight = 0.7;
  spec.agents[0].features[2].weight = 0.3;
  const auto joint = MakeJointState({Vector2d(1, 2), Vector2d(-1, 0.5)});
  const ControlInput u{Vector2d(0.4, -0.2)};
  const double base = running_cost(spec, 0, joint, u, 0);
  GameSpec doubled = spec;
  for (auto& wf : doubled.agents[0].features) wf.weight *= 2.0;
  EXPECT_NEAR(running_cost(doubled, 0, joint, u, 0), 2.0 * base, 1e-12);
}

}  // namespace
}  // namespace ocg
