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

#ifndef OCG_DYNAMICS_HPP
#define OCG_DYNAMICS_HPP

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ocg/types.hpp"

namespace ocg {

// Discrete double-integrator step. Position advances with the pre-update
// velocity:
//   p_next = p + v * dt
//   v_next = v + a * dt
inline AgentState step_dynamics(const AgentState& state,
                                const ControlInput& control, double dt) {
  if (!(dt > 0.0)) throw Error("step_dynamics: dt must be positive");
  if (!state.is_finite() || !control.is_finite())
    throw Error("step_dynamics: nonfinite state or control");
  AgentState next;
  next.position = state.position + state.velocity * dt;
  next.velocity = state.velocity + control.acceleration * dt;
  return next;
}

// Constant transition matrix A and control map B*dt such that
// step_dynamics(x, u, dt) == A x + (B*dt) u exactly.
struct DynamicsJacobians {
  Matrix4d A;
  Eigen::Matrix<double, 4, 2> B_dt;
};

inline DynamicsJacobians dynamics_jacobians(double dt) {
  if (!(dt > 0.0)) throw Error("dynamics_jacobians: dt must be positive");
  DynamicsJacobians jac;
  jac.A.setIdentity();
  jac.A.topRightCorner<2, 2>() = dt * Matrix2d::Identity();
  jac.B_dt.setZero();
  jac.B_dt.bottomRows<2>() = dt * Matrix2d::Identity();
  return jac;
}

// Rolls controls out from an initial state; the result is dynamically
// feasible by construction.
inline Trajectory rollout(const AgentState& initial,
                          const std::vector<ControlInput>& controls,
                          double dt) {
  Trajectory traj;
  traj.states.reserve(controls.size() + 1);
  traj.controls = controls;
  traj.states.push_back(initial);
  for (const auto& u : controls)
    traj.states.push_back(step_dynamics(traj.states.back(), u, dt));
  return traj;
}

// Max-over-time infinity norm of the one-step dynamics defect
// x[k+1] - f(x[k], u[k]); zero for exactly feasible trajectories.
inline double trajectory_feasibility_residual(const Trajectory& traj,
                                              const GameSpec& spec) {
  if (!traj.lengths_consistent())
    throw Error("trajectory_feasibility_residual: " +
                std::to_string(traj.states.size()) + " states vs " +
                std::to_string(traj.controls.size()) +
                " controls (expected states = controls + 1)");
  if (traj.horizon() != spec.horizon)
    throw Error("trajectory_feasibility_residual: trajectory horizon " +
                std::to_string(traj.horizon()) + " does not match spec horizon " +
                std::to_string(spec.horizon));
  double residual = 0.0;
  for (size_t k = 0; k < traj.controls.size(); ++k) {
    const AgentState pred =
        step_dynamics(traj.states[k], traj.controls[k], spec.dt);
    const Vector4d defect = traj.states[k + 1].stacked() - pred.stacked();
    residual = std::max(residual, defect.lpNorm<Eigen::Infinity>());
  }
  return residual;
}

inline constexpr double kFeasibilityTolerance = 1e-8;

inline bool is_dynamically_feasible(const Trajectory& traj,
                                    const GameSpec& spec) {
  return trajectory_feasibility_residual(traj, spec) <= kFeasibilityTolerance;
}

}  // namespace ocg

#endif  // OCG_DYNAMICS_HPP
