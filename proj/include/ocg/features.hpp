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

#ifndef OCG_FEATURES_HPP
#define OCG_FEATURES_HPP

#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ocg/types.hpp"

namespace ocg {

// Derivatives of one feature evaluated at a single stage. All features
// depend on positions and the ego control only, so gradients and Hessians
// are stored as 2x2 position/control blocks; velocity blocks are zero.
// Cross terms between two distinct non-ego agents are zero for every
// feature in the library, as are position/control cross terms.
struct StageFeatureDerivs {
  double value = 0.0;
  Vector2d d_ego = Vector2d::Zero();      // d/d p_ego
  Vector2d d_control = Vector2d::Zero();  // d/d u_ego
  Matrix2d h_ego_ego = Matrix2d::Zero();
  Matrix2d h_control = Matrix2d::Zero();
  std::vector<std::pair<int, Vector2d>> d_other;        // d/d p_j
  std::vector<std::pair<int, Matrix2d>> h_ego_other;    // d2/d p_ego d p_j
  std::vector<std::pair<int, Matrix2d>> h_other_other;  // d2/d p_j d p_j
};

// Evaluates one feature for agent `ego` at time step k given all agents'
// positions and ego's control for the transition into step k.
inline StageFeatureDerivs evaluate_feature(const CostFeature& feature,
                                           const std::vector<Vector2d>& positions,
                                           const Vector2d& control, int ego,
                                           int k) {
  StageFeatureDerivs out;
  const Vector2d& p = positions[static_cast<size_t>(ego)];
  switch (feature.kind) {
    case FeatureKind::kGoal: {
      const Vector2d diff = p - feature.goal_at(k);
      out.value = diff.squaredNorm();
      out.d_ego = 2.0 * diff;
      out.h_ego_ego = 2.0 * Matrix2d::Identity();
      break;
    }
    case FeatureKind::kProximity: {
      for (int j = 0; j < static_cast<int>(positions.size()); ++j) {
        if (j == ego) continue;
        const Vector2d q = p - positions[static_cast<size_t>(j)];
        const double s = q.squaredNorm() + feature.epsilon;
        out.value += 1.0 / s;
        const Vector2d grad = -2.0 * q / (s * s);
        const Matrix2d hess = -2.0 / (s * s) * Matrix2d::Identity() +
                              8.0 / (s * s * s) * q * q.transpose();
        out.d_ego += grad;
        out.h_ego_ego += hess;
        out.d_other.emplace_back(j, -grad);
        out.h_ego_other.emplace_back(j, -hess);
        out.h_other_other.emplace_back(j, hess);
      }
      break;
    }
    case FeatureKind::kEffort: {
      out.value = control.squaredNorm();
      out.d_control = 2.0 * control;
      out.h_control = 2.0 * Matrix2d::Identity();
      break;
    }
    case FeatureKind::kLane: {
      const Vector2d t = feature.lane_direction.normalized();
      const Vector2d n(-t.y(), t.x());
      const double d = n.dot(p - feature.lane_point);
      out.value = d * d;
      out.d_ego = 2.0 * d * n;
      out.h_ego_ego = 2.0 * n * n.transpose();
      break;
    }
  }
  return out;
}

namespace detail {

inline std::vector<Vector2d> joint_positions(const std::vector<AgentState>& joint) {
  std::vector<Vector2d> p;
  p.reserve(joint.size());
  for (const auto& s : joint) p.push_back(s.position);
  return p;
}

}  // namespace detail

// Feature value as a function of the joint state and the ego control.
// The time index selects the goal point for time-varying goal tracks.
inline double feature_value(const CostFeature& feature,
                            const std::vector<AgentState>& joint_state,
                            const ControlInput& control, int ego, int k = 0) {
  if (ego < 0 || ego >= static_cast<int>(joint_state.size()))
    throw Error("feature_value: ego index out of range");
  return evaluate_feature(feature, detail::joint_positions(joint_state),
                          control.acceleration, ego, k)
      .value;
}

// Dense gradient and Hessian of feature_value with respect to the stacked
// vector (x^0, ..., x^{M-1}, u_ego) of dimension 4M + 2. Velocity entries
// are structurally zero.
struct FeatureDerivatives {
  VectorXd gradient;
  MatrixXd hessian;
};

inline FeatureDerivatives feature_derivatives(
    const CostFeature& feature, const std::vector<AgentState>& joint_state,
    const ControlInput& control, int ego, int k = 0) {
  if (ego < 0 || ego >= static_cast<int>(joint_state.size()))
    throw Error("feature_derivatives: ego index out of range");
  const int M = static_cast<int>(joint_state.size());
  const int dim = 4 * M + 2;
  const auto d = evaluate_feature(feature, detail::joint_positions(joint_state),
                                  control.acceleration, ego, k);

  FeatureDerivatives out;
  out.gradient = VectorXd::Zero(dim);
  out.hessian = MatrixXd::Zero(dim, dim);

  const auto pos = [](int agent) { return 4 * agent; };  // position offset
  const int uc = 4 * M;                                  // control offset

  out.gradient.segment<2>(pos(ego)) = d.d_ego;
  out.gradient.segment<2>(uc) = d.d_control;
  for (const auto& [j, g] : d.d_other) out.gradient.segment<2>(pos(j)) += g;

  out.hessian.block<2, 2>(pos(ego), pos(ego)) = d.h_ego_ego;
  out.hessian.block<2, 2>(uc, uc) = d.h_control;
  for (const auto& [j, h] : d.h_ego_other) {
    out.hessian.block<2, 2>(pos(ego), pos(j)) += h;
    out.hessian.block<2, 2>(pos(j), pos(ego)) += h.transpose();
  }
  for (const auto& [j, h] : d.h_other_other)
    out.hessian.block<2, 2>(pos(j), pos(j)) += h;
  return out;
}

// Weighted running cost of one agent at one stage: sum_l w_l g_l(x_k, u).
inline double running_cost(const GameSpec& spec, int ego,
                           const std::vector<AgentState>& joint_state,
                           const ControlInput& control, int k) {
  if (ego < 0 || ego >= spec.num_agents())
    throw Error("running_cost: ego index out of range");
  double cost = 0.0;
  for (const auto& wf : spec.agents[static_cast<size_t>(ego)].features)
    cost += wf.weight * feature_value(wf.feature, joint_state, control, ego, k);
  return cost;
}

// Cumulative cost of agent `ego` along a joint trajectory. Stage k in
// [1, T] pairs the joint state at step k with ego's control u_{k-1}; the
// initial state carries no cost.
inline double trajectory_cost(const GameSpec& spec, int ego,
                              const JointTrajectory& joint) {
  const int T = spec.horizon;
  double total = 0.0;
  std::vector<AgentState> stage(joint.size());
  for (int k = 1; k <= T; ++k) {
    for (size_t i = 0; i < joint.size(); ++i)
      stage[i] = joint[i].states[static_cast<size_t>(k)];
    total += running_cost(spec, ego, stage,
                          joint[static_cast<size_t>(ego)].controls[static_cast<size_t>(k - 1)],
                          k);
  }
  return total;
}

}  // namespace ocg

#endif  // OCG_FEATURES_HPP
