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

#ifndef OCG_NASH_SOLVER_HPP
#define OCG_NASH_SOLVER_HPP

#include <algorithm>
#include <limits>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "ocg/dynamics.hpp"
#include "ocg/features.hpp"
#include "ocg/types.hpp"

namespace ocg {

struct NashSolverConfig {
  double kkt_tolerance = 1e-6;  // infinity norm of the stacked conditions
  int max_iterations = 100;
  double armijo_factor = 1e-4;
  double backtrack_ratio = 0.5;
  double min_step = 1e-10;
  double levenberg_floor = 1e-8;

  void validate() const {
    if (!(kkt_tolerance > 0.0)) throw Error("solver config: tolerance must be > 0");
    if (max_iterations < 1) throw Error("solver config: max_iterations must be >= 1");
    if (!(backtrack_ratio > 0.0 && backtrack_ratio < 1.0))
      throw Error("solver config: backtracking ratio must be in (0, 1)");
  }
};

// ---------------------------------------------------------------------------
// Stacked first-order system.
//
// A stacked game is a set of branches, each holding a list of agents that
// interact only with agents in the same branch. Plain Nash games are the
// one-branch case. Contingency games add a second branch plus a tie between
// one designated agent's controls in the two branches over an initial
// window; the tie carries its own multipliers.
//
// Per agent the unknowns are [x_1..x_T (4T) | u_0..u_{T-1} (2T) |
// lambda_0..lambda_{T-1} (4T)] and the equations are, in the same order,
// stationarity in x, stationarity in u, and the dynamics defects. Tie
// multipliers and tie rows sit at the tail. Agent cost at stage k in [1,T]
// couples the branch's joint state at step k with the agent's control
// u_{k-1}; the stage cost is scaled by cost_scale (used for belief
// weighting).
// ---------------------------------------------------------------------------

struct StackedAgent {
  AgentState initial_state;
  std::vector<WeightedFeature> features;
  double cost_scale = 1.0;
};

struct StackedBranch {
  std::vector<StackedAgent> agents;
};

struct StackedGame {
  double dt = 0.1;
  int horizon = 0;
  std::vector<StackedBranch> branches;
  bool has_tie = false;
  int tie_steps = 0;  // controls with k < tie_steps are tied
  int ego_branch0 = 0;  // agent index of the tied agent within branch 0
  int ego_branch1 = 0;  // agent index of the tied agent within branch 1

  int num_agents_total() const {
    int n = 0;
    for (const auto& b : branches) n += static_cast<int>(b.agents.size());
    return n;
  }
};

namespace detail {

// Variable/row offsets into the stacked vector.
class StackedLayout {
 public:
  explicit StackedLayout(const StackedGame& game) : T_(game.horizon) {
    int offset = 0;
    for (const auto& branch : game.branches) {
      agent_base_.emplace_back();
      for (size_t i = 0; i < branch.agents.size(); ++i) {
        agent_base_.back().push_back(offset);
        offset += 10 * T_;
      }
    }
    tie_base_ = offset;
    if (game.has_tie) offset += 2 * game.tie_steps;
    dim_ = offset;
  }

  int dim() const { return dim_; }
  int tie_base() const { return tie_base_; }
  // x_k for k in [1, T]
  int x(int b, int i, int k) const { return base(b, i) + 4 * (k - 1); }
  // u_k for k in [0, T)
  int u(int b, int i, int k) const { return base(b, i) + 4 * T_ + 2 * k; }
  // lambda_k for k in [0, T)
  int lam(int b, int i, int k) const { return base(b, i) + 6 * T_ + 4 * k; }
  int base(int b, int i) const {
    return agent_base_[static_cast<size_t>(b)][static_cast<size_t>(i)];
  }

 private:
  int T_;
  int dim_ = 0;
  int tie_base_ = 0;
  std::vector<std::vector<int>> agent_base_;
};

inline VectorXd stacked_residual(const StackedGame& game, const StackedLayout& L,
                                 const VectorXd& z) {
  const int T = game.horizon;
  const auto dyn = dynamics_jacobians(game.dt);
  VectorXd r = VectorXd::Zero(L.dim());

  for (size_t b = 0; b < game.branches.size(); ++b) {
    const auto& agents = game.branches[b].agents;
    const int Mb = static_cast<int>(agents.size());
    std::vector<Vector2d> positions(static_cast<size_t>(Mb));
    for (int k = 1; k <= T; ++k) {
      for (int i = 0; i < Mb; ++i)
        positions[static_cast<size_t>(i)] = z.segment<2>(L.x(static_cast<int>(b), i, k));
      for (int i = 0; i < Mb; ++i) {
        const auto& agent = agents[static_cast<size_t>(i)];
        const Vector2d control = z.segment<2>(L.u(static_cast<int>(b), i, k - 1));
        for (const auto& wf : agent.features) {
          if (wf.weight == 0.0) continue;
          const auto d = evaluate_feature(wf.feature, positions, control, i, k);
          const double w = agent.cost_scale * wf.weight;
          // Each agent's stationarity rows hold derivatives of its own
          // Lagrangian with respect to its own variables only; cross-agent
          // coupling enters through the Jacobian columns.
          r.segment<2>(L.x(static_cast<int>(b), i, k)) += w * d.d_ego;
          r.segment<2>(L.u(static_cast<int>(b), i, k - 1)) += w * d.d_control;
        }
      }
    }

    for (int i = 0; i < Mb; ++i) {
      const int bb = static_cast<int>(b);
      // Multiplier terms of the x-stationarity rows.
      for (int k = 1; k <= T; ++k) {
        auto row = r.segment<4>(L.x(bb, i, k));
        row += z.segment<4>(L.lam(bb, i, k - 1));
        if (k < T)
          row -= dyn.A.transpose() * z.segment<4>(L.lam(bb, i, k));
      }
      // Control stationarity multiplier terms.
      for (int k = 0; k < T; ++k)
        r.segment<2>(L.u(bb, i, k)) -=
            dyn.B_dt.transpose() * z.segment<4>(L.lam(bb, i, k));
      // Dynamics defects.
      const Vector4d x0 = agents[static_cast<size_t>(i)].initial_state.stacked();
      for (int k = 0; k < T; ++k) {
        const Vector4d xk = (k == 0) ? x0 : Vector4d(z.segment<4>(L.x(bb, i, k)));
        r.segment<4>(L.lam(bb, i, k)) =
            z.segment<4>(L.x(bb, i, k + 1)) - dyn.A * xk -
            dyn.B_dt * z.segment<2>(L.u(bb, i, k));
      }
    }
  }

  if (game.has_tie) {
    for (int k = 0; k < game.tie_steps; ++k) {
      const Vector2d gamma = z.segment<2>(L.tie_base() + 2 * k);
      r.segment<2>(L.u(0, game.ego_branch0, k)) += gamma;
      r.segment<2>(L.u(1, game.ego_branch1, k)) -= gamma;
      r.segment<2>(L.tie_base() + 2 * k) =
          z.segment<2>(L.u(0, game.ego_branch0, k)) -
          z.segment<2>(L.u(1, game.ego_branch1, k));
    }
  }
  return r;
}

inline void stacked_jacobian_triplets(const StackedGame& game,
                                      const StackedLayout& L, const VectorXd& z,
                                      std::vector<Eigen::Triplet<double>>& trip) {
  const int T = game.horizon;
  const auto dyn = dynamics_jacobians(game.dt);
  trip.clear();

  auto add_block = [&trip](int row, int col, const auto& block) {
    for (int r = 0; r < block.rows(); ++r)
      for (int c = 0; c < block.cols(); ++c)
        if (block(r, c) != 0.0) trip.emplace_back(row + r, col + c, block(r, c));
  };

  for (size_t b = 0; b < game.branches.size(); ++b) {
    const int bb = static_cast<int>(b);
    const auto& agents = game.branches[b].agents;
    const int Mb = static_cast<int>(agents.size());
    std::vector<Vector2d> positions(static_cast<size_t>(Mb));
    for (int k = 1; k <= T; ++k) {
      for (int i = 0; i < Mb; ++i)
        positions[static_cast<size_t>(i)] = z.segment<2>(L.x(bb, i, k));
      for (int i = 0; i < Mb; ++i) {
        const auto& agent = agents[static_cast<size_t>(i)];
        const Vector2d control = z.segment<2>(L.u(bb, i, k - 1));
        Matrix2d h_ee = Matrix2d::Zero();
        Matrix2d h_uu = Matrix2d::Zero();
        std::vector<std::pair<int, Matrix2d>> h_eo;
        for (const auto& wf : agent.features) {
          if (wf.weight == 0.0) continue;
          const auto d = evaluate_feature(wf.feature, positions, control, i, k);
          const double w = agent.cost_scale * wf.weight;
          h_ee += w * d.h_ego_ego;
          h_uu += w * d.h_control;
          for (const auto& [j, h] : d.h_ego_other) h_eo.emplace_back(j, w * h);
        }
        add_block(L.x(bb, i, k), L.x(bb, i, k), h_ee);
        add_block(L.u(bb, i, k - 1), L.u(bb, i, k - 1), h_uu);
        for (const auto& [j, h] : h_eo) add_block(L.x(bb, i, k), L.x(bb, j, k), h);
      }
    }

    const Matrix4d At = dyn.A.transpose();
    const Eigen::Matrix<double, 2, 4> Bt = dyn.B_dt.transpose();
    for (int i = 0; i < Mb; ++i) {
      for (int k = 1; k <= T; ++k) {
        add_block(L.x(bb, i, k), L.lam(bb, i, k - 1), Matrix4d::Identity());
        if (k < T) add_block(L.x(bb, i, k), L.lam(bb, i, k), Matrix4d(-At));
      }
      for (int k = 0; k < T; ++k) {
        add_block(L.u(bb, i, k), L.lam(bb, i, k),
                  Eigen::Matrix<double, 2, 4>(-Bt));
        add_block(L.lam(bb, i, k), L.x(bb, i, k + 1), Matrix4d::Identity());
        if (k > 0) add_block(L.lam(bb, i, k), L.x(bb, i, k), Matrix4d(-dyn.A));
        add_block(L.lam(bb, i, k), L.u(bb, i, k),
                  Eigen::Matrix<double, 4, 2>(-dyn.B_dt));
      }
    }
  }

  if (game.has_tie) {
    const Matrix2d I2 = Matrix2d::Identity();
    for (int k = 0; k < game.tie_steps; ++k) {
      const int g = L.tie_base() + 2 * k;
      add_block(L.u(0, game.ego_branch0, k), g, I2);
      add_block(L.u(1, game.ego_branch1, k), g, Matrix2d(-I2));
      add_block(g, L.u(0, game.ego_branch0, k), I2);
      add_block(g, L.u(1, game.ego_branch1, k), Matrix2d(-I2));
    }
  }
}

struct NewtonDiagnostics {
  int iterations = 0;
  bool converged = false;
  double residual_inf = std::numeric_limits<double>::infinity();
  // l2 norm of the stacked conditions per accepted step; non-increasing by
  // construction since the line search descends on 0.5 * ||G||^2.
  std::vector<double> residual_history;
};

// Damped Newton iteration on the stacked first-order system with
// Levenberg-style diagonal regularization and Armijo backtracking on the
// merit 0.5 * ||G||^2. The iterate with the smallest residual seen is kept
// when the iteration stops without converging.
inline NewtonDiagnostics damped_newton(const StackedGame& game,
                                       const StackedLayout& L, VectorXd& z,
                                       const NashSolverConfig& config) {
  config.validate();
  const int n = L.dim();
  NewtonDiagnostics diag;

  using SpMat = Eigen::SparseMatrix<double>;
  Eigen::SparseLU<SpMat> lu;
  std::vector<Eigen::Triplet<double>> trip;
  bool analyzed = false;

  VectorXd G = stacked_residual(game, L, z);
  if (!G.allFinite())
    throw Error("nash solver: nonfinite residual at the initial iterate");
  double res_inf = G.lpNorm<Eigen::Infinity>();
  double merit = 0.5 * G.squaredNorm();
  VectorXd best_z = z;
  double best_res = res_inf;
  diag.residual_history.push_back(G.norm());

  // Extra full steps taken after the tolerance is reached, to drive the
  // dynamics defects well below the feasibility tolerance before states
  // are re-rolled from the solved controls.
  const double polish_target = std::min(1e-12, config.kkt_tolerance);
  int polish_left = 4;
  bool reached_tol = res_inf <= config.kkt_tolerance;

  for (int it = 0; it < config.max_iterations + 4; ++it) {
    if (reached_tol && (res_inf <= polish_target || polish_left <= 0 ||
                        it >= config.max_iterations + 4))
      break;
    if (!reached_tol && it >= config.max_iterations) break;
    if (reached_tol) --polish_left;

    stacked_jacobian_triplets(game, L, z, trip);
    // Stable sparsity pattern: keep every diagonal entry present.
    const size_t struct_nnz = trip.size();
    for (int d = 0; d < n; ++d) trip.emplace_back(d, d, 0.0);
    SpMat J_true(n, n);
    J_true.setFromTriplets(trip.begin(), trip.end());

    VectorXd dz;
    double directional = 0.0;
    double mu = 0.0;
    bool have_step = false;
    for (int attempt = 0; attempt < 12 && !have_step; ++attempt) {
      trip.resize(struct_nnz);
      for (int d = 0; d < n; ++d) trip.emplace_back(d, d, mu);
      SpMat J(n, n);
      J.setFromTriplets(trip.begin(), trip.end());
      if (!analyzed) {
        lu.analyzePattern(J);
        analyzed = true;
      }
      lu.factorize(J);
      if (lu.info() == Eigen::Success) {
        dz = lu.solve(-G);
        if (dz.allFinite()) {
          // Armijo slope uses the unregularized Jacobian:
          // grad(merit) . dz = G^T J dz, which must be negative.
          directional = G.dot(VectorXd(J_true * dz));
          if (directional < 0.0) {
            have_step = true;
            break;
          }
        }
      }
      mu = (mu == 0.0) ? std::max(config.levenberg_floor, 1e-8) : mu * 10.0;
    }
    if (!have_step) break;  // stuck: report best iterate

    double alpha = 1.0;
    bool accepted = false;
    while (alpha >= config.min_step) {
      const VectorXd z_trial = z + alpha * dz;
      const VectorXd G_trial = stacked_residual(game, L, z_trial);
      if (G_trial.allFinite()) {
        const double merit_trial = 0.5 * G_trial.squaredNorm();
        if (merit_trial <= merit + config.armijo_factor * alpha * directional) {
          z = z_trial;
          G = G_trial;
          merit = merit_trial;
          accepted = true;
          break;
        }
      }
      alpha *= config.backtrack_ratio;
    }
    ++diag.iterations;
    if (!accepted) break;

    res_inf = G.lpNorm<Eigen::Infinity>();
    diag.residual_history.push_back(G.norm());
    if (!std::isfinite(res_inf))
      throw Error("nash solver: nonfinite residual at iteration " +
                  std::to_string(diag.iterations) + ", |z|_inf = " +
                  std::to_string(z.lpNorm<Eigen::Infinity>()));
    if (res_inf < best_res) {
      best_res = res_inf;
      best_z = z;
    }
    if (res_inf <= config.kkt_tolerance) reached_tol = true;
  }

  if (best_res < res_inf) {
    z = best_z;
    res_inf = best_res;
  }
  diag.residual_inf = res_inf;
  diag.converged = res_inf <= config.kkt_tolerance;
  return diag;
}

inline StackedGame with_proximity_scaled(const StackedGame& game, double eta) {
  StackedGame scaled = game;
  for (auto& branch : scaled.branches)
    for (auto& agent : branch.agents)
      for (auto& wf : agent.features)
        if (wf.feature.kind == FeatureKind::kProximity) wf.weight *= eta;
  return scaled;
}

// Newton with a proximity-continuation fallback. The repulsive coupling is
// the only nonlinearity in the system; when the direct solve stalls in a
// local minimum of the residual merit, re-solving along a ramp of proximity
// weights (starting from the quadratic game, which Newton finishes in one
// step) walks the iterate into the root's basin.
inline NewtonDiagnostics solve_stacked(const StackedGame& game,
                                       const StackedLayout& L, VectorXd& z,
                                       const NashSolverConfig& config) {
  const VectorXd z0 = z;
  NewtonDiagnostics diag = damped_newton(game, L, z, config);
  if (diag.converged) return diag;

  const VectorXd z_direct = z;
  const double direct_res = diag.residual_inf;
  z = z0;
  NewtonDiagnostics ramp;
  for (const double eta : {0.0, 0.3, 0.6, 1.0}) {
    const StackedGame stage = with_proximity_scaled(game, eta);
    NewtonDiagnostics stage_diag = damped_newton(stage, L, z, config);
    ramp.iterations += stage_diag.iterations;
    ramp.residual_history.insert(ramp.residual_history.end(),
                                 stage_diag.residual_history.begin(),
                                 stage_diag.residual_history.end());
    ramp.converged = stage_diag.converged;
    ramp.residual_inf = stage_diag.residual_inf;
    if (!stage_diag.converged) break;  // ramp lost the trail; keep best
  }
  if (!ramp.converged && direct_res < ramp.residual_inf) {
    z = z_direct;
    diag.iterations += ramp.iterations;
    return diag;
  }
  ramp.iterations += diag.iterations;
  return ramp;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Plain open-loop Nash games.
// ---------------------------------------------------------------------------

inline StackedGame make_single_branch_game(const GameSpec& spec) {
  StackedGame game;
  game.dt = spec.dt;
  game.horizon = spec.horizon;
  game.branches.emplace_back();
  for (const auto& agent : spec.agents)
    game.branches[0].agents.push_back(
        StackedAgent{agent.initial_state, agent.features, 1.0});
  return game;
}

// Straight-line warm start: one initial acceleration step toward each
// agent's (first) goal feature, then constant velocity.
inline JointTrajectory straight_line_warm_start(const GameSpec& spec) {
  JointTrajectory joint;
  for (const auto& agent : spec.agents) {
    Vector2d target = agent.initial_state.position;
    for (const auto& wf : agent.features)
      if (wf.feature.kind == FeatureKind::kGoal) {
        target = wf.feature.goal_at(spec.horizon);
        break;
      }
    const Vector2d v_des =
        (target - agent.initial_state.position) / (spec.horizon * spec.dt);
    std::vector<ControlInput> controls(static_cast<size_t>(spec.horizon));
    controls[0].acceleration = (v_des - agent.initial_state.velocity) / spec.dt;
    joint.push_back(rollout(agent.initial_state, controls, spec.dt));
  }
  return joint;
}

namespace detail {

inline void pack_plain(const StackedGame& game, const StackedLayout& L,
                       const JointTrajectory& joint,
                       const std::vector<std::vector<Vector4d>>* multipliers,
                       VectorXd& z) {
  const int T = game.horizon;
  const int M = static_cast<int>(game.branches[0].agents.size());
  for (int i = 0; i < M; ++i) {
    const auto& traj = joint[static_cast<size_t>(i)];
    for (int k = 1; k <= T; ++k)
      z.segment<4>(L.x(0, i, k)) = traj.states[static_cast<size_t>(k)].stacked();
    for (int k = 0; k < T; ++k)
      z.segment<2>(L.u(0, i, k)) =
          traj.controls[static_cast<size_t>(k)].acceleration;
    if (multipliers != nullptr)
      for (int k = 0; k < T; ++k)
        z.segment<4>(L.lam(0, i, k)) = (*multipliers)[static_cast<size_t>(i)]
                                                     [static_cast<size_t>(k)];
  }
}

inline void unpack_agent(const StackedLayout& L, const VectorXd& z, int b,
                         int i, const AgentState& x0, int T, double dt,
                         Trajectory& traj, std::vector<Vector4d>& lambdas,
                         bool reroll) {
  traj.states.assign(static_cast<size_t>(T) + 1, AgentState{});
  traj.controls.assign(static_cast<size_t>(T), ControlInput{});
  lambdas.assign(static_cast<size_t>(T), Vector4d::Zero());
  traj.states[0] = x0;
  for (int k = 0; k < T; ++k) {
    traj.controls[static_cast<size_t>(k)].acceleration = z.segment<2>(L.u(b, i, k));
    lambdas[static_cast<size_t>(k)] = z.segment<4>(L.lam(b, i, k));
  }
  if (reroll) {
    for (int k = 0; k < T; ++k)
      traj.states[static_cast<size_t>(k + 1)] = step_dynamics(
          traj.states[static_cast<size_t>(k)], traj.controls[static_cast<size_t>(k)], dt);
  } else {
    for (int k = 1; k <= T; ++k)
      traj.states[static_cast<size_t>(k)] =
          AgentState::from_stacked(z.segment<4>(L.x(b, i, k)));
  }
}

}  // namespace detail

// Stacked first-order conditions of a plain game at the given primal-dual
// point: per agent [grad_x L; grad_u L; dynamics defects].
inline VectorXd kkt_residual(const GameSpec& spec, const JointTrajectory& joint,
                             const std::vector<std::vector<Vector4d>>& multipliers) {
  if (static_cast<int>(joint.size()) != spec.num_agents() ||
      static_cast<int>(multipliers.size()) != spec.num_agents())
    throw Error("kkt_residual: expected " + std::to_string(spec.num_agents()) +
                " agents, got " + std::to_string(joint.size()) +
                " trajectories and " + std::to_string(multipliers.size()) +
                " multiplier sequences");
  for (int i = 0; i < spec.num_agents(); ++i) {
    const auto& traj = joint[static_cast<size_t>(i)];
    if (!traj.lengths_consistent() || traj.horizon() != spec.horizon)
      throw Error("kkt_residual: agent " + std::to_string(i) +
                  " trajectory horizon " + std::to_string(traj.horizon()) +
                  " does not match spec horizon " + std::to_string(spec.horizon));
    if (static_cast<int>(multipliers[static_cast<size_t>(i)].size()) != spec.horizon)
      throw Error("kkt_residual: agent " + std::to_string(i) +
                  " multiplier length " +
                  std::to_string(multipliers[static_cast<size_t>(i)].size()) +
                  " does not match horizon " + std::to_string(spec.horizon));
  }
  const StackedGame game = make_single_branch_game(spec);
  const detail::StackedLayout layout(game);
  VectorXd z = VectorXd::Zero(layout.dim());
  detail::pack_plain(game, layout, joint, &multipliers, z);
  return detail::stacked_residual(game, layout, z);
}

// Computes an open-loop Nash equilibrium of the game by damped Newton
// iteration on the stacked first-order conditions. On convergence the
// returned trajectories are re-rolled from the solved controls, so they are
// dynamically feasible to machine precision.
inline SolverResult solve_olne(
    const GameSpec& spec, const NashSolverConfig& config = {},
    const std::optional<JointTrajectory>& warm_start = std::nullopt) {
  throw_if_invalid(spec);
  const StackedGame game = make_single_branch_game(spec);
  const detail::StackedLayout layout(game);

  VectorXd z = VectorXd::Zero(layout.dim());
  const JointTrajectory init =
      warm_start.has_value() ? *warm_start : straight_line_warm_start(spec);
  if (static_cast<int>(init.size()) != spec.num_agents())
    throw Error("solve_olne: warm start agent count mismatch");
  detail::pack_plain(game, layout, init, nullptr, z);

  auto diag = detail::solve_stacked(game, layout, z, config);

  SolverResult result;
  result.trajectories.resize(static_cast<size_t>(spec.num_agents()));
  result.multipliers.resize(static_cast<size_t>(spec.num_agents()));
  for (int i = 0; i < spec.num_agents(); ++i)
    detail::unpack_agent(layout, z, 0, i,
                         spec.agents[static_cast<size_t>(i)].initial_state,
                         spec.horizon, spec.dt, result.trajectories[static_cast<size_t>(i)],
                         result.multipliers[static_cast<size_t>(i)], diag.converged);
  if (diag.converged) {
    // Residual at the re-rolled point is the reported certificate.
    const VectorXd r = kkt_residual(spec, result.trajectories, result.multipliers);
    result.kkt_residual_norm = r.lpNorm<Eigen::Infinity>();
    result.converged = result.kkt_residual_norm <= config.kkt_tolerance;
  } else {
    result.kkt_residual_norm = diag.residual_inf;
    result.converged = false;
  }
  result.iterations = diag.iterations;
  result.residual_history = std::move(diag.residual_history);
  return result;
}

// Monte Carlo certificate that no agent can improve by a unilateral control
// perturbation: perturbs each agent's control sequence within an l2 ball,
// re-rolls that agent's dynamics holding the others fixed, and reports the
// largest observed cost decrease.
struct LocalNashCheck {
  bool is_local_nash = true;
  double worst_cost_decrease = 0.0;  // positive means some agent improved
};

inline LocalNashCheck local_nash_check(const GameSpec& spec,
                                       const SolverResult& result,
                                       int num_perturbations, double radius,
                                       std::uint64_t seed = 0) {
  LocalNashCheck check;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int T = spec.horizon;

  for (int i = 0; i < spec.num_agents(); ++i) {
    const double nominal = trajectory_cost(spec, i, result.trajectories);
    for (int p = 0; p < num_perturbations; ++p) {
      VectorXd delta(2 * T);
      for (int d = 0; d < 2 * T; ++d) delta[d] = gauss(rng);
      const double norm = delta.norm();
      if (norm > 0.0) delta *= radius * unif(rng) / norm;

      JointTrajectory perturbed = result.trajectories;
      auto& traj = perturbed[static_cast<size_t>(i)];
      for (int k = 0; k < T; ++k)
        traj.controls[static_cast<size_t>(k)].acceleration += delta.segment<2>(2 * k);
      for (int k = 0; k < T; ++k)
        traj.states[static_cast<size_t>(k + 1)] = step_dynamics(
            traj.states[static_cast<size_t>(k)], traj.controls[static_cast<size_t>(k)],
            spec.dt);
      const double cost = trajectory_cost(spec, i, perturbed);
      check.worst_cost_decrease =
          std::max(check.worst_cost_decrease, nominal - cost);
    }
  }
  check.is_local_nash = check.worst_cost_decrease <= 1e-8;
  return check;
}

// Shifts a previous solution one step forward for receding-horizon warm
// starting; the final control is repeated and states re-rolled from the new
// initial states in `spec`.
inline JointTrajectory shift_warm_start(const GameSpec& spec,
                                        const JointTrajectory& previous) {
  JointTrajectory shifted;
  shifted.reserve(previous.size());
  for (size_t i = 0; i < previous.size(); ++i) {
    std::vector<ControlInput> controls(previous[i].controls.begin() + 1,
                                       previous[i].controls.end());
    controls.push_back(previous[i].controls.back());
    controls.resize(static_cast<size_t>(spec.horizon),
                    controls.empty() ? ControlInput{} : controls.back());
    shifted.push_back(rollout(spec.agents[i].initial_state, controls, spec.dt));
  }
  return shifted;
}

}  // namespace ocg

#endif  // OCG_NASH_SOLVER_HPP
