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

#ifndef OCG_CONTINGENCY_HPP
#define OCG_CONTINGENCY_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ocg/nash_solver.hpp"
#include "ocg/types.hpp"

namespace ocg {

enum class Hypothesis { kOccludedExist, kNoOcclusion };

inline std::string to_string(Hypothesis h) {
  return h == Hypothesis::kOccludedExist ? "occluded" : "clear";
}

// Two-hypothesis contingency problem from one (ego) agent's perspective.
// The occluded hypothesis game contains every agent the ego considers
// possible (visible and hypothesized occluded); the clear hypothesis game
// contains the visible agents only. The ego agent must sit at the same
// index in both games with identical initial state, dt, and horizon.
struct ContingencySpec {
  GameSpec hypothesis_occluded;  // theta_1
  GameSpec hypothesis_clear;     // theta_2
  double belief_occluded = 0.5;  // b(theta_1); b(theta_2) = 1 - b(theta_1)
  int branching_step = 0;        // first branch-free step index
  int ego_index = 0;

  void validate() const {
    if (!(belief_occluded >= 0.0 && belief_occluded <= 1.0))
      throw Error("contingency: belief must be in [0, 1]");
    if (branching_step < 0 || branching_step > hypothesis_occluded.horizon)
      throw Error("contingency: branching step must be in [0, T]");
    if (hypothesis_occluded.horizon != hypothesis_clear.horizon ||
        hypothesis_occluded.dt != hypothesis_clear.dt)
      throw Error("contingency: hypothesis games must share horizon and dt");
    if (ego_index < 0 || ego_index >= hypothesis_occluded.num_agents() ||
        ego_index >= hypothesis_clear.num_agents())
      throw Error("contingency: ego index out of range in a hypothesis game");
    const auto& e1 = hypothesis_occluded.agents[static_cast<size_t>(ego_index)];
    const auto& e2 = hypothesis_clear.agents[static_cast<size_t>(ego_index)];
    if ((e1.initial_state.stacked() - e2.initial_state.stacked())
            .lpNorm<Eigen::Infinity>() > 1e-12)
      throw Error("contingency: ego initial state differs between hypotheses");
  }
};

// Solved contingency plan: one shared ego control prefix, branch-specific
// ego controls from the branching step on, and the full joint trajectory
// predicted within each branch.
struct ContingencyPlan {
  int branching_step = 0;
  std::vector<ControlInput> shared_controls;  // length = branching_step
  JointTrajectory occluded_branch;            // hypothesis_occluded agents
  JointTrajectory clear_branch;               // hypothesis_clear agents
  std::vector<std::vector<Vector4d>> multipliers_occluded;
  std::vector<std::vector<Vector4d>> multipliers_clear;
  std::vector<Vector2d> tie_multipliers;  // one per tied step
  double kkt_residual_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;

  const Trajectory& ego_branch(Hypothesis h, int ego_index) const {
    const auto& joint =
        (h == Hypothesis::kOccludedExist) ? occluded_branch : clear_branch;
    return joint[static_cast<size_t>(ego_index)];
  }
};

struct ContingencyGame {
  StackedGame stacked;
  int ego_index = 0;
  int num_players = 0;  // one ego player plus per-branch copies of others
};

// A branch whose belief is exactly zero would leave the ego's post-branch
// controls in that branch undetermined (any value satisfies stationarity).
// Flooring the ego's stage-cost scale keeps the system nonsingular and, by
// homogeneity of the stationarity conditions, makes a zero-belief branch
// solve its hypothesis game exactly; the tie multipliers it induces are
// O(floor) and do not disturb the live branch.
inline constexpr double kBeliefFloor = 1e-9;

// Assembles the stacked game: the ego is a single player owning both
// branches' ego variables (its stage costs are belief weighted and its
// controls tied before the branching step); every other agent contributes
// one independent copy per hypothesis branch, interacting only within it.
inline ContingencyGame build_contingency_game(const ContingencySpec& spec) {
  spec.validate();
  ContingencyGame game;
  game.ego_index = spec.ego_index;

  StackedGame& stacked = game.stacked;
  stacked.dt = spec.hypothesis_occluded.dt;
  stacked.horizon = spec.hypothesis_occluded.horizon;
  stacked.branches.resize(2);

  const double beliefs[2] = {spec.belief_occluded, 1.0 - spec.belief_occluded};
  const GameSpec* hypotheses[2] = {&spec.hypothesis_occluded,
                                   &spec.hypothesis_clear};
  for (int b = 0; b < 2; ++b) {
    for (int i = 0; i < hypotheses[b]->num_agents(); ++i) {
      const auto& agent = hypotheses[b]->agents[static_cast<size_t>(i)];
      const double scale =
          (i == spec.ego_index) ? std::max(beliefs[b], kBeliefFloor) : 1.0;
      stacked.branches[static_cast<size_t>(b)].agents.push_back(
          StackedAgent{agent.initial_state, agent.features, scale});
    }
  }

  if (spec.branching_step > 0) {
    stacked.has_tie = true;
    stacked.tie_steps = spec.branching_step;
    stacked.ego_branch0 = spec.ego_index;
    stacked.ego_branch1 = spec.ego_index;
  }

  game.num_players = 1 + (spec.hypothesis_occluded.num_agents() - 1) +
                     (spec.hypothesis_clear.num_agents() - 1);
  return game;
}

namespace detail {

inline void pack_branch(const StackedLayout& L, int b, const JointTrajectory& joint,
                        int T, VectorXd& z) {
  for (size_t i = 0; i < joint.size(); ++i) {
    for (int k = 1; k <= T; ++k)
      z.segment<4>(L.x(b, static_cast<int>(i), k)) =
          joint[i].states[static_cast<size_t>(k)].stacked();
    for (int k = 0; k < T; ++k)
      z.segment<2>(L.u(b, static_cast<int>(i), k)) =
          joint[i].controls[static_cast<size_t>(k)].acceleration;
  }
}

}  // namespace detail

// Solves the stacked contingency game with the shared damped-Newton core.
// On convergence, the tied prefix is copied verbatim into both branches and
// all trajectories are re-rolled, so the shared-control constraint and
// dynamic feasibility hold exactly in the returned plan.
inline ContingencyPlan solve_contingency(
    const ContingencySpec& spec, const NashSolverConfig& config = {},
    const std::optional<std::pair<JointTrajectory, JointTrajectory>>& warm_start =
        std::nullopt) {
  const ContingencyGame game = build_contingency_game(spec);
  const detail::StackedLayout layout(game.stacked);
  const int T = game.stacked.horizon;

  VectorXd z = VectorXd::Zero(layout.dim());
  JointTrajectory init_occ, init_clear;
  if (warm_start.has_value()) {
    init_occ = warm_start->first;
    init_clear = warm_start->second;
  } else {
    init_occ = straight_line_warm_start(spec.hypothesis_occluded);
    init_clear = straight_line_warm_start(spec.hypothesis_clear);
    // Identical ego warm starts keep the (linear) tie rows exactly
    // satisfied from the first iterate on.
    init_clear[static_cast<size_t>(spec.ego_index)] =
        init_occ[static_cast<size_t>(spec.ego_index)];
  }
  detail::pack_branch(layout, 0, init_occ, T, z);
  detail::pack_branch(layout, 1, init_clear, T, z);

  auto diag = detail::solve_stacked(game.stacked, layout, z, config);

  ContingencyPlan plan;
  plan.branching_step = spec.branching_step;
  plan.iterations = diag.iterations;
  plan.residual_history = std::move(diag.residual_history);

  // Enforce the tie exactly: the occluded branch's prefix is authoritative.
  for (int k = 0; k < spec.branching_step; ++k) {
    const Vector2d u = z.segment<2>(layout.u(0, spec.ego_index, k));
    z.segment<2>(layout.u(1, spec.ego_index, k)) = u;
    plan.shared_controls.push_back(ControlInput{u});
  }

  auto unpack_branch = [&](int b, const GameSpec& hyp, JointTrajectory& joint,
                           std::vector<std::vector<Vector4d>>& mults) {
    joint.resize(hyp.agents.size());
    mults.resize(hyp.agents.size());
    for (int i = 0; i < hyp.num_agents(); ++i)
      detail::unpack_agent(layout, z, b, i,
                           hyp.agents[static_cast<size_t>(i)].initial_state, T,
                           hyp.dt, joint[static_cast<size_t>(i)],
                           mults[static_cast<size_t>(i)], diag.converged);
  };
  unpack_branch(0, spec.hypothesis_occluded, plan.occluded_branch,
                plan.multipliers_occluded);
  unpack_branch(1, spec.hypothesis_clear, plan.clear_branch,
                plan.multipliers_clear);
  for (int k = 0; k < spec.branching_step; ++k)
    plan.tie_multipliers.push_back(z.segment<2>(layout.tie_base() + 2 * k));

  if (diag.converged) {
    // Re-pack the cleaned-up plan and recompute the certificate there.
    detail::pack_branch(layout, 0, plan.occluded_branch, T, z);
    detail::pack_branch(layout, 1, plan.clear_branch, T, z);
    const VectorXd r = detail::stacked_residual(game.stacked, layout, z);
    plan.kkt_residual_norm = r.lpNorm<Eigen::Infinity>();
    plan.converged = plan.kkt_residual_norm <= config.kkt_tolerance;
  } else {
    plan.kkt_residual_norm = diag.residual_inf;
    plan.converged = false;
  }
  return plan;
}

// Ego's executable control sequence once the hypothesis is revealed:
// shared prefix, then the revealed branch's controls.
inline std::vector<ControlInput> select_branch(const ContingencyPlan& plan,
                                               Hypothesis revealed,
                                               int ego_index) {
  const Trajectory& branch = plan.ego_branch(revealed, ego_index);
  std::vector<ControlInput> controls = plan.shared_controls;
  for (size_t k = static_cast<size_t>(plan.branching_step);
       k < branch.controls.size(); ++k)
    controls.push_back(branch.controls[k]);
  return controls;
}

inline std::vector<ControlInput> select_branch(const ContingencyPlan& plan,
                                               const std::string& revealed_tag,
                                               int ego_index) {
  if (revealed_tag == "occluded")
    return select_branch(plan, Hypothesis::kOccludedExist, ego_index);
  if (revealed_tag == "clear")
    return select_branch(plan, Hypothesis::kNoOcclusion, ego_index);
  throw Error("select_branch: unknown hypothesis tag '" + revealed_tag +
              "' (expected 'occluded' or 'clear')");
}

// Monte Carlo stationarity certificate for a contingency plan, mirroring
// local_nash_check. Copies are perturbed within their branch; the ego is
// perturbed jointly in both branches with a shared prefix perturbation, and
// judged on its belief-weighted cost.
struct ContingencyNashCheck {
  bool is_local_nash = true;
  double worst_cost_decrease = 0.0;
};

inline ContingencyNashCheck contingency_nash_check(const ContingencySpec& spec,
                                                   const ContingencyPlan& plan,
                                                   int num_perturbations,
                                                   double radius,
                                                   std::uint64_t seed = 0) {
  ContingencyNashCheck check;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int T = spec.hypothesis_occluded.horizon;
  const double dt = spec.hypothesis_occluded.dt;

  auto reroll = [&](Trajectory& traj) {
    for (size_t k = 0; k < traj.controls.size(); ++k)
      traj.states[k + 1] = step_dynamics(traj.states[k], traj.controls[k], dt);
  };
  auto sample_ball = [&](int dim) {
    VectorXd delta(dim);
    for (int d = 0; d < dim; ++d) delta[d] = gauss(rng);
    const double norm = delta.norm();
    if (norm > 0.0) delta *= radius * unif(rng) / norm;
    return delta;
  };

  // Non-ego copies, branch by branch.
  const GameSpec* hypotheses[2] = {&spec.hypothesis_occluded,
                                   &spec.hypothesis_clear};
  const JointTrajectory* branches[2] = {&plan.occluded_branch, &plan.clear_branch};
  for (int b = 0; b < 2; ++b) {
    for (int j = 0; j < hypotheses[b]->num_agents(); ++j) {
      if (j == spec.ego_index) continue;
      const double nominal = trajectory_cost(*hypotheses[b], j, *branches[b]);
      for (int p = 0; p < num_perturbations; ++p) {
        const VectorXd delta = sample_ball(2 * T);
        JointTrajectory perturbed = *branches[b];
        auto& traj = perturbed[static_cast<size_t>(j)];
        for (int k = 0; k < T; ++k)
          traj.controls[static_cast<size_t>(k)].acceleration += delta.segment<2>(2 * k);
        reroll(traj);
        check.worst_cost_decrease =
            std::max(check.worst_cost_decrease,
                     nominal - trajectory_cost(*hypotheses[b], j, perturbed));
      }
    }
  }

  // Ego: shared prefix perturbed identically in both branches.
  const double b1 = spec.belief_occluded;
  const double nominal_ego =
      b1 * trajectory_cost(spec.hypothesis_occluded, spec.ego_index,
                           plan.occluded_branch) +
      (1.0 - b1) * trajectory_cost(spec.hypothesis_clear, spec.ego_index,
                                   plan.clear_branch);
  const int tb = plan.branching_step;
  for (int p = 0; p < num_perturbations; ++p) {
    const VectorXd delta = sample_ball(2 * tb + 2 * (T - tb) * 2);
    JointTrajectory occ = plan.occluded_branch;
    JointTrajectory clear = plan.clear_branch;
    auto& ego_occ = occ[static_cast<size_t>(spec.ego_index)];
    auto& ego_clear = clear[static_cast<size_t>(spec.ego_index)];
    for (int k = 0; k < tb; ++k) {
      const Vector2d du = delta.segment<2>(2 * k);
      ego_occ.controls[static_cast<size_t>(k)].acceleration += du;
      ego_clear.controls[static_cast<size_t>(k)].acceleration += du;
    }
    int offset = 2 * tb;
    for (int k = tb; k < T; ++k, offset += 2)
      ego_occ.controls[static_cast<size_t>(k)].acceleration +=
          delta.segment<2>(offset);
    for (int k = tb; k < T; ++k, offset += 2)
      ego_clear.controls[static_cast<size_t>(k)].acceleration +=
          delta.segment<2>(offset);
    reroll(ego_occ);
    reroll(ego_clear);
    const double cost =
        b1 * trajectory_cost(spec.hypothesis_occluded, spec.ego_index, occ) +
        (1.0 - b1) * trajectory_cost(spec.hypothesis_clear, spec.ego_index, clear);
    check.worst_cost_decrease =
        std::max(check.worst_cost_decrease, nominal_ego - cost);
  }

  check.is_local_nash = check.worst_cost_decrease <= 1e-8;
  return check;
}

}  // namespace ocg

#endif  // OCG_CONTINGENCY_HPP
