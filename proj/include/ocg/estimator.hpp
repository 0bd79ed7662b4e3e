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

#ifndef OCG_ESTIMATOR_HPP
#define OCG_ESTIMATOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "ocg/dynamics.hpp"
#include "ocg/features.hpp"
#include "ocg/nash_solver.hpp"
#include "ocg/types.hpp"

namespace ocg {

// ---------------------------------------------------------------------------
// Observations.
// ---------------------------------------------------------------------------

struct Observation {
  int agent = 0;  // id in the observation stream (world agent index)
  int k = 0;      // time step
  Vector2d position = Vector2d::Zero();
};

struct ObservationSequence {
  std::vector<Observation> items;  // ordered by (k, agent)
  double sigma = 0.0;
  VisibilityModel visibility;

  int first_step() const {
    return items.empty() ? 0 : items.front().k;
  }
  int last_step() const {
    return items.empty() ? -1 : items.back().k;
  }
};

// Position measurements of observer-visible agents, corrupted by white
// Gaussian noise of standard deviation sigma per axis. Covers every time
// step of the trajectories; deterministic for a fixed seed.
inline ObservationSequence simulate_observations(const GameSpec& spec,
                                                 const JointTrajectory& truth,
                                                 const VisibilityModel& visibility,
                                                 double sigma,
                                                 std::uint64_t seed) {
  if (sigma < 0.0) throw Error("simulate_observations: sigma must be >= 0");
  ObservationSequence seq;
  seq.sigma = sigma;
  seq.visibility = visibility;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k <= spec.horizon; ++k) {
    for (int agent : visibility.visible) {
      Observation obs;
      obs.agent = agent;
      obs.k = k;
      obs.position =
          truth[static_cast<size_t>(agent)].states[static_cast<size_t>(k)].position +
          sigma * Vector2d(gauss(rng), gauss(rng));
      seq.items.push_back(obs);
    }
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Estimation template: the structural prior handed to the inverse solver.
// The template fixes the agent roster (including hypothesized occluded
// agents), each agent's feature set and dynamics; weights are estimated for
// estimated agents. Anchored agents (e.g. the planning ego, whose own past
// is known exactly) contribute their trajectories as data and carry no
// decision variables or stationarity constraints.
// ---------------------------------------------------------------------------

enum class AgentRole { kEstimated, kAnchored };

struct TemplateAgent {
  std::vector<WeightedFeature> features;  // weights ignored for estimated agents
  AgentRole role = AgentRole::kEstimated;
  int observation_id = -1;    // id in the observation stream; -1 = unobserved
  AgentState init_prior;      // initialization pose for unobserved agents
  bool has_init_prior = false;
  Trajectory known_trajectory;  // anchored agents only

  int num_features() const { return static_cast<int>(features.size()); }
};

struct EstimationTemplate {
  double dt = 0.1;
  int horizon = 0;  // number of transitions in the window
  std::vector<TemplateAgent> agents;

  int num_agents() const { return static_cast<int>(agents.size()); }

  void validate() const {
    if (!(dt > 0.0)) throw Error("estimation template: dt must be positive");
    if (horizon < 1) throw Error("estimation template: horizon must be >= 1");
    bool any_estimated = false;
    for (size_t i = 0; i < agents.size(); ++i) {
      const auto& agent = agents[i];
      if (agent.role == AgentRole::kEstimated) {
        any_estimated = true;
        if (agent.features.empty())
          throw Error("estimation template: agent " + std::to_string(i) +
                      " has no features");
      } else if (static_cast<int>(agent.known_trajectory.states.size()) !=
                 horizon + 1) {
        throw Error("estimation template: anchored agent " + std::to_string(i) +
                    " needs a known trajectory of length horizon + 1");
      }
    }
    if (!any_estimated)
      throw Error("estimation template: nothing to estimate");
  }
};

struct EstimatorConfig {
  double constraint_tolerance = 1e-6;     // infinity norm of the KKT constraints
  double stationarity_tolerance = 1e-6;   // infinity norm of the AL gradient
  int max_outer_iterations = 50;
  int max_inner_iterations = 60;
  double initial_penalty = 10.0;
  double penalty_growth = 5.0;
  double max_penalty = 1e10;
  int verbosity = 0;  // 1 prints one line per outer iteration to stderr
};

struct EstimateResult {
  std::vector<VectorXd> weights;  // per agent, on the simplex; empty if anchored
  JointTrajectory trajectories;   // anchored agents hold their known data
  std::vector<std::vector<Vector4d>> multipliers;  // empty for anchored
  double observation_mse = std::numeric_limits<double>::quiet_NaN();
  double kkt_constraint_violation = std::numeric_limits<double>::infinity();
  bool converged = false;
  int outer_iterations = 0;
  int inner_iterations = 0;
};

namespace detail {

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double softplus_grad(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Nonlinear least-squares formulation of the inverse game over one
// observation window. Variables per estimated agent: initial state (4),
// states x_1..x_T (4T), controls (2T), multipliers (4T), and the softplus
// weight parameters (one per feature). Rows: one 2-vector per observation
// of an estimated agent, then per agent the stacked stationarity and
// dynamics conditions.
class InverseProblem {
 public:
  InverseProblem(const EstimationTemplate& tmpl, const ObservationSequence& obs)
      : tmpl_(tmpl),
        dyn_(dynamics_jacobians(tmpl.dt)),
        sigma_(obs.sigma),
        obs_scale_(std::sqrt(2.0) / std::max(obs.sigma, 0.01)) {
    const int T = tmpl_.horizon;
    int offset = 0;
    int row = 0;
    for (int i = 0; i < tmpl_.num_agents(); ++i) {
      const auto& agent = tmpl_.agents[static_cast<size_t>(i)];
      if (agent.role == AgentRole::kEstimated) {
        var_base_.push_back(offset);
        row_base_.push_back(row);
        offset += 4 + 10 * T + agent.num_features();
        row += 10 * T;
      } else {
        var_base_.push_back(-1);
        row_base_.push_back(-1);
      }
    }
    var_dim_ = offset;
    constraint_dim_ = row;

    for (const auto& item : obs.items) {
      const int agent = stream_to_template(item.agent);
      if (agent < 0) continue;  // not modeled by this template
      if (tmpl_.agents[static_cast<size_t>(agent)].role != AgentRole::kEstimated)
        continue;  // anchored trajectories are data, not fitted
      if (item.k < 0 || item.k > T) continue;
      obs_agent_.push_back(agent);
      obs_step_.push_back(item.k);
      obs_value_.push_back(item.position);
    }
  }

  int var_dim() const { return var_dim_; }
  int constraint_dim() const { return constraint_dim_; }
  int num_obs() const { return static_cast<int>(obs_agent_.size()); }
  int num_beta() const {
    int n = 0;
    for (const auto& agent : tmpl_.agents)
      if (agent.role == AgentRole::kEstimated) n += agent.num_features();
    return n;
  }

  int stream_to_template(int stream_id) const {
    for (int i = 0; i < tmpl_.num_agents(); ++i)
      if (tmpl_.agents[static_cast<size_t>(i)].observation_id == stream_id)
        return i;
    return -1;
  }

  // Variable offsets for estimated agent i.
  int vx0(int i) const { return var_base_[static_cast<size_t>(i)]; }
  int vx(int i, int k) const { return vx0(i) + 4 * k; }  // k in [1, T]
  int vu(int i, int k) const {
    return vx0(i) + 4 + 4 * tmpl_.horizon + 2 * k;
  }
  int vlam(int i, int k) const {
    return vx0(i) + 4 + 6 * tmpl_.horizon + 4 * k;
  }
  int vbeta(int i) const { return vx0(i) + 4 + 10 * tmpl_.horizon; }

  // Constraint row offsets for estimated agent i.
  int rx(int i, int k) const {
    return row_base_[static_cast<size_t>(i)] + 4 * (k - 1);
  }
  int ru(int i, int k) const {
    return row_base_[static_cast<size_t>(i)] + 4 * tmpl_.horizon + 2 * k;
  }
  int rdyn(int i, int k) const {
    return row_base_[static_cast<size_t>(i)] + 6 * tmpl_.horizon + 4 * k;
  }

  VectorXd weights_of(int i, const VectorXd& v) const {
    const int nf = tmpl_.agents[static_cast<size_t>(i)].num_features();
    VectorXd w(nf);
    double sum = 0.0;
    for (int l = 0; l < nf; ++l) {
      w[l] = softplus(v[vbeta(i) + l]);
      sum += w[l];
    }
    return w / sum;
  }

  Vector4d state_of(int i, int k, const VectorXd& v) const {
    const auto& agent = tmpl_.agents[static_cast<size_t>(i)];
    if (agent.role == AgentRole::kAnchored)
      return agent.known_trajectory.states[static_cast<size_t>(k)].stacked();
    return k == 0 ? Vector4d(v.segment<4>(vx0(i))) : Vector4d(v.segment<4>(vx(i, k)));
  }

  // Observation residuals (unnormalized, see observation_mse for the
  // reported value), a weak Tikhonov pull of the weight logits toward the
  // uniform simplex (it resolves directions the data leaves flat, several
  // orders below the data curvature), then the stacked KKT constraints.
  void evaluate(const VectorXd& v, VectorXd& obs_residual, VectorXd& constraints) const {
    const int T = tmpl_.horizon;
    const int M = tmpl_.num_agents();

    obs_residual.resize(soft_rows());
    for (int o = 0; o < num_obs(); ++o) {
      const Vector4d x = state_of(obs_agent_[static_cast<size_t>(o)],
                                  obs_step_[static_cast<size_t>(o)], v);
      obs_residual.segment<2>(2 * o) =
          obs_scale_ * (x.head<2>() - obs_value_[static_cast<size_t>(o)]);
    }
    {
      int r = 2 * num_obs();
      for (int i = 0; i < M; ++i) {
        const auto& agent = tmpl_.agents[static_cast<size_t>(i)];
        if (agent.role != AgentRole::kEstimated) continue;
        const double kappa = beta_prior_strength(agent);
        for (int l = 0; l < agent.num_features(); ++l, ++r)
          obs_residual[r] = kappa * (v[vbeta(i) + l] - 1.0);
      }
      for (int q = 0; q < num_pseudo(); ++q, r += 2)
        obs_residual.segment<2>(r) =
            pseudo_scale_ *
            (state_of(pseudo_agent_[static_cast<size_t>(q)],
                      pseudo_step_[static_cast<size_t>(q)], v)
                 .head<2>() -
             pseudo_value_[static_cast<size_t>(q)]);
    }

    constraints.setZero(constraint_dim_);
    std::vector<Vector2d> positions(static_cast<size_t>(M));
    for (int k = 1; k <= T; ++k) {
      for (int i = 0; i < M; ++i)
        positions[static_cast<size_t>(i)] = state_of(i, k, v).head<2>();
      for (int i = 0; i < M; ++i) {
        const auto& agent = tmpl_.agents[static_cast<size_t>(i)];
        if (agent.role != AgentRole::kEstimated) continue;
        const VectorXd w = weights_of(i, v);
        const Vector2d control = v.segment<2>(vu(i, k - 1));
        for (int l = 0; l < agent.num_features(); ++l) {
          if (w[l] == 0.0) continue;
          const auto d = evaluate_feature(agent.features[static_cast<size_t>(l)].feature,
                                          positions, control, i, k);
          constraints.segment<2>(rx(i, k)) += w[l] * d.d_ego;
          constraints.segment<2>(ru(i, k - 1)) += w[l] * d.d_control;
        }
      }
    }

    for (int i = 0; i < M; ++i) {
      if (tmpl_.agents[static_cast<size_t>(i)].role != AgentRole::kEstimated)
        continue;
      for (int k = 1; k <= T; ++k) {
        auto row = constraints.segment<4>(rx(i, k));
        row += v.segment<4>(vlam(i, k - 1));
        if (k < T) row -= dyn_.A.transpose() * v.segment<4>(vlam(i, k));
      }
      for (int k = 0; k < T; ++k)
        constraints.segment<2>(ru(i, k)) -=
            dyn_.B_dt.transpose() * v.segment<4>(vlam(i, k));
      for (int k = 0; k < T; ++k)
        constraints.segment<4>(rdyn(i, k)) =
            state_of(i, k + 1, v) - dyn_.A * state_of(i, k, v) -
            dyn_.B_dt * v.segment<2>(vu(i, k));
    }
  }

  // Jacobian triplets of [obs_residual; constraints] with respect to v; the
  // constraint rows start at row offset 2 * num_obs().
  void jacobian(const VectorXd& v, std::vector<Eigen::Triplet<double>>& trip) const {
    trip.clear();
    const int T = tmpl_.horizon;
    const int M = tmpl_.num_agents();
    const int crow0 = soft_rows();

    auto add_block = [&trip](int row, int col, const auto& block) {
      for (int r = 0; r < block.rows(); ++r)
        for (int c = 0; c < block.cols(); ++c)
          if (block(r, c) != 0.0)
            trip.emplace_back(row + r, col + c, block(r, c));
    };

    for (int o = 0; o < num_obs(); ++o) {
      const int i = obs_agent_[static_cast<size_t>(o)];
      const int k = obs_step_[static_cast<size_t>(o)];
      const int col = (k == 0) ? vx0(i) : vx(i, k);
      trip.emplace_back(2 * o, col, obs_scale_);
      trip.emplace_back(2 * o + 1, col + 1, obs_scale_);
    }
    {
      int r = 2 * num_obs();
      for (int i = 0; i < M; ++i) {
        const auto& agent = tmpl_.agents[static_cast<size_t>(i)];
        if (agent.role != AgentRole::kEstimated) continue;
        const double kappa = beta_prior_strength(agent);
        for (int l = 0; l < agent.num_features(); ++l, ++r)
          trip.emplace_back(r, vbeta(i) + l, kappa);
      }
      for (int q = 0; q < num_pseudo(); ++q, r += 2) {
        const int i = pseudo_agent_[static_cast<size_t>(q)];
        const int k = pseudo_step_[static_cast<size_t>(q)];
        const int col = (k == 0) ? vx0(i) : vx(i, k);
        trip.emplace_back(r, col, pseudo_scale_);
        trip.emplace_back(r + 1, col + 1, pseudo_scale_);
      }
    }

    std::vector<Vector2d> positions(static_cast<size_t>(M));
    for (int k = 1; k <= T; ++k) {
      for (int i = 0; i < M; ++i)
        positions[static_cast<size_t>(i)] = state_of(i, k, v).head<2>();
      for (int i = 0; i < M; ++i) {
        const auto& agent = tmpl_.agents[static_cast<size_t>(i)];
        if (agent.role != AgentRole::kEstimated) continue;
        const int nf = agent.num_features();
        const Vector2d control = v.segment<2>(vu(i, k - 1));

        // Softplus chain rule: dw_l / dbeta_m.
        VectorXd sp(nf), spg(nf);
        double sum = 0.0;
        for (int l = 0; l < nf; ++l) {
          sp[l] = softplus(v[vbeta(i) + l]);
          spg[l] = softplus_grad(v[vbeta(i) + l]);
          sum += sp[l];
        }
        const VectorXd w = sp / sum;
        MatrixXd dw_dbeta(nf, nf);
        for (int l = 0; l < nf; ++l)
          for (int m = 0; m < nf; ++m)
            dw_dbeta(l, m) = ((l == m ? spg[l] : 0.0) - w[l] * spg[m]) / sum;

        Matrix2d h_ee = Matrix2d::Zero();
        Matrix2d h_uu = Matrix2d::Zero();
        std::vector<std::pair<int, Matrix2d>> h_eo;
        MatrixXd dstat_x_dw(2, nf);  // per-feature position gradients
        MatrixXd dstat_u_dw(2, nf);
        for (int l = 0; l < nf; ++l) {
          const auto d = evaluate_feature(agent.features[static_cast<size_t>(l)].feature,
                                          positions, control, i, k);
          h_ee += w[l] * d.h_ego_ego;
          h_uu += w[l] * d.h_control;
          for (const auto& [j, h] : d.h_ego_other)
            h_eo.emplace_back(j, w[l] * h);
          dstat_x_dw.col(l) = d.d_ego;
          dstat_u_dw.col(l) = d.d_control;
        }

        add_block(crow0 + rx(i, k), (k == 0) ? vx0(i) : vx(i, k), h_ee);
        add_block(crow0 + ru(i, k - 1), vu(i, k - 1), h_uu);
        for (const auto& [j, h] : h_eo) {
          // Columns exist only for estimated neighbors; anchored ones are
          // constants.
          if (tmpl_.agents[static_cast<size_t>(j)].role == AgentRole::kEstimated)
            add_block(crow0 + rx(i, k), vx(j, k), h);
        }
        if (!beta_frozen_) {
          add_block(crow0 + rx(i, k), vbeta(i), MatrixXd(dstat_x_dw * dw_dbeta));
          add_block(crow0 + ru(i, k - 1), vbeta(i), MatrixXd(dstat_u_dw * dw_dbeta));
        }
      }
    }

    const Matrix4d At = dyn_.A.transpose();
    const Eigen::Matrix<double, 2, 4> Bt = dyn_.B_dt.transpose();
    for (int i = 0; i < M; ++i) {
      if (tmpl_.agents[static_cast<size_t>(i)].role != AgentRole::kEstimated)
        continue;
      for (int k = 1; k <= T; ++k) {
        add_block(crow0 + rx(i, k), vlam(i, k - 1), Matrix4d::Identity());
        if (k < T) add_block(crow0 + rx(i, k), vlam(i, k), Matrix4d(-At));
      }
      for (int k = 0; k < T; ++k) {
        add_block(crow0 + ru(i, k), vlam(i, k), Eigen::Matrix<double, 2, 4>(-Bt));
        add_block(crow0 + rdyn(i, k), (k + 1 == 0) ? vx0(i) : vx(i, k + 1),
                  Matrix4d::Identity());
        add_block(crow0 + rdyn(i, k), (k == 0) ? vx0(i) : vx(i, k), Matrix4d(-dyn_.A));
        add_block(crow0 + rdyn(i, k), vu(i, k), Eigen::Matrix<double, 4, 2>(-dyn_.B_dt));
      }
    }
  }

  // Initialization: observed agents from (lightly smoothed) observations
  // with finite-difference velocities; unobserved agents from their prior
  // pose at rest; weights uniform on the simplex; multipliers zero.
  VectorXd initial_guess() const {
    const int T = tmpl_.horizon;
    VectorXd v = VectorXd::Zero(var_dim_);
    for (int i = 0; i < tmpl_.num_agents(); ++i) {
      const auto& agent = tmpl_.agents[static_cast<size_t>(i)];
      if (agent.role != AgentRole::kEstimated) continue;

      std::vector<Vector2d> positions(static_cast<size_t>(T) + 1);
      std::vector<bool> have(static_cast<size_t>(T) + 1, false);
      for (int o = 0; o < num_obs(); ++o)
        if (obs_agent_[static_cast<size_t>(o)] == i) {
          positions[static_cast<size_t>(obs_step_[static_cast<size_t>(o)])] =
              obs_value_[static_cast<size_t>(o)];
          have[static_cast<size_t>(obs_step_[static_cast<size_t>(o)])] = true;
        }

      const bool any = std::any_of(have.begin(), have.end(), [](bool b) { return b; });
      if (!any) {
        const AgentState prior =
            agent.has_init_prior ? agent.init_prior : AgentState{};
        for (int k = 0; k <= T; ++k)
          positions[static_cast<size_t>(k)] =
              prior.position + prior.velocity * (k * tmpl_.dt);
      } else {
        // Backward-fill the leading gap, then forward-fill the rest.
        int first_obs = 0;
        while (!have[static_cast<size_t>(first_obs)]) ++first_obs;
        for (int k = 0; k < first_obs; ++k)
          positions[static_cast<size_t>(k)] = positions[static_cast<size_t>(first_obs)];
        for (int k = first_obs + 1; k <= T; ++k)
          if (!have[static_cast<size_t>(k)])
            positions[static_cast<size_t>(k)] = positions[static_cast<size_t>(k - 1)];
        // Light smoothing before differentiating; clean data is kept
        // verbatim (forward differences are then exact).
        if (sigma_ > 1e-9) {
          std::vector<Vector2d> smoothed = positions;
          for (int k = 1; k < T; ++k)
            smoothed[static_cast<size_t>(k)] =
                0.25 * positions[static_cast<size_t>(k - 1)] +
                0.5 * positions[static_cast<size_t>(k)] +
                0.25 * positions[static_cast<size_t>(k + 1)];
          positions = smoothed;
        }
      }

      std::vector<Vector2d> velocities(static_cast<size_t>(T) + 1, Vector2d::Zero());
      if (any) {
        // Forward differences are exact for this integrator on clean data:
        // p_{k+1} = p_k + v_k dt.
        for (int k = 0; k < T; ++k)
          velocities[static_cast<size_t>(k)] =
              (positions[static_cast<size_t>(k + 1)] -
               positions[static_cast<size_t>(k)]) /
              tmpl_.dt;
        velocities[static_cast<size_t>(T)] =
            T >= 2 ? Vector2d(2.0 * velocities[static_cast<size_t>(T - 1)] -
                              velocities[static_cast<size_t>(T - 2)])
                   : velocities[static_cast<size_t>(T - 1)];
      } else if (agent.has_init_prior) {
        velocities.assign(static_cast<size_t>(T) + 1, agent.init_prior.velocity);
      }

      v.segment<2>(vx0(i)) = positions[0];
      v.segment<2>(vx0(i) + 2) = velocities[0];
      for (int k = 1; k <= T; ++k) {
        v.segment<2>(vx(i, k)) = positions[static_cast<size_t>(k)];
        v.segment<2>(vx(i, k) + 2) = velocities[static_cast<size_t>(k)];
      }
      for (int k = 0; k < T; ++k)
        v.segment<2>(vu(i, k)) = (velocities[static_cast<size_t>(k + 1)] -
                                  velocities[static_cast<size_t>(k)]) /
                                 tmpl_.dt;
      for (int l = 0; l < agent.num_features(); ++l) v[vbeta(i) + l] = 1.0;
    }
    return v;
  }

  // Maximum-likelihood weighting of the data term: residuals scale with
  // 1 / sigma (floored at 1 cm). Constant scaling cannot move the
  // constrained minimizer, but it decides which directions the solver
  // treats as stiff; noiseless data must pin the visible trajectories.
  double obs_scale() const { return obs_scale_; }
  // Weight-logit prior toward the uniform simplex. Observed agents'
  // weights are pinned by their own data, so the prior is vanishing for
  // them; unobserved agents' weights are only weakly identified through
  // the coupling, and without the prior the cheapest early descent
  // direction collapses their interaction weights to zero.
  static constexpr double kBetaTikhonovObserved = 3e-3;
  static constexpr double kBetaTikhonovUnobserved = 3e-2;
  static double beta_prior_strength(const TemplateAgent& agent) {
    return agent.observation_id < 0 ? kBetaTikhonovUnobserved
                                    : kBetaTikhonovObserved;
  }

  // Phase control: with frozen weights the beta columns drop out of the
  // Jacobian, so the inner solver optimizes trajectories and multipliers
  // under the fixed (uniform) weights.
  void freeze_weights(bool frozen) { beta_frozen_ = frozen; }
  bool weights_frozen() const { return beta_frozen_; }

  // The stationarity rows are linear in (w, lambda) for fixed
  // trajectories. For one agent this refresh solves the small equality-
  // constrained least squares min |stat(w, lambda)|^2 s.t. sum(w) = 1 in
  // closed form, clamps w to the (open) simplex, and writes the result
  // back through the softplus parameterization. It snaps weights and
  // multipliers to their conditional optimum after trajectory moves.
  void refresh_weights_multipliers(VectorXd& v) const {
    const int T = tmpl_.horizon;
    const int M = tmpl_.num_agents();
    std::vector<std::vector<Vector2d>> positions(
        static_cast<size_t>(T) + 1, std::vector<Vector2d>(static_cast<size_t>(M)));
    for (int k = 1; k <= T; ++k)
      for (int i = 0; i < M; ++i)
        positions[static_cast<size_t>(k)][static_cast<size_t>(i)] =
            state_of(i, k, v).head<2>();

    for (int i = 0; i < M; ++i) {
      const auto& agent = tmpl_.agents[static_cast<size_t>(i)];
      if (agent.role != AgentRole::kEstimated) continue;
      const int nf = agent.num_features();
      const int ny = nf + 4 * T;
      MatrixXd A = MatrixXd::Zero(6 * T, ny);
      // Feature-gradient columns.
      for (int k = 1; k <= T; ++k) {
        const Vector2d control = v.segment<2>(vu(i, k - 1));
        for (int l = 0; l < nf; ++l) {
          const auto d = evaluate_feature(agent.features[static_cast<size_t>(l)].feature,
                                          positions[static_cast<size_t>(k)], control, i, k);
          A.block<2, 1>(4 * (k - 1), l) = d.d_ego;
          A.block<2, 1>(4 * T + 2 * (k - 1), l) = d.d_control;
        }
      }
      // Multiplier columns: x rows get +lambda_{k-1} - A^T lambda_k, u rows
      // get -B^T lambda_k.
      for (int k = 1; k <= T; ++k) {
        A.block<4, 4>(4 * (k - 1), nf + 4 * (k - 1)) = Matrix4d::Identity();
        if (k < T)
          A.block<4, 4>(4 * (k - 1), nf + 4 * k) = -dyn_.A.transpose();
        A.block<2, 4>(4 * T + 2 * (k - 1), nf + 4 * (k - 1)) =
            -dyn_.B_dt.transpose();
      }
      // min |A y|^2 s.t. sum of the first nf entries = 1.
      MatrixXd kkt = MatrixXd::Zero(ny + 1, ny + 1);
      kkt.topLeftCorner(ny, ny) = A.transpose() * A;
      kkt.topLeftCorner(ny, ny).diagonal().array() += 1e-10;
      for (int l = 0; l < nf; ++l) {
        kkt(ny, l) = 1.0;
        kkt(l, ny) = 1.0;
      }
      VectorXd rhs = VectorXd::Zero(ny + 1);
      rhs[ny] = 1.0;
      const VectorXd y = kkt.ldlt().solve(rhs);
      if (!y.allFinite()) continue;
      VectorXd w = y.head(nf).cwiseMax(2e-3);
      w /= w.sum();
      const double rescale = 1.0 / y.head(nf).cwiseMax(2e-3).sum();
      for (int l = 0; l < nf; ++l) {
        const double target = std::clamp(w[l] * nf, 2e-3, 25.0);
        v[vbeta(i) + l] =
            target > 20.0 ? target : std::log(std::expm1(target));
      }
      for (int k = 0; k < T; ++k)
        v.segment<4>(vlam(i, k)) = rescale * y.segment<4>(nf + 4 * k);
    }
  }

  // Homotopy anchors for unobserved agents: weak position residuals toward
  // a reference arc whose weight the caller decays toward zero across
  // outer rounds, keeping early iterates in the physically interacting
  // basin without biasing the final estimate.
  void add_pseudo_observation(int agent, int k, const Vector2d& position) {
    pseudo_agent_.push_back(agent);
    pseudo_step_.push_back(k);
    pseudo_value_.push_back(position);
  }
  void set_pseudo_scale(double scale) { pseudo_scale_ = scale; }
  int num_pseudo() const { return static_cast<int>(pseudo_agent_.size()); }
  int soft_rows() const { return 2 * num_obs() + num_beta() + 2 * num_pseudo(); }

  const EstimationTemplate& tmpl() const { return tmpl_; }

 private:
  EstimationTemplate tmpl_;
  DynamicsJacobians dyn_;
  double sigma_ = 0.0;
  double obs_scale_ = 1.0;
  bool beta_frozen_ = false;
  int var_dim_ = 0;
  int constraint_dim_ = 0;
  std::vector<int> var_base_;
  std::vector<int> row_base_;
  std::vector<int> obs_agent_;
  std::vector<int> obs_step_;
  std::vector<Vector2d> obs_value_;
  std::vector<int> pseudo_agent_;
  std::vector<int> pseudo_step_;
  std::vector<Vector2d> pseudo_value_;
  double pseudo_scale_ = 0.0;
};

}  // namespace detail

// Solves the occlusion-aware inverse game over one observation window: a
// least-squares fit of estimated agents' positions to the observations,
// subject to every estimated agent's open-loop Nash stationarity and
// dynamics conditions. An augmented-Lagrangian outer loop drives the
// constraints to tolerance around a Levenberg-damped Gauss-Newton inner
// solver; weights are kept on the simplex by a softplus reparameterization.
inline EstimateResult estimate_game(const ObservationSequence& observations,
                                    const EstimationTemplate& tmpl,
                                    const EstimatorConfig& config = {}) {
  tmpl.validate();
  if (observations.last_step() - observations.first_step() + 1 < 2)
    throw Error("estimate_game: observations must cover at least two time steps");

  detail::InverseProblem problem(tmpl, observations);
  const int n = problem.var_dim();
  const int m = problem.constraint_dim();

  VectorXd v = problem.initial_guess();

  // Unobserved agents initialized at a static prior leave the solver a
  // cheap local minimum: park the hypothesized agent, blame its absence on
  // reweighted costs. Instead, stage the initialization: (1) estimate the
  // observed agents alone for informed weights, (2) forward-solve the full
  // hypothesis game with those weights and the priors, which seats the
  // unobserved agents on interacting, stationarity-consistent arcs.
  bool any_unobserved = false;
  for (const auto& agent : tmpl.agents)
    any_unobserved |= (agent.role == AgentRole::kEstimated && agent.observation_id < 0);
  if (any_unobserved) {
    GameSpec init_game;
    init_game.dt = tmpl.dt;
    init_game.horizon = tmpl.horizon;
    for (int i = 0; i < tmpl.num_agents(); ++i) {
      const auto& agent = tmpl.agents[static_cast<size_t>(i)];
      AgentSpec a;
      a.features = agent.features;
      if (agent.role == AgentRole::kEstimated) {
        for (auto& wf : a.features)
          wf.weight = 1.0 / static_cast<double>(agent.num_features());
        a.initial_state = AgentState::from_stacked(v.segment<4>(problem.vx0(i)));
        if (agent.observation_id < 0 && agent.has_init_prior)
          a.initial_state = agent.init_prior;
      } else {
        a.initial_state = agent.known_trajectory.states[0];
      }
      init_game.agents.push_back(std::move(a));
    }
    try {
      const SolverResult warm = solve_olne(init_game);
      if (warm.converged) {
        for (int i = 0; i < tmpl.num_agents(); ++i) {
          const auto& agent = tmpl.agents[static_cast<size_t>(i)];
          if (agent.role != AgentRole::kEstimated) continue;
          const auto& traj = warm.trajectories[static_cast<size_t>(i)];
          if (agent.observation_id < 0) {
            v.segment<4>(problem.vx0(i)) = traj.states[0].stacked();
            for (int k = 1; k <= tmpl.horizon; ++k)
              v.segment<4>(problem.vx(i, k)) =
                  traj.states[static_cast<size_t>(k)].stacked();
            for (int k = 0; k < tmpl.horizon; ++k)
              v.segment<2>(problem.vu(i, k)) =
                  traj.controls[static_cast<size_t>(k)].acceleration;
            for (int k = 0; k <= tmpl.horizon; ++k)
              problem.add_pseudo_observation(
                  i, k, traj.states[static_cast<size_t>(k)].position);
          }
          for (int k = 0; k < tmpl.horizon; ++k)
            v.segment<4>(problem.vlam(i, k)) =
                warm.multipliers[static_cast<size_t>(i)][static_cast<size_t>(k)];
        }
      }
    } catch (const Error&) {
      // Keep the static initialization; the outer loop may still recover.
    }
  }
  // Conditional linear estimate of weights and multipliers from the
  // initialized trajectories. With informative data this already lands on
  // near-true weight directions, so the iteration starts close to the
  // constraint manifold instead of buying feasibility by distorting the
  // weights.
  problem.refresh_weights_multipliers(v);

  VectorXd nu = VectorXd::Zero(m);
  double rho = config.initial_penalty;

  VectorXd r_obs, c;
  problem.evaluate(v, r_obs, c);

  EstimateResult result;
  using SpMat = Eigen::SparseMatrix<double>;
  std::vector<Eigen::Triplet<double>> trip;

  auto stacked_residual = [&](const VectorXd& robs, const VectorXd& cc) {
    VectorXd R(robs.size() + cc.size());
    R.head(robs.size()) = robs;
    R.tail(cc.size()) = std::sqrt(rho) * cc + nu / std::sqrt(rho);
    return R;
  };

  double omega = 1e-2;  // inner stationarity target
  double mu = 1e-4;     // Levenberg parameter, adapted across inner steps
  double grad_inf = std::numeric_limits<double>::infinity();
  double c_prev = std::numeric_limits<double>::infinity();

  // One augmented-Lagrangian round: inner Levenberg Gauss-Newton to the
  // current stationarity target, then multiplier/penalty updates. Returns
  // true once both tolerances hold.
  auto al_round = [&](int outer) {
    for (int inner = 0; inner < config.max_inner_iterations; ++inner) {
      problem.jacobian(v, trip);
      const int soft_rows = problem.soft_rows();
      SpMat J(soft_rows + m, n);
      {
        std::vector<Eigen::Triplet<double>> scaled = trip;
        const double s = std::sqrt(rho);
        for (auto& t : scaled)
          if (t.row() >= soft_rows)
            t = Eigen::Triplet<double>(t.row(), t.col(), t.value() * s);
        J.setFromTriplets(scaled.begin(), scaled.end());
      }
      const VectorXd R = stacked_residual(r_obs, c);
      const VectorXd g = J.transpose() * R;
      grad_inf = g.lpNorm<Eigen::Infinity>();
      if (grad_inf <= omega) break;

      const SpMat JtJ = SpMat(J.transpose()) * J;
      // Marquardt scaling: damp each direction relative to its own
      // curvature so the mixed state/multiplier/logit scales all move.
      VectorXd curvature = JtJ.diagonal().cwiseMax(1e-8);
      double merit = 0.5 * R.squaredNorm();
      bool stepped = false;
      for (int attempt = 0; attempt < 10 && !stepped; ++attempt) {
        SpMat H = JtJ;
        for (int d = 0; d < n; ++d) H.coeffRef(d, d) += mu * curvature[d];
        Eigen::SimplicialLDLT<SpMat> ldlt(H);
        if (ldlt.info() == Eigen::Success) {
          const VectorXd delta = ldlt.solve(-g);
          if (delta.allFinite()) {
            // Backtracking along the damped direction; the quadratic model
            // routinely overshoots the curved constraint valley.
            const double slope = g.dot(delta);
            double alpha = 1.0;
            for (int ls = 0; ls < 12 && slope < 0.0; ++ls) {
              const VectorXd v_trial = v + alpha * delta;
              VectorXd r_trial, c_trial;
              problem.evaluate(v_trial, r_trial, c_trial);
              if (r_trial.allFinite() && c_trial.allFinite()) {
                const double merit_trial =
                    0.5 * stacked_residual(r_trial, c_trial).squaredNorm();
                if (merit_trial <= merit + 1e-4 * alpha * slope) {
                  // Gain ratio against the quadratic model steers mu.
                  const double predicted =
                      -alpha * slope - 0.5 * alpha * alpha *
                                           delta.dot(VectorXd(JtJ * delta));
                  const double actual = merit - merit_trial;
                  v = v_trial;
                  r_obs = r_trial;
                  c = c_trial;
                  if (predicted > 0.0 && actual > 0.75 * predicted)
                    mu = std::max(mu / 3.0, 1e-12);
                  else if (predicted > 0.0 && actual < 0.25 * predicted)
                    mu = std::min(mu * 2.0, 1e8);
                  stepped = true;
                  break;
                }
              }
              alpha *= 0.5;
            }
          }
        }
        if (!stepped) mu = std::min(mu * 10.0, 1e8);
      }
      ++result.inner_iterations;
      if (config.verbosity > 1)
        std::fprintf(stderr,
                     "  [inner %d] merit %.6e grad %.3e mu %.1e stepped %d\n",
                     inner, merit, grad_inf, mu, stepped ? 1 : 0);
      if (!stepped) break;
    }

    const double c_norm = c.lpNorm<Eigen::Infinity>();
    if (config.verbosity > 0)
      std::fprintf(stderr,
                   "[estimate] outer %d%s rho %.1e |c|inf %.3e grad %.3e obj %.3e |nu| %.2e\n",
                   outer, problem.weights_frozen() ? "F" : "", rho, c_norm,
                   grad_inf, r_obs.head(2 * problem.num_obs()).squaredNorm() / 2.0,
                   nu.lpNorm<Eigen::Infinity>());
    if (c_norm <= config.constraint_tolerance &&
        grad_inf <= config.stationarity_tolerance)
      return true;
    // First-order multiplier updates start once the iterate is close to
    // feasible; estimates taken far from the constraint manifold are noise
    // and pull the inner solver sideways. The penalty rises only when
    // feasibility stalls, so the subproblems stay well conditioned and the
    // objective can keep moving along the constraint manifold.
    if (c_norm <= 1e-3)
      nu = (nu + rho * c).cwiseMax(-1e10).cwiseMin(1e10);
    if (c_norm > 0.5 * c_prev && c_norm > 10.0 * config.constraint_tolerance)
      rho = std::min(rho * config.penalty_growth, config.max_penalty);
    c_prev = c_norm;
    omega = std::max(0.5 * omega, 0.5 * config.stationarity_tolerance);
    return false;
  };

  // Phase A (with hypothesized unobserved agents only): weights frozen at
  // the refreshed values while trajectories and multipliers settle. The
  // visible agents' stationarity misfit is then attributed to the
  // unobserved trajectory, which is the only mobile explanation, instead
  // of being absorbed by shrinking interaction weights. The anchors toward
  // the forward-completed arc decay to zero meanwhile.
  int outer = 0;
  if (any_unobserved) {
    problem.freeze_weights(true);
    for (int a_outer = 0; a_outer < 8; ++a_outer, ++outer) {
      if (problem.num_pseudo() > 0) {
        problem.set_pseudo_scale(std::sqrt(2.0) * std::pow(0.5, a_outer));
        problem.evaluate(v, r_obs, c);
      }
      ++result.outer_iterations;
      const bool done = al_round(outer);
      if (done || c.lpNorm<Eigen::Infinity>() <= 1e-5) break;
    }
    problem.freeze_weights(false);
    problem.set_pseudo_scale(0.0);
    problem.refresh_weights_multipliers(v);
    problem.evaluate(v, r_obs, c);
    nu.setZero();
    omega = std::max(omega, 1e-3);
    mu = 1e-4;
    c_prev = std::numeric_limits<double>::infinity();
  }
  for (; outer < config.max_outer_iterations; ++outer) {
    ++result.outer_iterations;
    if (al_round(outer)) {
      result.converged = true;
      break;
    }
  }

  // Unpack.
  const int T = tmpl.horizon;
  result.kkt_constraint_violation = c.lpNorm<Eigen::Infinity>();
  result.observation_mse =
      problem.num_obs() == 0
          ? 0.0
          : r_obs.head(2 * problem.num_obs()).squaredNorm() /
                (problem.obs_scale() * problem.obs_scale()) /
                static_cast<double>(problem.num_obs());
  result.weights.resize(tmpl.agents.size());
  result.trajectories.resize(tmpl.agents.size());
  result.multipliers.resize(tmpl.agents.size());
  for (int i = 0; i < tmpl.num_agents(); ++i) {
    const auto& agent = tmpl.agents[static_cast<size_t>(i)];
    auto& traj = result.trajectories[static_cast<size_t>(i)];
    if (agent.role == AgentRole::kAnchored) {
      traj = agent.known_trajectory;
      continue;
    }
    result.weights[static_cast<size_t>(i)] = problem.weights_of(i, v);
    traj.states.resize(static_cast<size_t>(T) + 1);
    traj.controls.resize(static_cast<size_t>(T));
    for (int k = 0; k <= T; ++k)
      traj.states[static_cast<size_t>(k)] =
          AgentState::from_stacked(problem.state_of(i, k, v));
    auto& lam = result.multipliers[static_cast<size_t>(i)];
    lam.resize(static_cast<size_t>(T));
    for (int k = 0; k < T; ++k) {
      traj.controls[static_cast<size_t>(k)].acceleration = v.segment<2>(problem.vu(i, k));
      lam[static_cast<size_t>(k)] = v.segment<4>(problem.vlam(i, k));
    }
  }
  return result;
}

// The occlusion-ignorant baseline: the same estimator run on a template
// that contains visible (observed) agents only.
inline EstimateResult estimate_game_ignorant(const ObservationSequence& observations,
                                             const EstimationTemplate& tmpl,
                                             const EstimatorConfig& config = {}) {
  for (size_t i = 0; i < tmpl.agents.size(); ++i)
    if (tmpl.agents[i].role == AgentRole::kEstimated &&
        tmpl.agents[i].observation_id < 0)
      throw Error(
          "estimate_game_ignorant: template must not hypothesize unobserved "
          "agents (agent " +
          std::to_string(i) + ")");
  return estimate_game(observations, tmpl, config);
}

// Template with every game agent estimated; visible agents take their world
// index as observation id, occluded agents are unobserved and carry the
// given initialization priors.
inline EstimationTemplate template_from_game(
    const GameSpec& game, const VisibilityModel& visibility,
    const std::vector<std::pair<int, AgentState>>& occluded_priors = {}) {
  EstimationTemplate tmpl;
  tmpl.dt = game.dt;
  tmpl.horizon = game.horizon;
  for (int i = 0; i < game.num_agents(); ++i) {
    TemplateAgent agent;
    agent.features = game.agents[static_cast<size_t>(i)].features;
    agent.role = AgentRole::kEstimated;
    agent.observation_id = visibility.is_visible(i) ? i : -1;
    for (const auto& [idx, prior] : occluded_priors)
      if (idx == i) {
        agent.init_prior = prior;
        agent.has_init_prior = true;
      }
    tmpl.agents.push_back(std::move(agent));
  }
  return tmpl;
}

// Template for the occlusion-ignorant baseline: visible agents only.
inline EstimationTemplate ignorant_template_from_game(
    const GameSpec& game, const VisibilityModel& visibility) {
  EstimationTemplate tmpl;
  tmpl.dt = game.dt;
  tmpl.horizon = game.horizon;
  for (int i : visibility.visible) {
    TemplateAgent agent;
    agent.features = game.agents[static_cast<size_t>(i)].features;
    agent.role = AgentRole::kEstimated;
    agent.observation_id = i;
    tmpl.agents.push_back(std::move(agent));
  }
  return tmpl;
}

// Reconstructs the estimated game for forward solving: template features
// with estimated weights and estimated initial states.
inline GameSpec game_from_estimate(const EstimationTemplate& tmpl,
                                   const EstimateResult& result) {
  GameSpec spec;
  spec.dt = tmpl.dt;
  spec.horizon = tmpl.horizon;
  for (int i = 0; i < tmpl.num_agents(); ++i) {
    const auto& agent = tmpl.agents[static_cast<size_t>(i)];
    AgentSpec out;
    out.initial_state = result.trajectories[static_cast<size_t>(i)].states[0];
    out.features = agent.features;
    if (agent.role == AgentRole::kEstimated)
      for (int l = 0; l < agent.num_features(); ++l)
        out.features[static_cast<size_t>(l)].weight =
            result.weights[static_cast<size_t>(i)][l];
    spec.agents.push_back(out);
  }
  return spec;
}

}  // namespace ocg

#endif  // OCG_ESTIMATOR_HPP
