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

#ifndef OCG_METRICS_HPP
#define OCG_METRICS_HPP

#include <algorithm>
#include <optional>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "ocg/types.hpp"

namespace ocg {

// 1 - cos(angle) between two weight vectors; 0 for aligned directions
// regardless of positive scale, up to 2 for opposed ones.
inline double cosine_dissimilarity(const VectorXd& w_true, const VectorXd& w_est) {
  if (w_true.size() != w_est.size())
    throw Error("cosine_dissimilarity: size mismatch");
  const double denom = w_true.norm() * w_est.norm();
  if (denom == 0.0)
    throw Error("cosine_dissimilarity: zero weight vector");
  return 1.0 - w_true.dot(w_est) / denom;
}

// Average displacement error over the given agent subset: the mean l2
// position error over all subset agents and all time indices present in the
// trajectories. The average divides by the actual number of summed terms.
inline double ade(const JointTrajectory& truth, const JointTrajectory& estimate,
                  const std::vector<int>& subset) {
  if (subset.empty())
    throw Error("ade: empty agent subset (metric not applicable)");
  double total = 0.0;
  long count = 0;
  for (int agent : subset) {
    if (agent < 0 || agent >= static_cast<int>(truth.size()) ||
        agent >= static_cast<int>(estimate.size()))
      throw Error("ade: agent index " + std::to_string(agent) + " out of range");
    const auto& a = truth[static_cast<size_t>(agent)].states;
    const auto& b = estimate[static_cast<size_t>(agent)].states;
    if (a.size() != b.size())
      throw Error("ade: trajectory length mismatch for agent " +
                  std::to_string(agent) + " (" + std::to_string(a.size()) +
                  " vs " + std::to_string(b.size()) + ")");
    for (size_t k = 0; k < a.size(); ++k) {
      total += (a[k].position - b[k].position).norm();
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

using AgentPair = std::pair<int, int>;  // unordered; stored with first < second

inline AgentPair make_pair_sorted(int i, int j) {
  return i < j ? AgentPair{i, j} : AgentPair{j, i};
}

// Minimum pairwise distance over time. An optional pair filter restricts the
// minimum to selected agent pairs (e.g. initially-occluded pairs).
inline double min_mutual_distance(
    const JointTrajectory& joint,
    const std::optional<std::set<AgentPair>>& pair_filter = std::nullopt) {
  const int M = static_cast<int>(joint.size());
  if (M < 2) throw Error("min_mutual_distance: need at least two agents");
  double best = std::numeric_limits<double>::infinity();
  const size_t steps = joint[0].states.size();
  for (size_t k = 0; k < steps; ++k) {
    for (int i = 0; i < M; ++i) {
      for (int j = i + 1; j < M; ++j) {
        if (pair_filter.has_value() && !pair_filter->count(make_pair_sorted(i, j)))
          continue;
        best = std::min(best, (joint[static_cast<size_t>(i)].states[k].position -
                               joint[static_cast<size_t>(j)].states[k].position)
                                  .norm());
      }
    }
  }
  return best;
}

inline double median_of(std::vector<double> values) {
  const size_t n = values.size();
  std::sort(values.begin(), values.end());
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct BootstrapCi {
  double median = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// Percentile bootstrap confidence interval of the median; deterministic
// given the seed.
inline BootstrapCi bootstrap_median_ci(const std::vector<double>& samples,
                                       int num_resamples, double confidence,
                                       std::uint64_t seed) {
  if (samples.size() < 2)
    throw Error("bootstrap_median_ci: need at least two samples");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw Error("bootstrap_median_ci: confidence must be in (0, 1)");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, samples.size() - 1);

  std::vector<double> medians(static_cast<size_t>(num_resamples));
  std::vector<double> resample(samples.size());
  for (int r = 0; r < num_resamples; ++r) {
    for (auto& v : resample) v = samples[pick(rng)];
    medians[static_cast<size_t>(r)] = median_of(resample);
  }
  std::sort(medians.begin(), medians.end());

  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(medians.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, medians.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return (1.0 - frac) * medians[lo] + frac * medians[hi];
  };
  BootstrapCi ci;
  ci.median = median_of(samples);
  ci.lower = quantile(0.5 * (1.0 - confidence));
  ci.upper = quantile(1.0 - 0.5 * (1.0 - confidence));
  return ci;
}

// Aggregate report for one experiment condition.
struct MetricReport {
  std::vector<double> dissimilarity_per_agent;  // NaN where not estimated
  double dissimilarity_mean_visible = std::numeric_limits<double>::quiet_NaN();
  double ade_visible = std::numeric_limits<double>::quiet_NaN();
  double ade_occluded = std::numeric_limits<double>::quiet_NaN();
  double d_min_overall = std::numeric_limits<double>::quiet_NaN();
  double d_min_occluded_pairs = std::numeric_limits<double>::quiet_NaN();
};

}  // namespace ocg

#endif  // OCG_METRICS_HPP
