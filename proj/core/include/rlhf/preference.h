// Copyright 2026 The rlhf-bilevel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef RLHF_PREFERENCE_H_
#define RLHF_PREFERENCE_H_

// Bradley-Terry preferences between trajectories.
//
// Label convention: y = 1 means traj0 is preferred. The objective maximized
// by the library is the expected likelihood assigned to the observed labels,
//   U = y * P(traj0 > traj1) + (1 - y) * (1 - P(traj0 > traj1)),
// whose gradients in the reward and policy parameters are the estimators
// below.

#include <vector>

#include "rlhf/diffcore.h"
#include "rlhf/env.h"
#include "rlhf/models.h"

namespace rlhf {

class Rng;

struct PreferencePair {
  Trajectory traj0;
  Trajectory traj1;
  int label = 0;  // 1: traj0 preferred
};

struct PrefBatch {
  std::vector<PreferencePair> pairs;
  std::size_t size() const { return pairs.size(); }
};

enum class PrefObjective {
  kLikelihood,     // mean U, the default
  kLogLikelihood,  // mean log U; experimentation only
};

// Sum of reward_fn over the steps of `traj`.
double trajectory_return(const RewardFn& reward_fn, const Trajectory& traj);

// sigmoid(R(traj0) - R(traj1)). Throws ModelError on non-finite rewards.
double bt_prob(const RewardFn& reward_fn, const Trajectory& traj0,
               const Trajectory& traj1);
double bt_prob(const RewardFn& reward_fn, const PreferencePair& pair);

// Logistic function, stable for large |x|.
double sigmoid(double x);

// y ~ Bernoulli(bt_prob under the hidden true reward).
int oracle_label(const TabularMdp& mdp, const Trajectory& traj0,
                 const Trajectory& traj1, Rng& rng);

// B independent trajectory pairs from `policy`, labeled by the oracle.
// Trajectories come from `traj_rng`, labels from `label_rng`.
PrefBatch sample_pref_batch(const TabularMdp& mdp, const PolicyTable& policy,
                            int batch_size, int horizon, Rng& traj_rng,
                            Rng& label_rng);

// Batch mean of U and its reward-parameter gradient.
ValueGrad pref_objective_and_grad_phi(const RewardModel& reward,
                                      const PrefBatch& batch,
                                      PrefObjective objective =
                                          PrefObjective::kLikelihood);
ValueGrad pref_objective_and_grad_phi(const ValueGradTable& reward,
                                      const PrefBatch& batch,
                                      PrefObjective objective =
                                          PrefObjective::kLikelihood);

// Batch mean of U * (sum of policy scores over the steps of both
// trajectories).
ParamVec pref_grad_lambda(const RewardModel& reward, const PolicyModel& policy,
                          const PrefBatch& batch);
ParamVec pref_grad_lambda(const ValueGradTable& reward, const ScoreTable& scores,
                          const PrefBatch& batch);

}  // namespace rlhf

#endif  // RLHF_PREFERENCE_H_
