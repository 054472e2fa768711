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

#include "rlhf/preference.h"

#include <cmath>

#include "rlhf/errors.h"
#include "rlhf/rng.h"

namespace rlhf {

namespace {

void check_batch(const PrefBatch& batch) {
  if (batch.pairs.empty()) throw UsageError("preference batch is empty");
}

double table_return(const ValueGradTable& t, const Trajectory& traj) {
  double r = 0.0;
  for (const Step& st : traj.steps) r += t.value(st.state, st.action);
  return r;
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double trajectory_return(const RewardFn& reward_fn, const Trajectory& traj) {
  double r = 0.0;
  for (const Step& st : traj.steps) r += reward_fn(st.state, st.action);
  return r;
}

double bt_prob(const RewardFn& reward_fn, const Trajectory& traj0,
               const Trajectory& traj1) {
  if (traj0.steps.empty() || traj1.steps.empty()) {
    throw UsageError("trajectories must be nonempty");
  }
  const double r0 = trajectory_return(reward_fn, traj0);
  const double r1 = trajectory_return(reward_fn, traj1);
  if (!std::isfinite(r0) || !std::isfinite(r1)) {
    throw ModelError("non-finite trajectory return");
  }
  return sigmoid(r0 - r1);
}

double bt_prob(const RewardFn& reward_fn, const PreferencePair& pair) {
  return bt_prob(reward_fn, pair.traj0, pair.traj1);
}

int oracle_label(const TabularMdp& mdp, const Trajectory& traj0,
                 const Trajectory& traj1, Rng& rng) {
  const double p = bt_prob(
      [&](int s, int a) { return mdp.true_reward(s, a); }, traj0, traj1);
  return rng.bernoulli(p) ? 1 : 0;
}

PrefBatch sample_pref_batch(const TabularMdp& mdp, const PolicyTable& policy,
                            int batch_size, int horizon, Rng& traj_rng,
                            Rng& label_rng) {
  if (batch_size < 1) throw UsageError("batch size must be >= 1");
  PrefBatch batch;
  batch.pairs.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    PreferencePair pair;
    pair.traj0 = sample_trajectory(mdp, policy, horizon, traj_rng);
    pair.traj1 = sample_trajectory(mdp, policy, horizon, traj_rng);
    pair.label = oracle_label(mdp, pair.traj0, pair.traj1, label_rng);
    batch.pairs.push_back(std::move(pair));
  }
  return batch;
}

ValueGrad pref_objective_and_grad_phi(const ValueGradTable& reward,
                                      const PrefBatch& batch,
                                      PrefObjective objective) {
  check_batch(batch);
  // Every pair contributes coef * (grad R(traj0) - grad R(traj1)); fold the
  // coefficients onto (s, a) first and touch the gradient table once.
  std::vector<double> coef(static_cast<std::size_t>(reward.n_states) *
                               reward.n_actions,
                           0.0);
  double value = 0.0;
  for (const PreferencePair& pair : batch.pairs) {
    const double p =
        sigmoid(table_return(reward, pair.traj0) - table_return(reward, pair.traj1));
    double c;
    if (objective == PrefObjective::kLikelihood) {
      value += pair.label == 1 ? p : 1.0 - p;
      // dU/d(R0 - R1) = (2y - 1) p (1 - p)
      c = (pair.label == 1 ? 1.0 : -1.0) * p * (1.0 - p);
    } else {
      value += std::log(pair.label == 1 ? p : 1.0 - p);
      c = pair.label - p;
    }
    for (const Step& st : pair.traj0.steps) coef[st.state * reward.n_actions + st.action] += c;
    for (const Step& st : pair.traj1.steps) coef[st.state * reward.n_actions + st.action] -= c;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  ValueGrad out{value * inv, ParamVec(reward.grads.front().size())};
  for (std::size_t k = 0; k < coef.size(); ++k) {
    if (coef[k] != 0.0) out.grad.axpy(coef[k] * inv, reward.grads[k]);
  }
  return out;
}

ValueGrad pref_objective_and_grad_phi(const RewardModel& reward,
                                      const PrefBatch& batch,
                                      PrefObjective objective) {
  check_batch(batch);
  return pref_objective_and_grad_phi(reward_table(reward, true), batch,
                                     objective);
}

ParamVec pref_grad_lambda(const ValueGradTable& reward, const ScoreTable& scores,
                          const PrefBatch& batch) {
  check_batch(batch);
  std::vector<double> coef(scores.scores.size(), 0.0);
  for (const PreferencePair& pair : batch.pairs) {
    const double p =
        sigmoid(table_return(reward, pair.traj0) - table_return(reward, pair.traj1));
    const double u = pair.label == 1 ? p : 1.0 - p;
    for (const Trajectory* traj : {&pair.traj0, &pair.traj1}) {
      for (const Step& st : traj->steps) coef[st.state * scores.n_actions + st.action] += u;
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  ParamVec g(scores.scores.front().size());
  for (std::size_t k = 0; k < coef.size(); ++k) {
    if (coef[k] != 0.0) g.axpy(coef[k] * inv, scores.scores[k]);
  }
  return g;
}

ParamVec pref_grad_lambda(const RewardModel& reward, const PolicyModel& policy,
                          const PrefBatch& batch) {
  check_batch(batch);
  return pref_grad_lambda(reward_table(reward, false), score_table(policy),
                          batch);
}

}  // namespace rlhf
