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

#include "rlhf/critic_fit.h"

#include <algorithm>
#include <cmath>

#include "rlhf/errors.h"
#include "rlhf/rng.h"

namespace rlhf {

double CriticFitConfig::beta() const {
  return step_beta.value_or(1.0 / std::sqrt(static_cast<double>(L_inner)));
}

double CriticFitConfig::radius_for(double gamma) const {
  return radius.value_or(1.0 / (1.0 - gamma));
}

void CriticFitConfig::validate() const {
  if (J_outer < 1) throw ConfigError("critic.J_outer", "must be >= 1");
  if (L_inner < 1) throw ConfigError("critic.L_inner", "must be >= 1");
  if (step_beta && !(*step_beta > 0.0)) {
    throw ConfigError("critic.step_beta", "must be > 0");
  }
  if (radius && !(*radius > 0.0)) {
    throw ConfigError("critic.radius", "must be > 0");
  }
}

ParamVec project_ball(const ParamVec& params, const ParamVec& center,
                      double radius) {
  ParamVec diff = params - center;
  const double dist = diff.norm();
  if (dist <= radius) return params;
  return center + (radius / dist) * diff;
}

double bellman_residual(double gamma, const ReplayBuffer& buffer,
                        const PolicyTable& policy, const CriticModel& critic) {
  if (buffer.empty()) throw UsageError("replay buffer is empty");
  const ValueGradTable q = critic_table(critic, false);
  std::vector<double> v(critic.n_states, 0.0);
  for (int s = 0; s < critic.n_states; ++s) {
    for (int a = 0; a < critic.n_actions; ++a) v[s] += policy.prob(s, a) * q.value(s, a);
  }
  double acc = 0.0;
  for (const Transition& t : buffer.tuples) {
    const double e = t.r + gamma * v[t.s_next] - q.value(t.s, t.a);
    acc += e * e;
  }
  return acc / static_cast<double>(buffer.size());
}

CriticModel fit_q(double gamma, const ReplayBuffer& buffer,
                  const PolicyTable& policy, const CriticModel& critic_init,
                  const CriticFitConfig& cfg, Rng& rng,
                  FitDiagnostics* diagnostics) {
  if (buffer.empty()) throw UsageError("cannot fit a critic on an empty buffer");
  cfg.validate();
  const double beta = cfg.beta();
  const double radius = cfg.radius_for(gamma);
  const ParamVec& anchor = critic_init.anchor;

  CriticModel target = critic_init;
  ParamVec theta = project_ball(critic_init.params, anchor, radius);
  CriticModel current = critic_init;
  const Tensor unit = Tensor::vector({1.0});

  for (int j = 0; j < cfg.J_outer; ++j) {
    const ValueGradTable target_q = critic_table(target, false);
    ParamVec sum(theta.size());
    for (int i = 0; i < cfg.L_inner; ++i) {
      const Transition& t = buffer.tuples[rng.index(buffer.size())];
      const int a_next = rng.categorical(policy.probs(t.s_next));
      const double y = t.r + gamma * target_q.value(t.s_next, a_next);
      auto [q, tape] = mlp_forward(
          current.spec, theta,
          Tensor::vector(state_action_features(current.spec, current.n_states,
                                               current.n_actions, t.s, t.a)));
      const ParamVec grad = backward(tape, unit);
      theta.axpy(beta * (y - q[0]), grad);
      theta = project_ball(theta, anchor, radius);
      if (diagnostics) {
        diagnostics->max_anchor_distance = std::max(
            diagnostics->max_anchor_distance, (theta - anchor).norm());
      }
      sum += theta;
    }
    sum *= 1.0 / static_cast<double>(cfg.L_inner);
    if (!sum.all_finite()) throw NumericError("critic parameters became non-finite");
    theta = sum;
    target.params = sum;
    if (diagnostics) {
      diagnostics->phase_residuals.push_back(
          bellman_residual(gamma, buffer, policy, target));
    }
  }
  CriticModel out = critic_init;
  out.params = std::move(theta);
  return out;
}

}  // namespace rlhf
