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

#ifndef RLHF_CRITIC_FIT_H_
#define RLHF_CRITIC_FIT_H_

// Q-function estimation for a fixed policy: per-sample TD updates with
// experience replay, a target network refreshed once per phase, projection
// onto a ball around the initial parameters, and iterate averaging.

#include <optional>
#include <vector>

#include "rlhf/diffcore.h"
#include "rlhf/env.h"
#include "rlhf/models.h"

namespace rlhf {

class Rng;

struct CriticFitConfig {
  int J_outer = 10;   // target phases
  int L_inner = 500;  // TD steps per phase
  // Defaults: 1/sqrt(L_inner) and 1/(1 - gamma).
  std::optional<double> step_beta;
  std::optional<double> radius;

  double beta() const;
  double radius_for(double gamma) const;
  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct ReplayBuffer {
  std::vector<Transition> tuples;
  std::size_t size() const { return tuples.size(); }
  bool empty() const { return tuples.empty(); }
};

// Euclidean projection of `params` onto the ball of `radius` around `center`.
ParamVec project_ball(const ParamVec& params, const ParamVec& center,
                      double radius);

struct FitDiagnostics {
  // Bellman residual of each phase's averaged critic on the buffer.
  std::vector<double> phase_residuals;
  // Largest ||theta - anchor|| seen after any projected step.
  double max_anchor_distance = 0.0;
};

// Runs cfg.J_outer phases of cfg.L_inner steps
//   theta <- Proj(theta + beta (y - Q_theta(s, a)) grad Q_theta(s, a)),
//   y = r + gamma Q_target(s', a'), a' ~ policy(s'),
// with (s, a, r, s') drawn uniformly from the buffer. Phase 1 uses the
// initial critic as target; each later phase targets, and warm-starts from,
// the previous phase's averaged iterate. Returns the last phase's average.
// Throws UsageError on an empty buffer.
CriticModel fit_q(double gamma, const ReplayBuffer& buffer,
                  const PolicyTable& policy, const CriticModel& critic_init,
                  const CriticFitConfig& cfg, Rng& rng,
                  FitDiagnostics* diagnostics = nullptr);

// Mean over the buffer of (r + gamma E_{a'~pi} Q(s', a') - Q(s, a))^2.
double bellman_residual(double gamma, const ReplayBuffer& buffer,
                        const PolicyTable& policy, const CriticModel& critic);

}  // namespace rlhf

#endif  // RLHF_CRITIC_FIT_H_
