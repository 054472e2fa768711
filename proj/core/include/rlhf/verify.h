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


// Oracle certification suite. Every check compares a stochastic estimator or
// a hand-written gradient against closed-form, enumerated or
// finite-difference ground truth on small fixtures. The measurement helpers
// are public so the acceptance tests and the CLI share one implementation.

#ifndef RLHF_VERIFY_H_
#define RLHF_VERIFY_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rlhf/diffcore.h"
#include "rlhf/env.h"
#include "rlhf/models.h"

namespace rlhf {

enum class VerifyLevel { kFast, kFull };

std::string to_string(VerifyLevel level);
VerifyLevel parse_verify_level(const std::string& s);

// Fixtures.
// 3-state 2-action random MDP (gamma 0.9) for the policy- and reward-gradient
// identities.
TabularMdp gradient_fixture_mdp();
// 1-state 2-action MDP for the preference machinery (H = 1).
TabularMdp preference_fixture_mdp();
// 2-state 2-action MDP with state-independent transitions, gamma 0.5, for
// hyper-gradient certification.
TabularMdp hyper_fixture_mdp();

struct HyperFixture {
  TabularMdp mdp;
  RewardModel reward;  // tabular, standard normal from Rng(1)
  PolicyModel init;    // tabular, zero logits
  double sigma = 0.5;
  int horizon = 2;
  double tol = 1e-8;
};
HyperFixture hyper_fixture();

// Measurements. Each returns the quantity a check compares with its
// threshold.

// Worst relative L2 error of backward against central differences over
// `n_models` random MLPs (depth <= 3, widths <= 16).
double autodiff_max_error(int n_models, std::uint64_t seed, double h);

struct ScoreCheck {
  double max_fd_error = 0.0;       // policy_score vs FD of log pi, relative
  double max_identity_error = 0.0; // |sum_a pi(a|s) score(s, a)|
};
ScoreCheck score_checks(std::uint64_t seed);

// Relative error of exact_grad_lambda_J against FD of the exact J.
double policy_grad_fd_error(std::uint64_t seed, const Architecture& arch);
// Relative error of exact_grad_phi_J against FD of the exact J.
double reward_grad_fd_error(std::uint64_t seed, const Architecture& arch);

struct BiasCheck {
  int horizon = 0;
  double bias_norm = 0.0;  // |E[truncated estimator] - grad_phi J|
  double bound = 0.0;      // 2 gamma^H max|grad r| / (1 - gamma)
};
BiasCheck truncation_bias(int horizon, std::uint64_t seed);

// Max |P(a > b) + P(b > a) - 1| over random pairs.
double preference_complement_error(int n_pairs, std::uint64_t seed);
// Relative error of the batch preference gradient in phi against FD.
double pref_grad_phi_fd_error(std::uint64_t seed);
// Relative error of the enumerated G+ gradient in lambda against FD.
double exact_pref_grad_lambda_fd_error(std::uint64_t seed);

struct OracleSelfCheck {
  double bellman_residual = 0.0;
  double enumeration_mass_error = 0.0;
  double chain_optimum_error = 0.0;  // slip 0 chain vs gamma^(n-1)/(1-gamma)
};
OracleSelfCheck oracle_self_checks(std::uint64_t seed);

// Outcome of comparing a Monte-Carlo mean with a reference vector.
struct McComparison {
  int coordinates = 0;
  int outside = 0;           // coordinates with |mean - ref| > k * SE + slack
  double worst_z = 0.0;      // max |mean - ref| / SE over coordinates
  double max_abs_error = 0.0;
};

McComparison compare_mc_mean(const std::vector<ParamVec>& samples,
                             const ParamVec& reference, double k_se,
                             double slack = 0.0);

// Policy-gradient estimator with an exact-Q tabular critic on the gradient
// fixture, n single-sample estimates, versus exact_grad_lambda_J.
McComparison policy_grad_mc(int n, std::uint64_t seed);
// Truncated reward-gradient estimator over n trajectories versus the exact
// truncated expectation (slack 0) and versus grad_phi J (slack = bias bound).
McComparison reward_grad_mc(int n, int horizon, std::uint64_t seed,
                            bool against_untruncated);
// Preference gradient in lambda over n single-pair batches on the
// preference fixture versus the enumerated oracle.
McComparison pref_grad_lambda_mc(int n, std::uint64_t seed);

struct CriticCheck {
  double max_error = 0.0;  // max |Q_hat - Q_exact|
  double tolerance = 0.0;  // 0.1 / (1 - gamma)
  double max_anchor_distance = 0.0;
  double radius = 0.0;
  double seconds = 0.0;
};
// fit_q on the seed-0 5-state 2-action MDP, fixed softmax policy, tabular
// critic, J = 20, L = 2000, 10^4 tuples.
CriticCheck critic_fit_check(std::uint64_t seed);
// Single-state single-action, r = 1, gamma 0.9: |Q_hat - 10|.
double critic_constant_reward_error(std::uint64_t seed);

struct HyperCheck {
  double cosine = 0.0;
  double relative_error = 0.0;
  double richardson = 0.0;
  ParamVec fd;
  ParamVec estimate;
};
// Exact-formula hyper-gradient (oracle G+ and J gradients at the solved
// policies) versus fd_hyper_grad; richardson left at 0.
HyperCheck hyper_exact_check();
// hyper_grad_estimate (penalty-consistent, batch B, reward-gradient horizon
// j_horizon) versus fd_hyper_grad, with the Richardson ratio at h = 0.1.
HyperCheck hyper_mc_check(int batch, int j_horizon, std::uint64_t seed,
                          bool coupled);

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;
  std::string criterion;  // human-readable threshold, e.g. "<= 1e-5"
};

// Runs the suite. `progress` receives one line per finished check.
std::vector<CheckResult> run_verify(VerifyLevel level,
                                    std::ostream* progress = nullptr);

void print_check_table(std::ostream& out,
                       const std::vector<CheckResult>& results);

// Prints the table and the failing checks. Returns 0 iff every check passes.
int cmd_verify(VerifyLevel level, bool inject_backward_sign_fault,
               std::ostream& out);

}  // namespace rlhf

#endif  // RLHF_VERIFY_H_
