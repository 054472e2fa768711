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

#ifndef RLHF_ORACLE_H_
#define RLHF_ORACLE_H_

// Exact tabular computations used to certify the stochastic estimators:
// closed-form policy evaluation and visitation, exact gradients of the
// return in the policy and reward parameters, the enumerated preference
// objective, nested inner solves for the penalty objective, and numerical
// probes of the policy-class regularity constants.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rlhf/diffcore.h"
#include "rlhf/env.h"
#include "rlhf/models.h"

namespace rlhf {

struct ExactPolicyEval {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> q_table;      // [s][a]
  std::vector<double> visitation;   // normalized discounted visitation [s][a]
  double j_value = 0.0;

  double q(int s, int a) const {
    return q_table[static_cast<std::size_t>(s) * n_actions + a];
  }
  double d(int s, int a) const {
    return visitation[static_cast<std::size_t>(s) * n_actions + a];
  }
};

// Q = (I - gamma P_pi)^{-1} r by a dense solve; visitation
// d = (1 - gamma) mu0^T (I - gamma P_pi)^{-1} with mu0(s, a) = nu(s) pi(a|s);
// J = sum_{s,a} mu0(s, a) Q(s, a).
ExactPolicyEval exact_policy_eval(const TabularMdp& mdp,
                                  const PolicyTable& policy,
                                  const RewardFn& reward_fn);

// Max over s, a of |Q - T^pi Q|.
double bellman_residual_max(const TabularMdp& mdp, const PolicyTable& policy,
                            const RewardFn& reward_fn,
                            const std::vector<double>& q_table);

RewardFn true_reward_fn(const TabularMdp& mdp);
// Tabulates the model once and returns a lookup.
RewardFn reward_fn_of(const RewardModel& reward);

struct OptimalValue {
  std::vector<double> q_star;  // [s][a]
  std::vector<int> greedy;     // argmax action per state
  double j_star = 0.0;         // sum_s nu(s) max_a Q*(s, a)
};

// Value iteration to sup-norm change 1e-13.
OptimalValue value_iteration(const TabularMdp& mdp, const RewardFn& reward_fn);

// Deterministic policy table choosing greedy[s].
PolicyTable greedy_table(const TabularMdp& mdp, const std::vector<int>& greedy);

// Exact gradient of J(lambda) = E_nu[Q]:
//   (1 / (1 - gamma)) sum_{s,a} d(s, a) score(s, a) Q(s, a).
ParamVec exact_grad_lambda_J(const TabularMdp& mdp, const PolicyModel& policy,
                             const RewardFn& reward_fn);

// Exact reward-parameter gradient of J:
//   (1 / (1 - gamma)) sum_{s,a} d(s, a) grad r_phi(s, a).
ParamVec exact_grad_phi_J(const TabularMdp& mdp, const PolicyTable& policy,
                          const RewardModel& reward);

// Expectation of the H-step discounted reward-gradient estimator,
// sum_{j<H} gamma^j E[grad r(s_j, a_j)], by forward propagation of the state
// distribution.
ParamVec exact_truncated_grad_phi_J(const TabularMdp& mdp,
                                    const PolicyTable& policy,
                                    const RewardModel& reward, int horizon);

struct ExactPref {
  double value = 0.0;
  ParamVec grad_phi;
  ParamVec grad_lambda;
  // Total probability of the enumerated trajectories (should be 1).
  double total_probability = 0.0;
  std::size_t n_trajectories = 0;
};

inline constexpr double kMaxEnumeratedTrajectories = 1e6;

// Expected likelihood objective over independent trajectory pairs of length
// H from `policy`, with the label integrated out under the hidden-reward
// Bradley-Terry model, and its gradients. Trajectories are enumerated
// exhaustively and aggregated by their state-action visit counts, which
// determine every quantity involved. Throws CapacityError when
// (n_states * n_actions)^H exceeds 1e6.
ExactPref exact_pref_objective(const TabularMdp& mdp, const PolicyModel& policy,
                               const RewardModel& reward, int horizon);

struct InnerSolveOptions {
  double tol = 1e-8;
  int max_iter = 100000;
};

struct InnerSolveResult {
  PolicyModel policy;
  double objective = 0.0;  // J + sigma G at the returned policy
  double j_value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
};

// Exact-gradient ascent with backtracking on J(lambda) + sigma G(lambda),
// from `init`, until the gradient norm is <= tol. sigma = 0 skips the
// preference term entirely. Throws ConvergenceError past max_iter.
InnerSolveResult exact_inner_solve(const TabularMdp& mdp,
                                   const RewardModel& reward,
                                   const PolicyModel& init, double sigma,
                                   int horizon,
                                   const InnerSolveOptions& options = {});

// Penalty objective Phi_sigma(phi) = [max (J + sigma G) - max J] / sigma,
// both maxima from exact_inner_solve warm-started at `init`.
double penalty_objective(const TabularMdp& mdp, const RewardModel& reward,
                         const PolicyModel& init, double sigma, int horizon,
                         const InnerSolveOptions& options = {});

struct PenaltySolution {
  InnerSolveResult plain;      // argmax J
  InnerSolveResult penalized;  // argmax J + sigma G
  double value = 0.0;          // Phi_sigma
};
PenaltySolution solve_penalty(const TabularMdp& mdp, const RewardModel& reward,
                              const PolicyModel& init, double sigma,
                              int horizon, const InnerSolveOptions& options = {});

// Central finite differences of Phi_sigma in the reward parameters. Inner
// solves at perturbed phi warm-start from the solutions at phi.
ParamVec fd_hyper_grad(const TabularMdp& mdp, const RewardModel& reward,
                       const PolicyModel& init, double sigma, int horizon,
                       double tol, double h);

// ||fd(h) - fd(h/2)|| / ||fd(h/2) - fd(h/4)||; about 4 for a second-order
// scheme on a smooth function.
double richardson_ratio(const std::function<ParamVec(double)>& fd, double h);

struct ProbeReport {
  double fisher_min_eig = 0.0;   // empirical mu_f at the given policy
  double max_score_norm = 0.0;   // empirical M_g at the given policy
  double eps_bias = 0.0;         // compatible-approximation error
  double mu3 = 0.0;              // mu_f^3 / (2 M_g^2) over sampled policies
  double eps_prime = 0.0;        // mu_f sqrt(eps_bias) / (M_g (1 - gamma))
  // Weak gradient domination sqrt(mu3) (J* - J) <= eps_prime + |grad J|
  // evaluated exactly at random policies.
  int domination_samples = 0;
  int domination_violations = 0;
  double domination_worst_margin = 0.0;  // min over samples of rhs - lhs
  double j_star = 0.0;
};

struct ProbeStats {
  double fisher_min_eig = 0.0;
  double max_score_norm = 0.0;
  double eps_bias = 0.0;
};

// mu_f, M_g and eps_bias for one policy under reward_fn.
ProbeStats probe_policy(const TabularMdp& mdp, const PolicyModel& policy,
                        const RewardFn& reward_fn);

// Probes at `policy`, plus the weak-gradient-domination inequality
//   sqrt(mu3) (J* - J(lambda)) <= eps' + ||grad J(lambda)||
// at `n_samples` random policies drawn with fan-in initialization scaled by
// `scale`. The constants mu3 and eps' use the worst empirical mu_f, M_g and
// eps_bias across the sampled policies.
ProbeReport assumption_probes(const TabularMdp& mdp, const PolicyModel& policy,
                              const RewardModel& reward, int n_samples = 100,
                              std::uint64_t seed = 0, double scale = 1.0);

void write_probe_report(std::ostream& out, const ProbeReport& report);

}  // namespace rlhf

#endif  // RLHF_ORACLE_H_
