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

#ifndef RLHF_BILEVEL_H_
#define RLHF_BILEVEL_H_

// First-order penalty method for bilevel RLHF.
//
// The lower level maximizes the return J(lambda, phi) of the policy under the
// learned reward; the upper level maximizes the expected preference
// likelihood G(phi, lambda) of the reward model at the lower-level solution.
// Training keeps two policy chains: a plain chain ascending J and a
// penalized chain ascending sigma J + G. Their end points give the reward
// hyper-gradient through the difference of the reward gradients of J.
//
// All three updates are normalized ascent steps with the schedules
//   eta_t = 7 / (2 t sqrt(mu1)), tau_k = 7 / (2 (k+1) sqrt(mu3)),
//   tau'_k = 7 / (2 (k+1) sqrt(mu2)).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rlhf/critic_fit.h"
#include "rlhf/diffcore.h"
#include "rlhf/env.h"
#include "rlhf/models.h"
#include "rlhf/preference.h"

namespace rlhf {

class Rng;

enum class HyperVariant {
  // Preference gradient under the plain chain plus
  // (grad_phi J(plain) - grad_phi J(penalized)) / sigma.
  kPaperLiteral,
  // Gradient of [max (J + sigma G) - max J] / sigma: preference gradient
  // under the penalized chain plus (grad_phi J(penalized) - grad_phi
  // J(plain)) / sigma.
  kPenaltyConsistent,
};

enum class SamplingMode {
  kPerChain,  // each chain samples under its own current policy
  kShared,    // both chains reuse samples drawn under the plain chain
};

std::string to_string(HyperVariant v);
std::string to_string(SamplingMode m);
HyperVariant parse_hyper_variant(const std::string& s);
SamplingMode parse_sampling_mode(const std::string& s);

struct TrainConfig {
  int T = 50;   // outer iterations
  int K = 20;   // inner iterations per outer iteration
  int B = 64;   // preference pairs per batch
  int n = 256;  // replay tuples and visitation samples per inner step
  int H = 5;    // trajectory length
  double sigma = 0.3;
  double mu1 = 1.0, mu2 = 1.0, mu3 = 1.0;
  CriticFitConfig critic_cfg;
  double norm_eps = 1e-12;
  HyperVariant hyper_variant = HyperVariant::kPenaltyConsistent;
  SamplingMode sampling_mode = SamplingMode::kPerChain;
  std::uint64_t seed = 0;

  Architecture policy_arch = Architecture::mlp(32);
  Architecture reward_arch = Architecture::mlp(32);
  Architecture critic_arch = Architecture::mlp(64);
  // Trajectory length of the truncated reward-gradient estimator of J;
  // 0 means H.
  int j_horizon = 0;
  // Truncation of the visitation sampler; 0 means default_geo_horizon.
  int max_geo_horizon = 0;
  // Exact preference objective per iteration (enumeration over H steps).
  bool oracle_enabled = false;
  // Held-out pairs (uniform policy) for the preference accuracy metric.
  int heldout_pairs = 1000;
  // Draw the two chains' reward-gradient trajectories from one shared random
  // stream (common random numbers), so identical policies give identical
  // samples and the J-difference term cancels exactly.
  bool coupled_j_samples = false;
  // When false both inner chains restart from the initial policy at every
  // outer iteration; when true they continue from their previous iterate.
  bool warm_start_chains = false;
  // Keep per-iteration hyper-gradient parts in TrainResult::trace.
  bool keep_trace = false;

  int effective_j_horizon() const { return j_horizon > 0 ? j_horizon : H; }
  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct RunRecord {
  int t = 0;
  double upper_value_est = 0.0;
  double upper_value_exact = 0.0;  // NaN unless oracle_enabled
  double j_true_exact = 0.0;
  double pref_accuracy = 0.0;
  double grad_norm_dt = 0.0;
  double bellman_residual = 0.0;
};

struct StepSizes {
  double eta = 0.0;
  double tau = 0.0;
  double tau_prime = 0.0;
};

// Schedules above; the inner index is shifted by one so k = 0 is valid.
StepSizes step_sizes(int t, int k, const TrainConfig& cfg);

// (1 / (1 - gamma)) * mean over n visitation draws of score(s, a) Q(s, a):
// an unbiased estimate of grad_lambda J when the critic is exact.
ParamVec policy_grad_estimate(const PolicyModel& policy,
                              const CriticModel& critic, const TabularMdp& mdp,
                              int n, Rng& rng, int max_geo_horizon = 0);

// Same estimator over given (s, a) samples with precomputed tables.
ParamVec policy_grad_from_samples(const ScoreTable& scores,
                                  const ValueGradTable& critic,
                                  const std::vector<Step>& samples,
                                  double gamma);

// sigma * policy_grad_estimate + preference gradient on a fresh labeled batch
// of B pairs from the policy.
ParamVec penalized_policy_grad_estimate(const PolicyModel& policy,
                                        const CriticModel& critic,
                                        const RewardModel& reward,
                                        const TabularMdp& mdp, int n, int B,
                                        int H, double sigma, Rng& rng,
                                        Rng& label_rng, int max_geo_horizon = 0);

// (1/B) sum over trajectories of sum_j gamma^(j-1) grad r_phi(s_j, a_j), j
// counting steps within each trajectory from 1.
ParamVec grad_phi_J_estimate(const RewardModel& reward,
                             const std::vector<Trajectory>& trajectories,
                             double gamma);
ParamVec grad_phi_J_estimate(const ValueGradTable& reward,
                             const std::vector<Trajectory>& trajectories,
                             double gamma);

struct HyperGradParts {
  ParamVec pref_term;     // preference gradient in phi
  ParamVec penalty_term;  // J-difference divided by sigma
  ParamVec total;
  double pref_value = 0.0;  // batch preference likelihood
};

// Reward hyper-gradient from the end points of the two chains, per
// cfg.hyper_variant. Uses cfg.B pairs of length cfg.H and cfg.B
// trajectories of length effective_j_horizon() per chain. Throws
// ConfigError if sigma <= 0.
HyperGradParts hyper_grad_estimate(const RewardModel& reward,
                                   const PolicyModel& plain_policy,
                                   const PolicyModel& penalized_policy,
                                   const TabularMdp& mdp,
                                   const TrainConfig& cfg, Rng& rng,
                                   Rng& label_rng);

enum class Direction { kAscent, kDescent };

// params +/- step * d / ||d||; unchanged when ||d|| < norm_eps. Throws
// NumericError on non-finite d or an overflowing norm, UsageError on
// step <= 0.
ParamVec normalized_update(const ParamVec& params, const ParamVec& d,
                           double step, Direction direction, double norm_eps);

struct HeldOutSet {
  std::vector<std::pair<Trajectory, Trajectory>> pairs;
};

// Pairs of length-H trajectories under the uniform policy.
HeldOutSet make_heldout(const TabularMdp& mdp, int n_pairs, int horizon,
                        Rng& rng);

// Fraction of held-out pairs with distinct true returns whose ordering under
// the learned reward agrees with the true ordering.
double pref_accuracy(const TabularMdp& mdp, const RewardModel& reward,
                     const HeldOutSet& heldout);

struct IterationTrace {
  HyperGradParts hyper;
  ParamVec phi_before;
  ParamVec phi_after;
};

struct TrainResult {
  RewardModel reward;
  PolicyModel policy;            // plain chain
  PolicyModel penalized_policy;  // penalized chain
  std::vector<RunRecord> records;
  std::vector<IterationTrace> trace;  // filled when cfg.keep_trace
};

// Runs the full outer/inner loop. `on_record` is called after each outer
// iteration. Deterministic given cfg.seed.
TrainResult train(const TabularMdp& mdp, const TrainConfig& cfg,
                  const std::function<void(const RunRecord&)>& on_record = {});

}  // namespace rlhf

#endif  // RLHF_BILEVEL_H_
