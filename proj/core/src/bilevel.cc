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

#include "rlhf/bilevel.h"

#include <cmath>
#include <limits>

#include "rlhf/errors.h"
#include "rlhf/oracle.h"
#include "rlhf/rng.h"

namespace rlhf {

std::string to_string(HyperVariant v) {
  return v == HyperVariant::kPaperLiteral ? "paper_literal" : "penalty_consistent";
}

std::string to_string(SamplingMode m) {
  return m == SamplingMode::kPerChain ? "per_chain" : "shared";
}

HyperVariant parse_hyper_variant(const std::string& s) {
  if (s == "paper_literal") return HyperVariant::kPaperLiteral;
  if (s == "penalty_consistent") return HyperVariant::kPenaltyConsistent;
  throw ConfigError("hyper_variant", "expected paper_literal or penalty_consistent");
}

SamplingMode parse_sampling_mode(const std::string& s) {
  if (s == "per_chain") return SamplingMode::kPerChain;
  if (s == "shared") return SamplingMode::kShared;
  throw ConfigError("sampling_mode", "expected per_chain or shared");
}

void TrainConfig::validate() const {
  auto positive = [](int v, const char* key) {
    if (v < 1) throw ConfigError(key, "must be >= 1");
  };
  positive(T, "T");
  positive(K, "K");
  positive(B, "B");
  positive(n, "n");
  positive(H, "H");
  if (!(sigma > 0.0)) throw ConfigError("sigma", "must be > 0");
  if (!(mu1 > 0.0)) throw ConfigError("mu1", "must be > 0");
  if (!(mu2 > 0.0)) throw ConfigError("mu2", "must be > 0");
  if (!(mu3 > 0.0)) throw ConfigError("mu3", "must be > 0");
  if (!(norm_eps >= 0.0)) throw ConfigError("norm_eps", "must be >= 0");
  if (j_horizon < 0) throw ConfigError("j_horizon", "must be >= 0");
  if (max_geo_horizon < 0) throw ConfigError("max_geo_horizon", "must be >= 0");
  if (heldout_pairs < 1) throw ConfigError("heldout_pairs", "must be >= 1");
  critic_cfg.validate();
}

StepSizes step_sizes(int t, int k, const TrainConfig& cfg) {
  if (t < 1 || k < 0) throw UsageError("step_sizes needs t >= 1 and k >= 0");
  return {7.0 / (2.0 * t * std::sqrt(cfg.mu1)),
          7.0 / (2.0 * (k + 1) * std::sqrt(cfg.mu3)),
          7.0 / (2.0 * (k + 1) * std::sqrt(cfg.mu2))};
}

namespace {

std::vector<Step> draw_visitation(const TabularMdp& mdp, const PolicyTable& pt,
                                  int n, Rng& rng, int max_geo_horizon) {
  if (n < 1) throw UsageError("need at least one visitation sample");
  const int m = max_geo_horizon > 0 ? max_geo_horizon
                                    : default_geo_horizon(mdp.gamma());
  std::vector<Step> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(sample_visitation_pair(mdp, pt, rng, m));
  return out;
}

std::vector<Trajectory> draw_trajectories(const TabularMdp& mdp,
                                          const PolicyTable& pt, int count,
                                          int horizon, Rng& rng) {
  std::vector<Trajectory> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    out.push_back(sample_trajectory(mdp, pt, horizon, rng));
  }
  return out;
}

}  // namespace

ParamVec policy_grad_from_samples(const ScoreTable& scores,
                                  const ValueGradTable& critic,
                                  const std::vector<Step>& samples,
                                  double gamma) {
  if (samples.empty()) throw UsageError("need at least one visitation sample");
  std::vector<double> counts(scores.scores.size(), 0.0);
  for (const Step& st : samples) counts[st.state * scores.n_actions + st.action] += 1.0;
  ParamVec g(scores.scores.front().size());
  const double scale =
      1.0 / ((1.0 - gamma) * static_cast<double>(samples.size()));
  for (int s = 0; s < scores.n_states; ++s) {
    for (int a = 0; a < scores.n_actions; ++a) {
      const double c = counts[s * scores.n_actions + a];
      if (c != 0.0) g.axpy(scale * c * critic.value(s, a), scores.at(s, a));
    }
  }
  return g;
}

ParamVec policy_grad_estimate(const PolicyModel& policy,
                              const CriticModel& critic, const TabularMdp& mdp,
                              int n, Rng& rng, int max_geo_horizon) {
  const PolicyTable pt = policy_table(policy);
  const std::vector<Step> samples = draw_visitation(mdp, pt, n, rng, max_geo_horizon);
  return policy_grad_from_samples(score_table(policy), critic_table(critic, false),
                                  samples, mdp.gamma());
}

ParamVec penalized_policy_grad_estimate(const PolicyModel& policy,
                                        const CriticModel& critic,
                                        const RewardModel& reward,
                                        const TabularMdp& mdp, int n, int B,
                                        int H, double sigma, Rng& rng,
                                        Rng& label_rng, int max_geo_horizon) {
  const PolicyTable pt = policy_table(policy);
  const ScoreTable scores = score_table(policy);
  const std::vector<Step> samples = draw_visitation(mdp, pt, n, rng, max_geo_horizon);
  ParamVec d = policy_grad_from_samples(scores, critic_table(critic, false),
                                        samples, mdp.gamma());
  d *= sigma;
  const PrefBatch batch = sample_pref_batch(mdp, pt, B, H, rng, label_rng);
  d += pref_grad_lambda(reward_table(reward, false), scores, batch);
  return d;
}

ParamVec grad_phi_J_estimate(const ValueGradTable& reward,
                             const std::vector<Trajectory>& trajectories,
                             double gamma) {
  if (trajectories.empty()) throw UsageError("need at least one trajectory");
  std::vector<double> weight(reward.values.size(), 0.0);
  for (const Trajectory& traj : trajectories) {
    double disc = 1.0;
    for (const Step& st : traj.steps) {
      weight[st.state * reward.n_actions + st.action] += disc;
      disc *= gamma;
    }
  }
  const double inv = 1.0 / static_cast<double>(trajectories.size());
  ParamVec g(reward.grads.front().size());
  for (std::size_t k = 0; k < weight.size(); ++k) {
    if (weight[k] != 0.0) g.axpy(weight[k] * inv, reward.grads[k]);
  }
  return g;
}

ParamVec grad_phi_J_estimate(const RewardModel& reward,
                             const std::vector<Trajectory>& trajectories,
                             double gamma) {
  if (trajectories.empty()) throw UsageError("need at least one trajectory");
  return grad_phi_J_estimate(reward_table(reward, true), trajectories, gamma);
}

HyperGradParts hyper_grad_estimate(const RewardModel& reward,
                                   const PolicyModel& plain_policy,
                                   const PolicyModel& penalized_policy,
                                   const TabularMdp& mdp,
                                   const TrainConfig& cfg, Rng& rng,
                                   Rng& label_rng) {
  if (!(cfg.sigma > 0.0)) throw ConfigError("sigma", "must be > 0");
  const ValueGradTable rt = reward_table(reward, true);
  const PolicyTable plain = policy_table(plain_policy);
  const PolicyTable pen = policy_table(penalized_policy);
  const bool literal = cfg.hyper_variant == HyperVariant::kPaperLiteral;

  const PrefBatch batch =
      sample_pref_batch(mdp, literal ? plain : pen, cfg.B, cfg.H, rng, label_rng);
  const ValueGrad pref = pref_objective_and_grad_phi(rt, batch);

  const int jh = cfg.effective_j_horizon();
  ParamVec gj_plain, gj_pen;
  if (cfg.coupled_j_samples) {
    const std::uint64_t stream = rng.next_u64();
    Rng plain_rng(stream), pen_rng(stream);
    gj_plain = grad_phi_J_estimate(
        rt, draw_trajectories(mdp, plain, cfg.B, jh, plain_rng), mdp.gamma());
    gj_pen = grad_phi_J_estimate(
        rt, draw_trajectories(mdp, pen, cfg.B, jh, pen_rng), mdp.gamma());
  } else {
    gj_plain = grad_phi_J_estimate(
        rt, draw_trajectories(mdp, plain, cfg.B, jh, rng), mdp.gamma());
    gj_pen = grad_phi_J_estimate(
        rt, draw_trajectories(mdp, pen, cfg.B, jh, rng), mdp.gamma());
  }

  HyperGradParts out;
  out.pref_value = pref.value;
  out.pref_term = pref.grad;
  out.penalty_term = literal ? gj_plain - gj_pen : gj_pen - gj_plain;
  out.penalty_term *= 1.0 / cfg.sigma;
  out.total = out.pref_term + out.penalty_term;
  return out;
}

ParamVec normalized_update(const ParamVec& params, const ParamVec& d,
                           double step, Direction direction, double norm_eps) {
  if (!(step > 0.0)) throw UsageError("step size must be > 0");
  if (!d.all_finite()) throw NumericError("non-finite update direction");
  const double norm = d.norm();
  if (!std::isfinite(norm)) throw NumericError("update direction norm overflows");
  if (norm < norm_eps || norm == 0.0) return params;
  const double sign = direction == Direction::kAscent ? 1.0 : -1.0;
  ParamVec out = params;
  out.axpy(sign * step / norm, d);
  return out;
}

HeldOutSet make_heldout(const TabularMdp& mdp, int n_pairs, int horizon,
                        Rng& rng) {
  const PolicyTable uniform = PolicyTable::uniform(mdp.n_states(), mdp.n_actions());
  HeldOutSet out;
  out.pairs.reserve(n_pairs);
  for (int i = 0; i < n_pairs; ++i) {
    Trajectory a = sample_trajectory(mdp, uniform, horizon, rng);
    Trajectory b = sample_trajectory(mdp, uniform, horizon, rng);
    out.pairs.emplace_back(std::move(a), std::move(b));
  }
  return out;
}

double pref_accuracy(const TabularMdp& mdp, const RewardModel& reward,
                     const HeldOutSet& heldout) {
  const ValueGradTable rt = reward_table(reward, false);
  auto learned = [&](const Trajectory& t) {
    double r = 0.0;
    for (const Step& st : t.steps) r += rt.value(st.state, st.action);
    return r;
  };
  auto truth = [&](const Trajectory& t) {
    double r = 0.0;
    for (const Step& st : t.steps) r += mdp.true_reward(st.state, st.action);
    return r;
  };
  int counted = 0, agree = 0;
  for (const auto& [a, b] : heldout.pairs) {
    const double dt = truth(a) - truth(b);
    if (std::abs(dt) <= 1e-12) continue;
    ++counted;
    const double dl = learned(a) - learned(b);
    if ((dt > 0.0 && dl > 0.0) || (dt < 0.0 && dl < 0.0)) ++agree;
  }
  return counted ? static_cast<double>(agree) / counted
                 : std::numeric_limits<double>::quiet_NaN();
}

namespace {

struct Chain {
  PolicyModel policy;
  CriticModel critic;
  ReplayBuffer buffer;
};

}  // namespace

TrainResult train(const TabularMdp& mdp, const TrainConfig& cfg,
                  const std::function<void(const RunRecord&)>& on_record) {
  cfg.validate();
  const int ns = mdp.n_states(), na = mdp.n_actions();
  const double gamma = mdp.gamma();

  Rng init_rng(derive_seed(cfg.seed, Stream::kInit));
  Rng plain_rng(derive_seed(cfg.seed, Stream::kPlainChain));
  Rng pen_rng(derive_seed(cfg.seed, Stream::kPenalizedChain));
  Rng label_rng(derive_seed(cfg.seed, Stream::kLabeler));
  Rng plain_critic_rng(derive_seed(cfg.seed, Stream::kPlainCritic));
  Rng pen_critic_rng(derive_seed(cfg.seed, Stream::kPenalizedCritic));
  Rng upper_rng(derive_seed(cfg.seed, Stream::kUpper));
  Rng heldout_rng(derive_seed(cfg.seed, Stream::kHeldOut));

  RewardModel reward = make_reward(
      ns, na, cfg.reward_arch,
      init_params(reward_spec(ns, na, cfg.reward_arch), InitScheme::kFanIn, init_rng));
  const PolicyModel policy0 = make_policy(
      ns, na, cfg.policy_arch,
      init_params(policy_spec(ns, na, cfg.policy_arch), InitScheme::kFanIn, init_rng));
  const MlpSpec cspec = critic_spec(ns, na, cfg.critic_arch);
  Chain plain{policy0,
              make_critic(ns, na, cfg.critic_arch,
                          init_params(cspec, InitScheme::kStandardNormal, init_rng)),
              {}};
  Chain pen{policy0,
            make_critic(ns, na, cfg.critic_arch,
                        init_params(cspec, InitScheme::kStandardNormal, init_rng)),
            {}};

  const HeldOutSet heldout = make_heldout(mdp, cfg.heldout_pairs, cfg.H, heldout_rng);
  const int geo = cfg.max_geo_horizon > 0 ? cfg.max_geo_horizon
                                          : default_geo_horizon(gamma);
  const bool shared = cfg.sampling_mode == SamplingMode::kShared;

  TrainResult result;
  for (int t = 1; t <= cfg.T; ++t) {
    const ValueGradTable rvals = reward_table(reward, false);
    const RewardFn learned = [&rvals](int s, int a) { return rvals.value(s, a); };
    if (!cfg.warm_start_chains) {
      plain.policy = policy0;
      pen.policy = policy0;
    }

    for (int k = 0; k < cfg.K; ++k) {
      const StepSizes steps = step_sizes(t, k, cfg);

      // Plain chain: ascend J under the current learned reward.
      const PolicyTable plain_pt = policy_table(plain.policy);
      plain.buffer.tuples =
          collect_transitions(mdp, plain_pt, learned, cfg.n, cfg.H, plain_rng);
      plain.critic = fit_q(gamma, plain.buffer, plain_pt, plain.critic,
                           cfg.critic_cfg, plain_critic_rng);
      const std::vector<Step> plain_samples =
          draw_visitation(mdp, plain_pt, cfg.n, plain_rng, geo);
      const ParamVec d_k =
          policy_grad_from_samples(score_table(plain.policy),
                                   critic_table(plain.critic, false),
                                   plain_samples, gamma);

      // Penalized chain: ascend sigma J + G.
      const PolicyTable pen_pt = policy_table(pen.policy);
      const PolicyTable& pen_sampler = shared ? plain_pt : pen_pt;
      Rng& pen_sample_rng = shared ? plain_rng : pen_rng;
      if (shared) {
        pen.buffer.tuples = plain.buffer.tuples;
      } else {
        pen.buffer.tuples =
            collect_transitions(mdp, pen_pt, learned, cfg.n, cfg.H, pen_rng);
      }
      pen.critic = fit_q(gamma, pen.buffer, pen_pt, pen.critic, cfg.critic_cfg,
                         pen_critic_rng);
      const std::vector<Step> pen_samples =
          shared ? plain_samples
                 : draw_visitation(mdp, pen_pt, cfg.n, pen_rng, geo);
      const ScoreTable pen_scores = score_table(pen.policy);
      ParamVec d_pen = policy_grad_from_samples(
          pen_scores, critic_table(pen.critic, false), pen_samples, gamma);
      d_pen *= cfg.sigma;
      const PrefBatch batch = sample_pref_batch(mdp, pen_sampler, cfg.B, cfg.H,
                                                pen_sample_rng, label_rng);
      d_pen += pref_grad_lambda(rvals, pen_scores, batch);

      plain.policy.params = normalized_update(plain.policy.params, d_k, steps.tau,
                                              Direction::kAscent, cfg.norm_eps);
      pen.policy.params = normalized_update(pen.policy.params, d_pen,
                                            steps.tau_prime, Direction::kAscent,
                                            cfg.norm_eps);
    }

    const HyperGradParts hyper = hyper_grad_estimate(
        reward, plain.policy, pen.policy, mdp, cfg, upper_rng, label_rng);
    if (!hyper.total.all_finite()) {
      throw NumericError("non-finite hyper-gradient at t = " + std::to_string(t));
    }

    RunRecord rec;
    rec.t = t;
    rec.upper_value_est = hyper.pref_value;
    rec.upper_value_exact =
        cfg.oracle_enabled
            ? exact_pref_objective(mdp, plain.policy, reward, cfg.H).value
            : std::numeric_limits<double>::quiet_NaN();
    rec.j_true_exact =
        exact_policy_eval(mdp, policy_table(plain.policy), true_reward_fn(mdp)).j_value;
    rec.pref_accuracy = pref_accuracy(mdp, reward, heldout);
    rec.grad_norm_dt = hyper.total.norm();
    rec.bellman_residual = bellman_residual(gamma, plain.buffer,
                                            policy_table(plain.policy), plain.critic);
    result.records.push_back(rec);
    if (on_record) on_record(rec);

    const StepSizes steps = step_sizes(t, 0, cfg);
    IterationTrace tr;
    if (cfg.keep_trace) tr.phi_before = reward.params;
    reward.params = normalized_update(reward.params, hyper.total, steps.eta,
                                      Direction::kAscent, cfg.norm_eps);
    if (cfg.keep_trace) {
      tr.hyper = hyper;
      tr.phi_after = reward.params;
      result.trace.push_back(std::move(tr));
    }
  }
  result.reward = std::move(reward);
  result.policy = std::move(plain.policy);
  result.penalized_policy = std::move(pen.policy);
  return result;
}

}  // namespace rlhf
