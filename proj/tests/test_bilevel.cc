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


#include <cmath>

#include "doctest.h"
#include "rlhf/bilevel.h"
#include "rlhf/errors.h"
#include "rlhf/oracle.h"
#include "rlhf/rng.h"
#include "rlhf/verify.h"

using namespace rlhf;

namespace {

const Architecture kTab = Architecture::tabular();

PolicyModel fan_in_policy(int ns, int na, Rng& rng) {
  return make_policy(ns, na, kTab,
                     init_params(policy_spec(ns, na, kTab), InitScheme::kFanIn, rng));
}

RewardModel normal_reward(int ns, int na, Rng& rng) {
  return make_reward(ns, na, kTab,
                     init_params(reward_spec(ns, na, kTab), InitScheme::kStandardNormal, rng));
}

CriticModel constant_critic(int ns, int na, double c) {
  ParamVec p(critic_spec(ns, na, kTab).param_count());
  p[p.size() - 1] = c;
  return make_critic(ns, na, kTab, p);
}

CriticModel exact_critic(const TabularMdp& mdp, const PolicyModel& policy,
                         const RewardFn& rf) {
  const ExactPolicyEval ev = exact_policy_eval(mdp, policy_table(policy), rf);
  ParamVec p(critic_spec(mdp.n_states(), mdp.n_actions(), kTab).param_count());
  for (std::size_t i = 0; i < ev.q_table.size(); ++i) p[i] = ev.q_table[i];
  return make_critic(mdp.n_states(), mdp.n_actions(), kTab, p);
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.T = 3;
  cfg.K = 2;
  cfg.B = 8;
  cfg.n = 32;
  cfg.H = 3;
  cfg.critic_cfg.J_outer = 2;
  cfg.critic_cfg.L_inner = 20;
  cfg.heldout_pairs = 50;
  cfg.policy_arch = Architecture::mlp(4);
  cfg.reward_arch = Architecture::mlp(4);
  cfg.critic_arch = Architecture::mlp(4);
  return cfg;
}

}  // namespace

TEST_CASE("step sizes") {
  TrainConfig cfg;
  CHECK(step_sizes(1, 0, cfg).eta == 3.5);
  CHECK(step_sizes(1, 0, cfg).tau == 3.5);
  CHECK(step_sizes(1, 6, cfg).tau == 0.5);
  CHECK(step_sizes(1, 6, cfg).tau_prime == 0.5);
  CHECK(step_sizes(4, 13, cfg).tau == 0.25);
  CHECK(step_sizes(4, 13, cfg).eta == 0.875);
  cfg.mu1 = 49.0 / 4.0;
  CHECK(step_sizes(1, 0, cfg).eta == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(step_sizes(0, 0, cfg), UsageError);
}

TEST_CASE("policy-gradient estimator") {
  const TabularMdp mdp = gradient_fixture_mdp();
  Rng rng(1);
  const PolicyModel policy = fan_in_policy(3, 2, rng);
  SUBCASE("zero critic gives zero") {
    CHECK(policy_grad_estimate(policy, constant_critic(3, 2, 0.0), mdp, 64, rng).norm() == 0.0);
  }
  SUBCASE("constant critic gives a zero-mean estimator") {
    std::vector<ParamVec> samples;
    for (int i = 0; i < 2000; ++i) {
      samples.push_back(policy_grad_estimate(policy, constant_critic(3, 2, 2.5), mdp, 16, rng));
    }
    CHECK(compare_mc_mean(samples, ParamVec(policy.params.size()), 3.0).outside == 0);
  }
  SUBCASE("exact-Q critic matches the exact gradient within 3 SE") {
    CHECK(policy_grad_mc(50000, 0).outside == 0);
  }
}

TEST_CASE("penalized policy-gradient estimator") {
  const TabularMdp one(1, 2, {1.0, 1.0}, {0.8, 0.3}, 0.9, {1.0});
  Rng init(2);
  const PolicyModel policy = fan_in_policy(1, 2, init);
  const RewardModel reward = normal_reward(1, 2, init);
  SUBCASE("sigma 0 leaves the preference term alone") {
    const CriticModel critic = constant_critic(1, 2, 3.0);
    Rng a(5), la(6), b(5), lb(6);
    const ParamVec d =
        penalized_policy_grad_estimate(policy, critic, reward, one, 40, 12, 1, 0.0, a, la);
    policy_grad_estimate(policy, critic, one, 40, b);
    const PrefBatch batch = sample_pref_batch(one, policy_table(policy), 12, 1, b, lb);
    CHECK(d == pref_grad_lambda(reward, policy, batch));
  }
  SUBCASE("zero critic and saturated policy give a vanishing direction") {
    const PolicyModel saturated = make_policy(1, 2, kTab, {0.0, 0.0, 30.0, -30.0});
    Rng a(7);
    CHECK(penalized_policy_grad_estimate(saturated, constant_critic(1, 2, 0.0), reward,
                                         one, 64, 16, 1, 0.5, a, a)
              .norm() <= 1e-8);
  }
  SUBCASE("mean matches finite differences of sigma J + G+") {
    // A short effective horizon keeps the critic term's variance small
    // enough for a 1e-3 comparison at this sample size.
    const TabularMdp one(1, 2, {1.0, 1.0}, {0.8, 0.3}, 0.5, {1.0});
    const double sigma = 0.5;
    const RewardFn rf = reward_fn_of(reward);
    const CriticModel critic = exact_critic(one, policy, rf);
    auto composite = [&](const ParamVec& x) {
      PolicyModel p = policy;
      p.params = x;
      return sigma * exact_policy_eval(one, policy_table(p), rf).j_value +
             exact_pref_objective(one, p, reward, 1).value;
    };
    const ParamVec fd = finite_diff_grad(composite, policy.params, 1e-5);
    Rng a(8), la(9);
    std::vector<ParamVec> reps;
    ParamVec mean(policy.params.size());
    for (int i = 0; i < 100; ++i) {
      reps.push_back(penalized_policy_grad_estimate(policy, critic, reward, one, 20000,
                                                    20000, 1, sigma, a, la));
      mean += reps.back();
    }
    mean *= 1.0 / reps.size();
    CHECK((mean - fd).norm() <= 1e-3);
    CHECK(compare_mc_mean(reps, fd, 3.0).outside == 0);
  }
}

TEST_CASE("truncated reward-gradient estimator") {
  Rng rng(3);
  const TabularMdp mdp = gradient_fixture_mdp();
  const RewardModel reward = make_reward(
      3, 2, Architecture::mlp(4),
      init_params(reward_spec(3, 2, Architecture::mlp(4)), InitScheme::kFanIn, rng));
  const PolicyTable pt = PolicyTable::uniform(3, 2);
  std::vector<Trajectory> trajs;
  for (int i = 0; i < 20; ++i) trajs.push_back(sample_trajectory(mdp, pt, 4, rng));
  SUBCASE("H = 1 averages single-step gradients") {
    std::vector<Trajectory> first;
    ParamVec want(reward.params.size());
    for (const Trajectory& t : trajs) {
      first.push_back(Trajectory{{t.steps.front()}});
      want += reward_eval_grad(reward, t.steps[0].state, t.steps[0].action).grad;
    }
    want *= 1.0 / trajs.size();
    CHECK(relative_error(grad_phi_J_estimate(reward, first, 0.9), want) <= 1e-14);
    SUBCASE("gamma near 0 collapses to H = 1") {
      CHECK((grad_phi_J_estimate(reward, trajs, 1e-12) - want).norm() <= 1e-9);
    }
  }
  SUBCASE("mean matches the exact gradient within 3 SE plus the bias bound") {
    CHECK(reward_grad_mc(10000, 3, 0, true).outside == 0);
    CHECK(reward_grad_mc(10000, 10, 0, true).outside == 0);
    CHECK(reward_grad_mc(10000, 10, 1, false).outside == 0);
  }
  CHECK_THROWS_AS(grad_phi_J_estimate(reward, {}, 0.9), UsageError);
}

TEST_CASE("hyper-gradient estimator") {
  const HyperFixture fx = hyper_fixture();
  Rng rng(4);
  const PolicyModel p = fan_in_policy(2, 2, rng);
  TrainConfig cfg;
  cfg.H = 2;
  cfg.B = 64;
  cfg.sigma = 0.5;
  SUBCASE("identical policies with shared samples cancel the J difference") {
    cfg.coupled_j_samples = true;
    for (HyperVariant v : {HyperVariant::kPaperLiteral, HyperVariant::kPenaltyConsistent}) {
      cfg.hyper_variant = v;
      Rng a(1), la(2);
      const HyperGradParts parts = hyper_grad_estimate(fx.reward, p, p, fx.mdp, cfg, a, la);
      CHECK(parts.penalty_term.norm() == 0.0);
      CHECK(parts.total == parts.pref_term);
    }
  }
  SUBCASE("huge sigma suppresses the penalty term") {
    cfg.sigma = 1e9;
    const PolicyModel q = fan_in_policy(2, 2, rng);
    Rng a(1), la(2);
    const HyperGradParts parts = hyper_grad_estimate(fx.reward, p, q, fx.mdp, cfg, a, la);
    CHECK((parts.total - parts.pref_term).norm() <= 1e-6);
  }
  SUBCASE("swapping the chains maps one variant onto the other") {
    const PolicyModel q = fan_in_policy(2, 2, rng);
    cfg.coupled_j_samples = true;
    cfg.hyper_variant = HyperVariant::kPaperLiteral;
    Rng a(1), la(2);
    const HyperGradParts lit = hyper_grad_estimate(fx.reward, p, q, fx.mdp, cfg, a, la);
    cfg.hyper_variant = HyperVariant::kPenaltyConsistent;
    Rng b(1), lb(2);
    const HyperGradParts con = hyper_grad_estimate(fx.reward, q, p, fx.mdp, cfg, b, lb);
    CHECK(lit.pref_term == con.pref_term);
    CHECK(lit.penalty_term == con.penalty_term);
  }
  SUBCASE("certified against nested finite differences") {
    const HyperCheck h = hyper_mc_check(200000, 60, 0, false);
    CHECK(h.cosine >= 0.99);
    CHECK(h.relative_error <= 0.05);
  }
  SUBCASE("non-positive sigma") {
    cfg.sigma = 0.0;
    Rng a(1);
    CHECK_THROWS_AS(hyper_grad_estimate(fx.reward, p, p, fx.mdp, cfg, a, a), ConfigError);
  }
}

TEST_CASE("normalized update") {
  const ParamVec x{1.0, 1.0};
  CHECK(normalized_update(x, {2.0, 0.0}, 0.5, Direction::kAscent, 1e-12) == ParamVec{1.5, 1.0});
  CHECK(normalized_update(x, {2.0, 0.0}, 0.5, Direction::kDescent, 1e-12) == ParamVec{0.5, 1.0});
  CHECK(normalized_update(x, {0.0, 0.0}, 0.5, Direction::kAscent, 1e-12) == x);
  const ParamVec y = normalized_update(
      normalized_update(x, {3.0, 0.0}, 0.2, Direction::kAscent, 1e-12), {0.0, -7.0}, 0.2,
      Direction::kAscent, 1e-12);
  CHECK(std::abs((y - x).norm() - 0.2 * std::sqrt(2.0)) <= 1e-15);
  CHECK_THROWS_AS(normalized_update(x, {NAN, 0.0}, 0.5, Direction::kAscent, 1e-12),
                  NumericError);
}

TEST_CASE("held-out accuracy") {
  const TabularMdp mdp = make_random_tabular(0, 5, 2, 0.9);
  Rng rng(5);
  const HeldOutSet held = make_heldout(mdp, 300, 5, rng);
  ParamVec w(reward_spec(5, 2, kTab).param_count());
  for (int k = 0; k < 10; ++k) {
    const double r = mdp.true_reward_data()[k];
    w[k] = std::log(r / (1.0 - r));
  }
  CHECK(pref_accuracy(mdp, make_reward(5, 2, kTab, w), held) == 1.0);
  CHECK(pref_accuracy(mdp, make_reward(5, 2, kTab, -1.0 * w), held) == 0.0);
}

TEST_CASE("training loop") {
  const TabularMdp mdp = make_random_tabular(0, 4, 2, 0.9);
  SUBCASE("T = 1, K = 1 emits one record") {
    TrainConfig cfg = tiny_config();
    cfg.T = 1;
    cfg.K = 1;
    const TrainResult res = train(mdp, cfg);
    REQUIRE(res.records.size() == 1);
    CHECK(res.records[0].t == 1);
    CHECK(std::isnan(res.records[0].upper_value_exact));
  }
  SUBCASE("same seed, same records") {
    TrainConfig cfg = tiny_config();
    cfg.oracle_enabled = true;
    for (SamplingMode m : {SamplingMode::kPerChain, SamplingMode::kShared}) {
      cfg.sampling_mode = m;
      const TrainResult a = train(mdp, cfg), b = train(mdp, cfg);
      REQUIRE(a.records.size() == b.records.size());
      for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].upper_value_est == b.records[i].upper_value_est);
        CHECK(a.records[i].upper_value_exact == b.records[i].upper_value_exact);
        CHECK(a.records[i].j_true_exact == b.records[i].j_true_exact);
      }
      CHECK(a.reward.params == b.reward.params);
    }
  }
  SUBCASE("huge sigma follows the preference-likelihood direction") {
    TrainConfig cfg = tiny_config();
    cfg.sigma = 1e9;
    cfg.keep_trace = true;
    const TrainResult res = train(mdp, cfg);
    for (std::size_t t = 0; t < res.trace.size(); ++t) {
      const IterationTrace& it = res.trace[t];
      const ParamVec step = it.phi_after - it.phi_before;
      const ParamVec& pref = it.hyper.pref_term;
      CHECK((step * (1.0 / step.norm()) - pref * (1.0 / pref.norm())).norm() <= 1e-6);
    }
  }
  SUBCASE("warm-started chains and the literal variant run") {
    TrainConfig cfg = tiny_config();
    cfg.warm_start_chains = true;
    cfg.hyper_variant = HyperVariant::kPaperLiteral;
    CHECK(train(mdp, cfg).records.size() == 3);
  }
  SUBCASE("invalid config names the key") {
    TrainConfig cfg = tiny_config();
    cfg.B = 0;
    try {
      train(mdp, cfg);
      FAIL("expected a config error");
    } catch (const ConfigError& e) {
      CHECK(e.key() == "B");
    }
  }
}
