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
#include "rlhf/errors.h"
#include "rlhf/oracle.h"
#include "rlhf/preference.h"
#include "rlhf/rng.h"
#include "rlhf/verify.h"

using namespace rlhf;

namespace {

Trajectory path(std::initializer_list<Step> steps) { return {steps}; }

const double kSigmoidOne = std::exp(1.0) / (1.0 + std::exp(1.0));

}  // namespace

TEST_CASE("Bradley-Terry probability") {
  const RewardFn rf = [](int s, int a) { return 0.5 * s + 0.25 * a; };
  const Trajectory a = path({{0, 0}, {2, 1}});
  const Trajectory b = path({{1, 0}, {0, 1}});
  CHECK(bt_prob(rf, a, a) == 0.5);
  const Trajectory hi = path({{2, 0}, {2, 0}});  // return 2
  const Trajectory lo = path({{1, 0}, {0, 0}});  // return 0.5
  const Trajectory lo2 = path({{0, 0}, {2, 0}}); // return 1
  CHECK(std::abs(bt_prob(rf, hi, lo2) - kSigmoidOne) <= 1e-15);
  CHECK(bt_prob(rf, hi, lo) > bt_prob(rf, hi, lo2));
  CHECK(std::abs(bt_prob(rf, a, b) + bt_prob(rf, b, a) - 1.0) <= 1e-12);
  CHECK(preference_complement_error(1000, 4) <= 1e-12);
  CHECK_THROWS_AS(bt_prob([](int, int) { return NAN; }, a, b), ModelError);
}

TEST_CASE("oracle labels") {
  Rng rng(1);
  const int n = 10000;
  SUBCASE("saturated true preference") {
    // Returns 30 apart under the true reward of a long single-state MDP.
    const TabularMdp one(1, 2, {1.0, 1.0}, {1.0, 0.0}, 0.9, {1.0});
    Trajectory good, bad;
    for (int h = 0; h < 30; ++h) {
      good.steps.push_back({0, 0});
      bad.steps.push_back({0, 1});
    }
    int ones = 0;
    for (int i = 0; i < n; ++i) ones += oracle_label(one, good, bad, rng);
    CHECK(ones >= 0.999 * n);
  }
  SUBCASE("identical trajectories are a fair coin") {
    const TabularMdp mdp = make_random_tabular(2, 3, 2, 0.9);
    const Trajectory t = path({{0, 1}, {2, 0}});
    int ones = 0;
    for (int i = 0; i < n; ++i) ones += oracle_label(mdp, t, t, rng);
    CHECK(ones >= 0.48 * n);
    CHECK(ones <= 0.52 * n);
  }
  SUBCASE("chain: reaching the goal versus idling") {
    const TabularMdp chain = make_chain(3, 0.9, 0.0);
    const Trajectory go = path({{0, kRight}, {1, kRight}, {2, kRight}});
    const Trajectory idle = path({{0, kLeft}, {0, kLeft}, {0, kLeft}});
    const double p = bt_prob(true_reward_fn(chain), go, idle);
    CHECK(std::abs(p - kSigmoidOne) <= 1e-15);
    int ones = 0;
    for (int i = 0; i < n; ++i) ones += oracle_label(chain, go, idle, rng);
    CHECK(std::abs(static_cast<double>(ones) / n - p) <= 3.0 * std::sqrt(p * (1 - p) / n));
  }
}

TEST_CASE("preference likelihood and its phi gradient") {
  const Architecture tab = Architecture::tabular();
  Rng rng(2);
  SUBCASE("identical pairs give value 0.5 and zero gradient") {
    const RewardModel r = make_reward(
        3, 2, tab, init_params(reward_spec(3, 2, tab), InitScheme::kStandardNormal, rng));
    PrefBatch batch;
    for (int y : {0, 1, 1}) {
      const Trajectory t = path({{y, 1}, {2, 0}});
      batch.pairs.push_back({t, t, y});
    }
    const ValueGrad vg = pref_objective_and_grad_phi(r, batch);
    CHECK(vg.value == 0.5);
    CHECK(vg.grad.norm() == 0.0);
  }
  SUBCASE("single pair with return difference 1") {
    // Tabular reward r(s, a) = sigmoid(w_sa + b); pick logits so r(0,0) = 0.75,
    // r(1,0) = 0.25 and each trajectory visits its pair twice.
    ParamVec p(reward_spec(2, 1, tab).param_count());
    p[0] = std::log(3.0);
    p[1] = -std::log(3.0);
    const RewardModel r = make_reward(2, 1, tab, p);
    PrefBatch batch;
    batch.pairs.push_back({path({{0, 0}, {0, 0}}), path({{1, 0}, {1, 0}}), 1});
    CHECK(std::abs(pref_objective_and_grad_phi(r, batch).value - kSigmoidOne) <= 1e-12);
  }
  SUBCASE("gradient matches finite differences on random batches") {
    CHECK(pref_grad_phi_fd_error(3) <= 1e-6);
    CHECK(pref_grad_phi_fd_error(4) <= 1e-6);
  }
  SUBCASE("model and table overloads agree") {
    const TabularMdp mdp = make_random_tabular(5, 4, 2, 0.9);
    const RewardModel r = make_reward(
        4, 2, Architecture::mlp(6),
        init_params(reward_spec(4, 2, Architecture::mlp(6)), InitScheme::kFanIn, rng));
    const PrefBatch batch =
        sample_pref_batch(mdp, PolicyTable::uniform(4, 2), 16, 4, rng, rng);
    const ValueGrad a = pref_objective_and_grad_phi(r, batch);
    const ValueGrad b = pref_objective_and_grad_phi(reward_table(r, true), batch);
    CHECK(std::abs(a.value - b.value) <= 1e-15);
    CHECK(relative_error(a.grad, b.grad) <= 1e-13);
  }
  CHECK_THROWS_AS(pref_objective_and_grad_phi(
                      make_reward(1, 2, tab, ParamVec(reward_spec(1, 2, tab).param_count())),
                      PrefBatch{}),
                  UsageError);
}

TEST_CASE("preference gradient in lambda") {
  const Architecture tab = Architecture::tabular();
  const TabularMdp one(1, 2, {1.0, 1.0}, {0.7, 0.2}, 0.9, {1.0});
  Rng rng(5);
  SUBCASE("constant U gives a zero-mean estimator") {
    const RewardModel r =
        make_reward(1, 2, tab, ParamVec(reward_spec(1, 2, tab).param_count()));
    const PolicyModel pol =
        make_policy(1, 2, tab, ParamVec(policy_spec(1, 2, tab).param_count()));
    const PolicyTable pt = policy_table(pol);
    std::vector<ParamVec> samples;
    for (int i = 0; i < 10000; ++i) {
      samples.push_back(pref_grad_lambda(r, pol, sample_pref_batch(one, pt, 4, 3, rng, rng)));
    }
    CHECK(compare_mc_mean(samples, ParamVec(pol.params.size()), 3.0).outside == 0);
  }
  SUBCASE("H = 1: enumerated G+ gradient matches finite differences") {
    CHECK(exact_pref_grad_lambda_fd_error(0) <= 1e-4);
    CHECK(exact_pref_grad_lambda_fd_error(1) <= 1e-4);
  }
  SUBCASE("estimator mean matches the enumerated gradient") {
    CHECK(pref_grad_lambda_mc(100000, 2).outside == 0);
  }
  SUBCASE("saturated policy gives a vanishing gradient") {
    const PolicyModel pol = make_policy(1, 2, tab, {0.0, 0.0, 30.0, -30.0});
    const RewardModel r = make_reward(
        1, 2, tab, init_params(reward_spec(1, 2, tab), InitScheme::kStandardNormal, rng));
    const PrefBatch batch = sample_pref_batch(one, policy_table(pol), 32, 3, rng, rng);
    CHECK(pref_grad_lambda(r, pol, batch).norm() <= 1e-8);
  }
}
