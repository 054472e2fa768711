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
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "rlhf/errors.h"
#include "rlhf/oracle.h"
#include "rlhf/preference.h"
#include "rlhf/rng.h"
#include "rlhf/textio.h"
#include "rlhf/verify.h"

using namespace rlhf;

namespace {

const Architecture kTab = Architecture::tabular();

PolicyModel fan_in_policy(int ns, int na, Rng& rng) {
  return make_policy(ns, na, kTab,
                     init_params(policy_spec(ns, na, kTab), InitScheme::kFanIn, rng));
}

RewardModel normal_reward(int ns, int na, const Architecture& arch, Rng& rng) {
  return make_reward(ns, na, arch,
                     init_params(reward_spec(ns, na, arch),
                                 InitScheme::kStandardNormal, rng));
}

}  // namespace

TEST_CASE("exact policy evaluation") {
  SUBCASE("single state, single action, r = 1") {
    const TabularMdp one(1, 1, {1.0}, {1.0}, 0.9, {1.0});
    const ExactPolicyEval ev =
        exact_policy_eval(one, PolicyTable::uniform(1, 1), true_reward_fn(one));
    CHECK(std::abs(ev.q(0, 0) - 10.0) <= 1e-12);
    CHECK(std::abs(ev.j_value - 10.0) <= 1e-12);
    CHECK(std::abs(ev.d(0, 0) - 1.0) <= 1e-12);
  }
  SUBCASE("zero reward") {
    const TabularMdp mdp = make_random_tabular(4, 3, 2, 0.9);
    const ExactPolicyEval ev = exact_policy_eval(
        mdp, PolicyTable::uniform(3, 2), [](int, int) { return 0.0; });
    for (double q : ev.q_table) CHECK(q == 0.0);
    CHECK(ev.j_value == 0.0);
  }
  SUBCASE("Bellman residual and normalized visitation") {
    Rng rng(1);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const TabularMdp mdp = make_random_tabular(seed, 3, 2, 0.95);
      const PolicyTable pt = policy_table(fan_in_policy(3, 2, rng));
      const RewardFn rf = true_reward_fn(mdp);
      const ExactPolicyEval ev = exact_policy_eval(mdp, pt, rf);
      CHECK(bellman_residual_max(mdp, pt, rf, ev.q_table) <= 1e-10);
      double mass = 0.0;
      for (double d : ev.visitation) mass += d;
      CHECK(std::abs(mass - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("exact policy gradient") {
  Rng rng(2);
  const TabularMdp mdp = gradient_fixture_mdp();
  CHECK(policy_grad_fd_error(0, kTab) <= 1e-6);
  CHECK(policy_grad_fd_error(1, Architecture::mlp(8)) <= 1e-6);
  const PolicyModel p = fan_in_policy(3, 2, rng);
  CHECK(exact_grad_lambda_J(mdp, p, [](int, int) { return 0.0; }).norm() == 0.0);
  ParamVec saturated(policy_spec(3, 2, kTab).param_count());
  saturated[saturated.size() - 2] = 30.0;
  saturated[saturated.size() - 1] = -30.0;
  CHECK(exact_grad_lambda_J(mdp, make_policy(3, 2, kTab, saturated),
                            true_reward_fn(mdp))
            .norm() <= 1e-8);
}

TEST_CASE("exact reward gradient") {
  CHECK(reward_grad_fd_error(0, kTab) <= 1e-6);
  CHECK(reward_grad_fd_error(1, Architecture::mlp(8)) <= 1e-6);
  SUBCASE("single state, single action") {
    Rng rng(3);
    const TabularMdp one(1, 1, {1.0}, {0.5}, 0.8, {1.0});
    const RewardModel r = normal_reward(1, 1, Architecture::mlp(4), rng);
    const ParamVec want = 5.0 * reward_eval_grad(r, 0, 0).grad;
    CHECK(relative_error(exact_grad_phi_J(one, PolicyTable::uniform(1, 1), r), want) <= 1e-12);
  }
  SUBCASE("truncated expectation converges and respects the bias bound") {
    for (int h : {3, 10}) {
      const BiasCheck b = truncation_bias(h, 0);
      CHECK(b.bias_norm <= b.bound);
    }
    Rng rng(4);
    const TabularMdp mdp = gradient_fixture_mdp();
    const PolicyTable pt = policy_table(fan_in_policy(3, 2, rng));
    const RewardModel r = normal_reward(3, 2, kTab, rng);
    CHECK(relative_error(exact_truncated_grad_phi_J(mdp, pt, r, 400),
                         exact_grad_phi_J(mdp, pt, r)) <= 1e-12);
  }
}

TEST_CASE("enumerated preference objective") {
  Rng rng(5);
  SUBCASE("zero reward parameters give value 0.5") {
    const TabularMdp mdp = make_random_tabular(1, 3, 2, 0.9);
    const RewardModel r =
        make_reward(3, 2, kTab, ParamVec(reward_spec(3, 2, kTab).param_count()));
    CHECK(exact_pref_objective(mdp, fan_in_policy(3, 2, rng), r, 2).value == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("H = 1 single state matches the hand-expanded sum") {
    const TabularMdp mdp = preference_fixture_mdp();
    const PolicyModel p = fan_in_policy(1, 2, rng);
    const RewardModel r = normal_reward(1, 2, kTab, rng);
    const auto pi = policy_dist(p, 0);
    const double rl[2] = {reward_value(r, 0, 0), reward_value(r, 0, 1)};
    const double rt[2] = {mdp.true_reward(0, 0), mdp.true_reward(0, 1)};
    double want = 0.0;
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const double ps = sigmoid(rt[a] - rt[b]);
        const double pl = sigmoid(rl[a] - rl[b]);
        want += pi[a] * pi[b] * (ps * pl + (1.0 - ps) * (1.0 - pl));
      }
    }
    const ExactPref ep = exact_pref_objective(mdp, p, r, 1);
    CHECK(std::abs(ep.value - want) <= 1e-14);
    CHECK(ep.n_trajectories == 2);
  }
  SUBCASE("gradients match finite differences") {
    const TabularMdp mdp = gradient_fixture_mdp();
    const PolicyModel p = fan_in_policy(3, 2, rng);
    const RewardModel r = normal_reward(3, 2, Architecture::mlp(4), rng);
    const ExactPref ep = exact_pref_objective(mdp, p, r, 2);
    CHECK(std::abs(ep.total_probability - 1.0) <= 1e-9);
    auto by_phi = [&](const ParamVec& x) {
      RewardModel q = r;
      q.params = x;
      return exact_pref_objective(mdp, p, q, 2).value;
    };
    auto by_lambda = [&](const ParamVec& x) {
      PolicyModel q = p;
      q.params = x;
      return exact_pref_objective(mdp, q, r, 2).value;
    };
    CHECK(relative_error(ep.grad_phi, finite_diff_grad(by_phi, r.params, 1e-5)) <= 1e-6);
    CHECK(relative_error(ep.grad_lambda, finite_diff_grad(by_lambda, p.params, 1e-5)) <= 1e-6);
  }
  SUBCASE("enumeration cap") {
    const TabularMdp mdp = make_random_tabular(0, 5, 2, 0.9);
    const RewardModel r = normal_reward(5, 2, kTab, rng);
    CHECK_THROWS_AS(exact_pref_objective(mdp, fan_in_policy(5, 2, rng), r, 7), CapacityError);
  }
}

TEST_CASE("value iteration") {
  const TabularMdp mdp = make_random_tabular(6, 4, 3, 0.9);
  const RewardFn rf = true_reward_fn(mdp);
  const OptimalValue vi = value_iteration(mdp, rf);
  const ExactPolicyEval greedy = exact_policy_eval(mdp, greedy_table(mdp, vi.greedy), rf);
  CHECK(std::abs(greedy.j_value - vi.j_star) <= 1e-9);
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    const PolicyTable pt = policy_table(
        make_policy(4, 3, kTab, init_params(policy_spec(4, 3, kTab), InitScheme::kStandardNormal, rng)));
    CHECK(exact_policy_eval(mdp, pt, rf).j_value <= vi.j_star + 1e-12);
  }
}

TEST_CASE("exact inner solve") {
  const TabularMdp chain = make_chain(4, 0.9, 0.1);
  Rng rng(8);
  // A reward table close to the hidden one, through the sigmoid link.
  ParamVec w(reward_spec(4, 2, kTab).param_count());
  for (int k = 0; k < 8; ++k) w[k] = k == 7 ? 4.0 : -4.0;
  const RewardModel r = make_reward(4, 2, kTab, w);
  const PolicyModel init =
      make_policy(4, 2, kTab, ParamVec(policy_spec(4, 2, kTab).param_count()));
  SUBCASE("sigma 0 on the chain prefers right everywhere") {
    const InnerSolveResult res = exact_inner_solve(chain, r, init, 0.0, 3, {1e-8, 100000});
    CHECK(res.grad_norm <= 1e-8);
    const PolicyTable pt = policy_table(res.policy);
    for (int s = 0; s < 4; ++s) CHECK(pt.prob(s, kRight) > pt.prob(s, kLeft));
  }
  SUBCASE("continuity in sigma at 0") {
    const HyperFixture fx = hyper_fixture();
    const double j0 = exact_inner_solve(fx.mdp, fx.reward, fx.init, 0.0, 2).j_value;
    const double j1 = exact_inner_solve(fx.mdp, fx.reward, fx.init, 1e-12, 2).j_value;
    CHECK(std::abs(j0 - j1) <= 1e-6);
  }
  SUBCASE("iteration cap") {
    CHECK_THROWS_AS(exact_inner_solve(chain, r, init, 0.0, 3, {1e-8, 1}), ConvergenceError);
  }
}

TEST_CASE("finite-difference hyper-gradient") {
  const HyperFixture fx = hyper_fixture();
  SUBCASE("matches the frozen fixture vector") {
    std::ifstream in(RLHF_TEST_DATA_DIR "/hyper_fd_fixture.txt");
    std::string line;
    std::getline(in, line);
    const ParamVec frozen(parse_doubles(line, "hyper_fd_fixture"));
    const ParamVec fd = fd_hyper_grad(fx.mdp, fx.reward, fx.init, fx.sigma,
                                      fx.horizon, fx.tol, 1e-3);
    CHECK((fd - frozen).norm() <= 1e-9);
  }
  SUBCASE("agrees with the closed-form hyper-gradient") {
    const HyperCheck h = hyper_exact_check();
    CHECK(h.cosine >= 0.99);
    CHECK(h.relative_error <= 1e-5);
  }
  SUBCASE("large sigma recovers the G+ gradient at the penalized optimum") {
    const double sigma = 1e6;
    const PenaltySolution sol =
        solve_penalty(fx.mdp, fx.reward, fx.init, sigma, fx.horizon, {1e-8, 100000});
    const ParamVec fd =
        fd_hyper_grad(fx.mdp, fx.reward, fx.init, sigma, fx.horizon, 1e-8, 1e-3);
    const ParamVec g =
        exact_pref_objective(fx.mdp, sol.penalized.policy, fx.reward, fx.horizon).grad_phi;
    CHECK((fd - g).norm() <= 1e-3);
  }
  SUBCASE("Richardson order check") {
    const double ratio = richardson_ratio(
        [&](double h) {
          return fd_hyper_grad(fx.mdp, fx.reward, fx.init, fx.sigma, fx.horizon, fx.tol, h);
        },
        0.1);
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.5);
  }
}

TEST_CASE("assumption probes") {
  Rng rng(9);
  const TabularMdp chain = make_chain(5, 0.9, 0.1);
  const RewardModel r = normal_reward(5, 2, kTab, rng);
  SUBCASE("uniform tabular policy: PSD Fisher and exact advantage fit") {
    const PolicyModel uniform =
        make_policy(5, 2, kTab, ParamVec(policy_spec(5, 2, kTab).param_count()));
    const ProbeStats st = probe_policy(chain, uniform, true_reward_fn(chain));
    CHECK(st.fisher_min_eig >= -1e-12);
    CHECK(st.eps_bias <= 1e-10);
  }
  SUBCASE("report lists every field") {
    const ProbeReport rep = assumption_probes(chain, fan_in_policy(5, 2, rng), r, 100, 0);
    CHECK(rep.domination_samples == 100);
    std::ostringstream out;
    write_probe_report(out, rep);
    for (const char* key : {"fisher_min_eig", "max_score_norm", "eps_bias", "mu3",
                            "eps_prime", "domination_samples", "domination_violations",
                            "domination_worst_margin", "j_star"}) {
      CHECK(out.str().find(std::string(key) + ": ") != std::string::npos);
    }
  }
}
