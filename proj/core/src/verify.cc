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


#include "rlhf/verify.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "rlhf/bilevel.h"
#include "rlhf/critic_fit.h"
#include "rlhf/errors.h"
#include "rlhf/oracle.h"
#include "rlhf/preference.h"
#include "rlhf/rng.h"

namespace rlhf {

namespace {

constexpr double kFdStep = 1e-5;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::vector<double> normal_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

PolicyModel random_policy(int ns, int na, const Architecture& arch, Rng& rng) {
  return make_policy(ns, na, arch,
                     init_params(policy_spec(ns, na, arch), InitScheme::kFanIn,
                                 rng));
}

RewardModel random_reward(int ns, int na, const Architecture& arch, Rng& rng,
                          InitScheme scheme = InitScheme::kFanIn) {
  return make_reward(ns, na, arch,
                     init_params(reward_spec(ns, na, arch), scheme, rng));
}

PolicyModel with_params(const PolicyModel& p, const ParamVec& params) {
  PolicyModel out = p;
  out.params = params;
  return out;
}

RewardModel with_params(const RewardModel& r, const ParamVec& params) {
  RewardModel out = r;
  out.params = params;
  return out;
}

double max_grad_norm(const RewardModel& reward) {
  const ValueGradTable t = reward_table(reward, true);
  double m = 0.0;
  for (const ParamVec& g : t.grads) m = std::max(m, g.norm());
  return m;
}

double cosine(const ParamVec& a, const ParamVec& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

// Exact-Q critic in the joint tabular encoding: weights hold Q, bias 0.
CriticModel exact_q_critic(const TabularMdp& mdp, const ExactPolicyEval& ev) {
  const Architecture tab = Architecture::tabular();
  ParamVec params(critic_spec(mdp.n_states(), mdp.n_actions(), tab)
                      .param_count());
  for (std::size_t i = 0; i < ev.q_table.size(); ++i) params[i] = ev.q_table[i];
  return make_critic(mdp.n_states(), mdp.n_actions(), tab, params);
}

ParamVec exact_hyper_grad(const HyperFixture& fx, const PenaltySolution& sol) {
  const ExactPref ep =
      exact_pref_objective(fx.mdp, sol.penalized.policy, fx.reward, fx.horizon);
  const ParamVec j_pen =
      exact_grad_phi_J(fx.mdp, policy_table(sol.penalized.policy), fx.reward);
  const ParamVec j_plain =
      exact_grad_phi_J(fx.mdp, policy_table(sol.plain.policy), fx.reward);
  return ep.grad_phi + (j_pen - j_plain) * (1.0 / fx.sigma);
}

class FaultGuard {
 public:
  explicit FaultGuard(bool on) : on_(on) {
    if (on_) set_backward_sign_fault(true);
  }
  ~FaultGuard() {
    if (on_) set_backward_sign_fault(false);
  }
  FaultGuard(const FaultGuard&) = delete;
  FaultGuard& operator=(const FaultGuard&) = delete;

 private:
  bool on_;
};

}  // namespace

std::string to_string(VerifyLevel level) {
  return level == VerifyLevel::kFast ? "fast" : "full";
}

VerifyLevel parse_verify_level(const std::string& s) {
  if (s == "fast") return VerifyLevel::kFast;
  if (s == "full") return VerifyLevel::kFull;
  throw UsageError("unknown verify level '" + s + "' (expected fast or full)");
}

TabularMdp gradient_fixture_mdp() { return make_random_tabular(3, 3, 2, 0.9); }

TabularMdp preference_fixture_mdp() {
  return TabularMdp(1, 2, {1.0, 1.0}, {0.8, 0.3}, 0.9, {1.0});
}

TabularMdp hyper_fixture_mdp() {
  return TabularMdp(2, 2, {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5},
                    {0.95, 0.9, 0.05, 0.1}, 0.5, {0.5, 0.5});
}

HyperFixture hyper_fixture() {
  HyperFixture fx;
  fx.mdp = hyper_fixture_mdp();
  const Architecture tab = Architecture::tabular();
  Rng rng(1);
  fx.reward = random_reward(2, 2, tab, rng, InitScheme::kStandardNormal);
  fx.init = make_policy(2, 2, tab, ParamVec(policy_spec(2, 2, tab).param_count()));
  return fx;
}

double autodiff_max_error(int n_models, std::uint64_t seed, double h) {
  Rng rng(seed);
  double worst = 0.0;
  for (int m = 0; m < n_models; ++m) {
    MlpSpec spec;
    spec.input_dim = 1 + static_cast<int>(rng.index(16));
    const int hidden = static_cast<int>(rng.index(3));
    for (int l = 0; l < hidden; ++l) {
      spec.hidden_widths.push_back(1 + static_cast<int>(rng.index(16)));
    }
    spec.activation = Activation::kTanh;
    spec.output_transform = static_cast<OutputTransform>(rng.index(3));
    spec.output_dim =
        spec.output_transform == OutputTransform::kLogSoftmax
            ? 2 + static_cast<int>(rng.index(15))
            : 1 + static_cast<int>(rng.index(16));
    const ParamVec params = init_params(spec, InitScheme::kFanIn, rng);
    const Tensor x = Tensor::vector(normal_vector(spec.input_dim, rng));
    const Tensor cot = Tensor::vector(normal_vector(spec.output_dim, rng));
    auto f = [&](const ParamVec& p) {
      const Tensor y = mlp_eval(spec, p, x);
      double acc = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) acc += cot[i] * y[i];
      return acc;
    };
    auto fwd = mlp_forward(spec, params, x);
    const ParamVec g = backward(fwd.tape, cot);
    worst = std::max(worst,
                     relative_error(g, finite_diff_grad(f, params, h)));
  }
  return worst;
}

ScoreCheck score_checks(std::uint64_t seed) {
  Rng rng(seed);
  ScoreCheck out;
  for (const Architecture& arch :
       {Architecture::tabular(), Architecture::mlp(8)}) {
    const PolicyModel policy = random_policy(3, 3, arch, rng);
    for (int s = 0; s < 3; ++s) {
      const std::vector<double> pi = policy_dist(policy, s);
      ParamVec weighted(policy.params.size());
      for (int a = 0; a < 3; ++a) {
        const ParamVec score = policy_score(policy, s, a);
        weighted.axpy(pi[a], score);
        auto logp = [&](const ParamVec& p) {
          return std::log(policy_dist(with_params(policy, p), s)[a]);
        };
        out.max_fd_error = std::max(
            out.max_fd_error,
            relative_error(score,
                           finite_diff_grad(logp, policy.params, kFdStep)));
      }
      out.max_identity_error =
          std::max(out.max_identity_error, weighted.norm());
    }
  }
  return out;
}

double policy_grad_fd_error(std::uint64_t seed, const Architecture& arch) {
  const TabularMdp mdp = gradient_fixture_mdp();
  Rng rng(seed);
  const PolicyModel policy = random_policy(3, 2, arch, rng);
  const RewardFn rf = true_reward_fn(mdp);
  auto j = [&](const ParamVec& p) {
    return exact_policy_eval(mdp, policy_table(with_params(policy, p)), rf)
        .j_value;
  };
  return relative_error(exact_grad_lambda_J(mdp, policy, rf),
                        finite_diff_grad(j, policy.params, kFdStep));
}

double reward_grad_fd_error(std::uint64_t seed, const Architecture& arch) {
  const TabularMdp mdp = gradient_fixture_mdp();
  Rng rng(seed);
  const PolicyTable pt = policy_table(random_policy(3, 2, Architecture::tabular(), rng));
  const RewardModel reward = random_reward(3, 2, arch, rng);
  auto j = [&](const ParamVec& p) {
    return exact_policy_eval(mdp, pt, reward_fn_of(with_params(reward, p)))
        .j_value;
  };
  return relative_error(exact_grad_phi_J(mdp, pt, reward),
                        finite_diff_grad(j, reward.params, kFdStep));
}

BiasCheck truncation_bias(int horizon, std::uint64_t seed) {
  const TabularMdp mdp = gradient_fixture_mdp();
  Rng rng(seed);
  const PolicyTable pt = policy_table(random_policy(3, 2, Architecture::tabular(), rng));
  const RewardModel reward = random_reward(3, 2, Architecture::mlp(8), rng);
  BiasCheck out;
  out.horizon = horizon;
  out.bias_norm = (exact_truncated_grad_phi_J(mdp, pt, reward, horizon) -
                   exact_grad_phi_J(mdp, pt, reward))
                      .norm();
  out.bound = 2.0 * std::pow(mdp.gamma(), horizon) * max_grad_norm(reward) /
              (1.0 - mdp.gamma());
  return out;
}

double preference_complement_error(int n_pairs, std::uint64_t seed) {
  const TabularMdp mdp = make_random_tabular(seed, 5, 2, 0.9);
  Rng rng(seed);
  const RewardFn rf =
      reward_fn_of(random_reward(5, 2, Architecture::mlp(8), rng,
                                 InitScheme::kStandardNormal));
  const PolicyTable uniform = PolicyTable::uniform(5, 2);
  double worst = 0.0;
  for (int i = 0; i < n_pairs; ++i) {
    const Trajectory a = sample_trajectory(mdp, uniform, 5, rng);
    const Trajectory b = sample_trajectory(mdp, uniform, 5, rng);
    worst = std::max(worst,
                     std::abs(bt_prob(rf, a, b) + bt_prob(rf, b, a) - 1.0));
  }
  return worst;
}

double pref_grad_phi_fd_error(std::uint64_t seed) {
  const TabularMdp mdp = make_random_tabular(seed, 5, 2, 0.9);
  Rng rng(seed);
  const RewardModel reward = random_reward(5, 2, Architecture::mlp(8), rng);
  const PrefBatch batch =
      sample_pref_batch(mdp, PolicyTable::uniform(5, 2), 32, 5, rng, rng);
  auto u = [&](const ParamVec& p) {
    return pref_objective_and_grad_phi(with_params(reward, p), batch).value;
  };
  return relative_error(pref_objective_and_grad_phi(reward, batch).grad,
                        finite_diff_grad(u, reward.params, kFdStep));
}

double exact_pref_grad_lambda_fd_error(std::uint64_t seed) {
  const TabularMdp mdp = preference_fixture_mdp();
  Rng rng(seed);
  const PolicyModel policy = random_policy(1, 2, Architecture::tabular(), rng);
  const RewardModel reward = random_reward(1, 2, Architecture::tabular(), rng,
                                           InitScheme::kStandardNormal);
  auto g = [&](const ParamVec& p) {
    return exact_pref_objective(mdp, with_params(policy, p), reward, 1).value;
  };
  return relative_error(exact_pref_objective(mdp, policy, reward, 1).grad_lambda,
                        finite_diff_grad(g, policy.params, kFdStep));
}

OracleSelfCheck oracle_self_checks(std::uint64_t seed) {
  OracleSelfCheck out;
  const TabularMdp mdp = gradient_fixture_mdp();
  Rng rng(seed);
  const PolicyModel policy = random_policy(3, 2, Architecture::tabular(), rng);
  const PolicyTable pt = policy_table(policy);
  const RewardFn rf = true_reward_fn(mdp);
  out.bellman_residual =
      bellman_residual_max(mdp, pt, rf, exact_policy_eval(mdp, pt, rf).q_table);
  const RewardModel reward = random_reward(3, 2, Architecture::tabular(), rng);
  for (int h = 1; h <= 4; ++h) {
    out.enumeration_mass_error =
        std::max(out.enumeration_mass_error,
                 std::abs(exact_pref_objective(mdp, policy, reward, h)
                              .total_probability -
                          1.0));
  }
  const int n = 5;
  const double gamma = 0.9;
  const TabularMdp chain = make_chain(n, gamma, 0.0);
  out.chain_optimum_error =
      std::abs(value_iteration(chain, true_reward_fn(chain)).j_star -
               std::pow(gamma, n - 1) / (1.0 - gamma));
  return out;
}

McComparison compare_mc_mean(const std::vector<ParamVec>& samples,
                             const ParamVec& reference, double k_se,
                             double slack) {
  if (samples.empty()) throw UsageError("compare_mc_mean: no samples");
  const std::size_t dim = reference.size();
  const double n = static_cast<double>(samples.size());
  ParamVec mean(dim), sq(dim);
  for (const ParamVec& x : samples) {
    if (x.size() != dim) throw DimensionError("compare_mc_mean: sample size");
    for (std::size_t i = 0; i < dim; ++i) {
      mean[i] += x[i];
      sq[i] += x[i] * x[i];
    }
  }
  McComparison out;
  out.coordinates = static_cast<int>(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const double m = mean[i] / n;
    const double var = std::max(0.0, (sq[i] / n - m * m) * n / (n - 1.0));
    const double se = std::sqrt(var / n);
    const double err = std::abs(m - reference[i]);
    out.max_abs_error = std::max(out.max_abs_error, err);
    if (se > 0.0) out.worst_z = std::max(out.worst_z, err / se);
    if (err > k_se * se + slack + 1e-12) ++out.outside;
  }
  return out;
}

McComparison policy_grad_mc(int n, std::uint64_t seed) {
  const TabularMdp mdp = gradient_fixture_mdp();
  Rng rng(seed);
  const PolicyModel policy = random_policy(3, 2, Architecture::tabular(), rng);
  const PolicyTable pt = policy_table(policy);
  const RewardFn rf = true_reward_fn(mdp);
  const ExactPolicyEval ev = exact_policy_eval(mdp, pt, rf);
  const ScoreTable scores = score_table(policy);
  const ValueGradTable critic = critic_table(exact_q_critic(mdp, ev), false);
  const int max_geo = 4000;
  std::vector<ParamVec> samples;
  samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    const std::vector<Step> one{sample_visitation_pair(mdp, pt, rng, max_geo)};
    samples.push_back(
        policy_grad_from_samples(scores, critic, one, mdp.gamma()));
  }
  return compare_mc_mean(samples, exact_grad_lambda_J(mdp, policy, rf), 3.0);
}

McComparison reward_grad_mc(int n, int horizon, std::uint64_t seed,
                            bool against_untruncated) {
  const TabularMdp mdp = gradient_fixture_mdp();
  Rng rng(seed);
  const PolicyTable pt = policy_table(random_policy(3, 2, Architecture::tabular(), rng));
  const RewardModel reward = random_reward(3, 2, Architecture::mlp(8), rng);
  const ValueGradTable table = reward_table(reward, true);
  std::vector<ParamVec> samples;
  samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    const std::vector<Trajectory> one{sample_trajectory(mdp, pt, horizon, rng)};
    samples.push_back(grad_phi_J_estimate(table, one, mdp.gamma()));
  }
  if (!against_untruncated) {
    return compare_mc_mean(
        samples, exact_truncated_grad_phi_J(mdp, pt, reward, horizon), 3.0);
  }
  const double bound = 2.0 * std::pow(mdp.gamma(), horizon) *
                       max_grad_norm(reward) / (1.0 - mdp.gamma());
  return compare_mc_mean(samples, exact_grad_phi_J(mdp, pt, reward), 3.0,
                         bound);
}

McComparison pref_grad_lambda_mc(int n, std::uint64_t seed) {
  const TabularMdp mdp = preference_fixture_mdp();
  Rng rng(seed);
  const PolicyModel policy = random_policy(1, 2, Architecture::tabular(), rng);
  const RewardModel reward = random_reward(1, 2, Architecture::tabular(), rng,
                                           InitScheme::kStandardNormal);
  const PolicyTable pt = policy_table(policy);
  const ValueGradTable table = reward_table(reward, false);
  const ScoreTable scores = score_table(policy);
  Rng label_rng(derive_seed(seed, Stream::kLabeler));
  std::vector<ParamVec> samples;
  samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    const PrefBatch batch = sample_pref_batch(mdp, pt, 1, 1, rng, label_rng);
    samples.push_back(pref_grad_lambda(table, scores, batch));
  }
  return compare_mc_mean(
      samples, exact_pref_objective(mdp, policy, reward, 1).grad_lambda, 3.0);
}

CriticCheck critic_fit_check(std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const double gamma = 0.9;
  const TabularMdp mdp = make_random_tabular(0, 5, 2, gamma);
  const Architecture tab = Architecture::tabular();
  Rng rng(seed);
  const PolicyModel policy = random_policy(5, 2, tab, rng);
  const CriticModel init = make_critic(
      5, 2, tab,
      init_params(critic_spec(5, 2, tab), InitScheme::kStandardNormal, rng));
  const PolicyTable pt = policy_table(policy);
  const RewardFn rf = true_reward_fn(mdp);
  const ReplayBuffer buffer{collect_transitions(mdp, pt, rf, 10000, 5, rng)};
  CriticFitConfig cfg;
  cfg.J_outer = 20;
  cfg.L_inner = 2000;
  FitDiagnostics diag;
  const CriticModel fit = fit_q(gamma, buffer, pt, init, cfg, rng, &diag);
  const ExactPolicyEval ev = exact_policy_eval(mdp, pt, rf);
  const ValueGradTable q = critic_table(fit, false);
  CriticCheck out;
  for (std::size_t i = 0; i < q.values.size(); ++i) {
    out.max_error = std::max(out.max_error, std::abs(q.values[i] - ev.q_table[i]));
  }
  out.tolerance = 0.1 / (1.0 - gamma);
  out.max_anchor_distance = diag.max_anchor_distance;
  out.radius = cfg.radius_for(gamma);
  out.seconds = seconds_since(t0);
  return out;
}

double critic_constant_reward_error(std::uint64_t seed) {
  const double gamma = 0.9;
  const TabularMdp mdp(1, 1, {1.0}, {1.0}, gamma, {1.0});
  const Architecture tab = Architecture::tabular();
  const PolicyTable pt = PolicyTable::uniform(1, 1);
  Rng rng(seed);
  const ReplayBuffer buffer{
      collect_transitions(mdp, pt, true_reward_fn(mdp), 1000, 5, rng)};
  const CriticModel init =
      make_critic(1, 1, tab, ParamVec(critic_spec(1, 1, tab).param_count()));
  CriticFitConfig cfg;
  cfg.J_outer = 80;
  cfg.L_inner = 500;
  const CriticModel fit = fit_q(gamma, buffer, pt, init, cfg, rng);
  return std::abs(critic_value(fit, 0, 0) - 1.0 / (1.0 - gamma));
}

HyperCheck hyper_exact_check() {
  const HyperFixture fx = hyper_fixture();
  const InnerSolveOptions opts{fx.tol, 100000};
  const PenaltySolution sol =
      solve_penalty(fx.mdp, fx.reward, fx.init, fx.sigma, fx.horizon, opts);
  HyperCheck out;
  out.fd = fd_hyper_grad(fx.mdp, fx.reward, fx.init, fx.sigma, fx.horizon,
                         fx.tol, 1e-3);
  out.estimate = exact_hyper_grad(fx, sol);
  out.cosine = cosine(out.estimate, out.fd);
  out.relative_error = relative_error(out.estimate, out.fd);
  return out;
}

HyperCheck hyper_mc_check(int batch, int j_horizon, std::uint64_t seed,
                          bool coupled) {
  const HyperFixture fx = hyper_fixture();
  const InnerSolveOptions opts{fx.tol, 100000};
  const PenaltySolution sol =
      solve_penalty(fx.mdp, fx.reward, fx.init, fx.sigma, fx.horizon, opts);
  TrainConfig cfg;
  cfg.sigma = fx.sigma;
  cfg.H = fx.horizon;
  cfg.B = batch;
  cfg.j_horizon = j_horizon;
  cfg.coupled_j_samples = coupled;
  cfg.hyper_variant = HyperVariant::kPenaltyConsistent;
  Rng rng(derive_seed(seed, Stream::kUpper));
  Rng label_rng(derive_seed(seed, Stream::kLabeler));
  HyperCheck out;
  out.estimate = hyper_grad_estimate(fx.reward, sol.plain.policy,
                                     sol.penalized.policy, fx.mdp, cfg, rng,
                                     label_rng)
                     .total;
  out.fd = fd_hyper_grad(fx.mdp, fx.reward, fx.init, fx.sigma, fx.horizon,
                         fx.tol, 1e-3);
  out.cosine = cosine(out.estimate, out.fd);
  out.relative_error = relative_error(out.estimate, out.fd);
  out.richardson = richardson_ratio(
      [&](double h) {
        return fd_hyper_grad(fx.mdp, fx.reward, fx.init, fx.sigma, fx.horizon,
                             fx.tol, h);
      },
      0.1);
  return out;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

class Suite {
 public:
  explicit Suite(std::ostream* progress) : progress_(progress) {}

  void at_most(const std::string& name, double value, double limit) {
    add(name, value <= limit, value, "<= " + fmt("%g", limit));
  }
  void at_least(const std::string& name, double value, double limit) {
    add(name, value >= limit, value, ">= " + fmt("%g", limit));
  }
  void within(const std::string& name, double value, double lo, double hi) {
    add(name, value >= lo && value <= hi, value,
        "in [" + fmt("%g", lo) + ", " + fmt("%g", hi) + "]");
  }
  // Reports the worst z-score, or the worst absolute error when the
  // tolerance carries a deterministic slack term.
  void mc(const std::string& name, const McComparison& c, bool slack = false) {
    add(name, c.outside == 0, slack ? c.max_abs_error : c.worst_z,
        "all " + std::to_string(c.coordinates) + " coords within 3 SE" +
            (slack ? " + bias bound" : ""));
  }

  // Runs `body`; an exception fails the named check instead of the suite.
  template <typename F>
  void guarded(const std::string& name, F&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      add(name, false, std::nan(""), std::string("threw: ") + e.what());
    }
  }

  std::vector<CheckResult> take() { return std::move(results_); }

 private:
  void add(const std::string& name, bool pass, double value,
           std::string criterion) {
    results_.push_back({name, pass, value, std::move(criterion)});
    if (progress_) {
      *progress_ << (pass ? "[pass] " : "[FAIL] ") << name << '\n'
                 << std::flush;
    }
  }

  std::ostream* progress_;
  std::vector<CheckResult> results_;
};

}  // namespace

std::vector<CheckResult> run_verify(VerifyLevel level, std::ostream* progress) {
  Suite s(progress);
  const std::uint64_t seed = 0;

  s.guarded("autodiff", [&] {
    s.at_most("autodiff", autodiff_max_error(100, seed, kFdStep), 1e-5);
  });
  s.guarded("policy_score", [&] {
    const ScoreCheck sc = score_checks(seed);
    s.at_most("policy_score_fd", sc.max_fd_error, 1e-6);
    s.at_most("policy_score_identity", sc.max_identity_error, 1e-8);
  });
  s.guarded("policy_grad_fd", [&] {
    s.at_most("policy_grad_fd_tabular",
              policy_grad_fd_error(seed, Architecture::tabular()), 1e-5);
    s.at_most("policy_grad_fd_mlp",
              policy_grad_fd_error(seed, Architecture::mlp(8)), 1e-5);
  });
  s.guarded("reward_grad_fd", [&] {
    s.at_most("reward_grad_fd_tabular",
              reward_grad_fd_error(seed, Architecture::tabular()), 1e-6);
    s.at_most("reward_grad_fd_mlp",
              reward_grad_fd_error(seed, Architecture::mlp(8)), 1e-6);
  });
  s.guarded("truncation_bias", [&] {
    for (int h : {3, 10}) {
      const BiasCheck b = truncation_bias(h, seed);
      s.at_most("truncation_bias_over_bound_H" + std::to_string(h),
                b.bias_norm / b.bound, 1.0);
    }
  });
  s.guarded("pref_complement", [&] {
    s.at_most("pref_complement", preference_complement_error(1000, seed),
              1e-12);
  });
  s.guarded("pref_grad_phi_fd", [&] {
    s.at_most("pref_grad_phi_fd", pref_grad_phi_fd_error(seed), 1e-6);
  });
  s.guarded("pref_grad_lambda_exact_fd", [&] {
    s.at_most("pref_grad_lambda_exact_fd",
              exact_pref_grad_lambda_fd_error(seed), 1e-5);
  });
  s.guarded("oracle_self", [&] {
    const OracleSelfCheck o = oracle_self_checks(seed);
    s.at_most("exact_eval_bellman_residual", o.bellman_residual, 1e-10);
    s.at_most("enumeration_mass", o.enumeration_mass_error, 1e-9);
    s.at_most("chain_slip0_optimum", o.chain_optimum_error, 1e-9);
  });
  s.guarded("hyper_exact", [&] {
    const HyperCheck h = hyper_exact_check();
    s.at_least("hyper_exact_cosine", h.cosine, 0.99);
    s.at_most("hyper_exact_relerr", h.relative_error, 1e-5);
  });

  if (level == VerifyLevel::kFull) {
    s.guarded("policy_grad_mc", [&] {
      s.mc("policy_grad_mc", policy_grad_mc(50000, seed));
    });
    s.guarded("reward_grad_mc", [&] {
      for (int h : {3, 10}) {
        const std::string tag = "_H" + std::to_string(h);
        s.mc("reward_grad_mc_truncated" + tag,
             reward_grad_mc(10000, h, seed, false));
        s.mc("reward_grad_mc_with_bias_bound" + tag,
             reward_grad_mc(10000, h, seed, true), true);
      }
    });
    s.guarded("pref_grad_lambda_mc", [&] {
      s.mc("pref_grad_lambda_mc", pref_grad_lambda_mc(100000, seed));
    });
    s.guarded("critic_fit", [&] {
      const CriticCheck c = critic_fit_check(seed);
      s.at_most("critic_fit_max_error", c.max_error, c.tolerance);
      s.at_most("critic_fit_projection", c.max_anchor_distance,
                c.radius + 1e-9);
      s.at_most("critic_fit_constant_reward",
                critic_constant_reward_error(seed), 0.1);
    });
    s.guarded("hyper_mc", [&] {
      const HyperCheck h = hyper_mc_check(200000, 60, seed, false);
      s.at_least("hyper_mc_cosine", h.cosine, 0.99);
      s.at_most("hyper_mc_relerr", h.relative_error, 0.05);
      s.within("hyper_fd_richardson", h.richardson, 3.5, 4.5);
    });
    s.guarded("assumption_probes", [&] {
      const TabularMdp chain = make_chain(5, 0.9, 0.1);
      Rng rng(seed);
      const RewardModel reward =
          random_reward(5, 2, Architecture::tabular(), rng);
      const PolicyModel policy =
          random_policy(5, 2, Architecture::tabular(), rng);
      const ProbeReport rep = assumption_probes(chain, policy, reward, 100, seed);
      if (progress) write_probe_report(*progress, rep);
      s.at_least("fisher_psd", rep.fisher_min_eig, -1e-12);
    });
  }
  return s.take();
}

void print_check_table(std::ostream& out,
                       const std::vector<CheckResult>& results) {
  std::size_t width = 5;
  for (const auto& r : results) width = std::max(width, r.name.size());
  char line[512];
  std::snprintf(line, sizeof line, "%-*s  %-6s  %-14s  %s\n",
                static_cast<int>(width), "check", "result", "value",
                "criterion");
  out << line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-*s  %-6s  %-14.6g  %s\n",
                  static_cast<int>(width), r.name.c_str(),
                  r.pass ? "pass" : "FAIL", r.value, r.criterion.c_str());
    out << line;
  }
}

int cmd_verify(VerifyLevel level, bool inject_backward_sign_fault,
               std::ostream& out) {
  const FaultGuard guard(inject_backward_sign_fault);
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<CheckResult> results = run_verify(level, &out);
  print_check_table(out, results);
  std::vector<std::string> failed;
  for (const auto& r : results) {
    if (!r.pass) failed.push_back(r.name);
  }
  out << "level " << to_string(level) << ": " << results.size() - failed.size()
      << "/" << results.size() << " checks passed in "
      << fmt("%.1f", seconds_since(t0)) << " s\n";
  if (failed.empty()) return 0;
  out << "failing checks:";
  for (const auto& n : failed) out << ' ' << n;
  out << '\n';
  return 1;
}

}  // namespace rlhf
