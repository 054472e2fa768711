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

#include "rlhf/oracle.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <ostream>

#include "rlhf/errors.h"
#include "rlhf/preference.h"
#include "rlhf/rng.h"
#include "rlhf/textio.h"

namespace rlhf {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// I - gamma P_pi over state-action pairs.
MatrixXd bellman_matrix(const TabularMdp& mdp, const PolicyTable& policy) {
  const int ns = mdp.n_states(), na = mdp.n_actions(), n = ns * na;
  MatrixXd m = MatrixXd::Identity(n, n);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      const auto row = mdp.row(s, a);
      for (int s2 = 0; s2 < ns; ++s2) {
        if (row[s2] == 0.0) continue;
        for (int a2 = 0; a2 < na; ++a2) {
          m(s * na + a, s2 * na + a2) -=
              mdp.gamma() * row[s2] * policy.prob(s2, a2);
        }
      }
    }
  }
  return m;
}

void check_policy_shape(const TabularMdp& mdp, const PolicyTable& policy) {
  if (policy.n_states() != mdp.n_states() ||
      policy.n_actions() != mdp.n_actions()) {
    throw DimensionError("policy does not match MDP dimensions");
  }
}

}  // namespace

ExactPolicyEval exact_policy_eval(const TabularMdp& mdp,
                                  const PolicyTable& policy,
                                  const RewardFn& reward_fn) {
  check_policy_shape(mdp, policy);
  const int ns = mdp.n_states(), na = mdp.n_actions(), n = ns * na;
  VectorXd r(n), mu0(n);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      r(s * na + a) = reward_fn(s, a);
      mu0(s * na + a) = mdp.start_dist()[s] * policy.prob(s, a);
    }
  }
  const MatrixXd m = bellman_matrix(mdp, policy);
  const VectorXd q = Eigen::PartialPivLU<MatrixXd>(m).solve(r);
  const VectorXd d =
      (1.0 - mdp.gamma()) * Eigen::PartialPivLU<MatrixXd>(m.transpose()).solve(mu0);
  if (!q.allFinite() || !d.allFinite()) {
    throw NumericError("policy evaluation solve produced non-finite values");
  }
  ExactPolicyEval out;
  out.n_states = ns;
  out.n_actions = na;
  out.q_table.assign(q.data(), q.data() + n);
  out.visitation.assign(d.data(), d.data() + n);
  out.j_value = mu0.dot(q);
  return out;
}

double bellman_residual_max(const TabularMdp& mdp, const PolicyTable& policy,
                            const RewardFn& reward_fn,
                            const std::vector<double>& q_table) {
  const int ns = mdp.n_states(), na = mdp.n_actions();
  std::vector<double> v(ns, 0.0);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) v[s] += policy.prob(s, a) * q_table[s * na + a];
  }
  double worst = 0.0;
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      double backup = reward_fn(s, a);
      const auto row = mdp.row(s, a);
      for (int s2 = 0; s2 < ns; ++s2) backup += mdp.gamma() * row[s2] * v[s2];
      worst = std::max(worst, std::abs(backup - q_table[s * na + a]));
    }
  }
  return worst;
}

RewardFn true_reward_fn(const TabularMdp& mdp) {
  return [&mdp](int s, int a) { return mdp.true_reward(s, a); };
}

RewardFn reward_fn_of(const RewardModel& reward) {
  auto table = std::make_shared<ValueGradTable>(reward_table(reward, false));
  return [table](int s, int a) { return table->value(s, a); };
}

OptimalValue value_iteration(const TabularMdp& mdp, const RewardFn& reward_fn) {
  const int ns = mdp.n_states(), na = mdp.n_actions();
  std::vector<double> r(static_cast<std::size_t>(ns) * na);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) r[s * na + a] = reward_fn(s, a);
  }
  std::vector<double> v(ns, 0.0), q(r.size(), 0.0);
  for (int it = 0; it < 1000000; ++it) {
    double delta = 0.0;
    for (int s = 0; s < ns; ++s) {
      for (int a = 0; a < na; ++a) {
        double backup = r[s * na + a];
        const auto row = mdp.row(s, a);
        for (int s2 = 0; s2 < ns; ++s2) backup += mdp.gamma() * row[s2] * v[s2];
        q[s * na + a] = backup;
      }
    }
    for (int s = 0; s < ns; ++s) {
      const double best = *std::max_element(q.begin() + s * na, q.begin() + (s + 1) * na);
      delta = std::max(delta, std::abs(best - v[s]));
      v[s] = best;
    }
    if (delta <= 1e-13) break;
  }
  OptimalValue out;
  out.q_star = q;
  out.greedy.resize(ns);
  for (int s = 0; s < ns; ++s) {
    out.greedy[s] = static_cast<int>(
        std::max_element(q.begin() + s * na, q.begin() + (s + 1) * na) -
        (q.begin() + s * na));
    out.j_star += mdp.start_dist()[s] * v[s];
  }
  return out;
}

PolicyTable greedy_table(const TabularMdp& mdp, const std::vector<int>& greedy) {
  const int ns = mdp.n_states(), na = mdp.n_actions();
  std::vector<double> p(static_cast<std::size_t>(ns) * na, 0.0);
  for (int s = 0; s < ns; ++s) p[s * na + greedy[s]] = 1.0;
  return PolicyTable(ns, na, std::move(p));
}

namespace {

ParamVec grad_lambda_J_from(const TabularMdp& mdp, const ExactPolicyEval& ev,
                            const ScoreTable& scores) {
  ParamVec g(scores.scores.front().size());
  for (int s = 0; s < mdp.n_states(); ++s) {
    for (int a = 0; a < mdp.n_actions(); ++a) {
      g.axpy(ev.d(s, a) * ev.q(s, a), scores.at(s, a));
    }
  }
  g *= 1.0 / (1.0 - mdp.gamma());
  return g;
}

}  // namespace

ParamVec exact_grad_lambda_J(const TabularMdp& mdp, const PolicyModel& policy,
                             const RewardFn& reward_fn) {
  const ExactPolicyEval ev =
      exact_policy_eval(mdp, policy_table(policy), reward_fn);
  return grad_lambda_J_from(mdp, ev, score_table(policy));
}

ParamVec exact_grad_phi_J(const TabularMdp& mdp, const PolicyTable& policy,
                          const RewardModel& reward) {
  const ValueGradTable rt = reward_table(reward, true);
  const ExactPolicyEval ev = exact_policy_eval(
      mdp, policy, [&](int s, int a) { return rt.value(s, a); });
  ParamVec g(reward.params.size());
  for (int s = 0; s < mdp.n_states(); ++s) {
    for (int a = 0; a < mdp.n_actions(); ++a) g.axpy(ev.d(s, a), rt.grad(s, a));
  }
  g *= 1.0 / (1.0 - mdp.gamma());
  return g;
}

ParamVec exact_truncated_grad_phi_J(const TabularMdp& mdp,
                                    const PolicyTable& policy,
                                    const RewardModel& reward, int horizon) {
  if (horizon < 1) throw UsageError("horizon must be >= 1");
  const int ns = mdp.n_states(), na = mdp.n_actions();
  const ValueGradTable rt = reward_table(reward, true);
  std::vector<double> state(mdp.start_dist().begin(), mdp.start_dist().end());
  std::vector<double> weight(static_cast<std::size_t>(ns) * na, 0.0);
  double disc = 1.0;
  for (int j = 0; j < horizon; ++j) {
    std::vector<double> next(ns, 0.0);
    for (int s = 0; s < ns; ++s) {
      for (int a = 0; a < na; ++a) {
        const double m = state[s] * policy.prob(s, a);
        weight[s * na + a] += disc * m;
        const auto row = mdp.row(s, a);
        for (int s2 = 0; s2 < ns; ++s2) next[s2] += m * row[s2];
      }
    }
    state = std::move(next);
    disc *= mdp.gamma();
  }
  ParamVec g(reward.params.size());
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) g.axpy(weight[s * na + a], rt.grad(s, a));
  }
  return g;
}

namespace {

// Trajectories of length H aggregated by visit counts over (s, a).
struct TrajectoryGroups {
  std::vector<std::vector<std::uint8_t>> counts;
  std::vector<double> prob;
  double total = 0.0;
  std::size_t n_trajectories = 0;
};

TrajectoryGroups enumerate_groups(const TabularMdp& mdp,
                                  const PolicyTable& policy, int horizon) {
  const int ns = mdp.n_states(), na = mdp.n_actions(), n = ns * na;
  if (horizon < 1) throw UsageError("horizon must be >= 1");
  if (horizon > 255 ||
      std::pow(static_cast<double>(n), horizon) > kMaxEnumeratedTrajectories) {
    throw CapacityError("(n_states * n_actions)^H exceeds the enumeration cap");
  }
  std::map<std::vector<std::uint8_t>, double> groups;
  std::vector<std::uint8_t> counts(n, 0);
  TrajectoryGroups out;

  // Depth-first over steps; `weight` is the probability of reaching state s
  // at step h along the current prefix.
  std::function<void(int, int, double)> visit = [&](int h, int s, double weight) {
    for (int a = 0; a < na; ++a) {
      const double w = weight * policy.prob(s, a);
      ++counts[s * na + a];
      if (h + 1 == horizon) {
        groups[counts] += w;
        ++out.n_trajectories;
      } else {
        const auto row = mdp.row(s, a);
        for (int s2 = 0; s2 < ns; ++s2) visit(h + 1, s2, w * row[s2]);
      }
      --counts[s * na + a];
    }
  };
  for (int s0 = 0; s0 < ns; ++s0) visit(0, s0, mdp.start_dist()[s0]);

  for (auto& [c, p] : groups) {
    out.counts.push_back(c);
    out.prob.push_back(p);
    out.total += p;
  }
  return out;
}

}  // namespace

ExactPref exact_pref_objective(const TabularMdp& mdp, const PolicyModel& policy,
                               const RewardModel& reward, int horizon) {
  const PolicyTable pt = policy_table(policy);
  check_policy_shape(mdp, pt);
  const int ns = mdp.n_states(), na = mdp.n_actions(), n = ns * na;
  const TrajectoryGroups groups = enumerate_groups(mdp, pt, horizon);
  const ValueGradTable rt = reward_table(reward, true);
  const ScoreTable st = score_table(policy);

  const std::size_t g = groups.prob.size();
  std::vector<double> r_true(g, 0.0), r_phi(g, 0.0);
  for (std::size_t i = 0; i < g; ++i) {
    for (int s = 0; s < ns; ++s) {
      for (int a = 0; a < na; ++a) {
        const double c = groups.counts[i][s * na + a];
        r_true[i] += c * mdp.true_reward(s, a);
        r_phi[i] += c * rt.value(s, a);
      }
    }
  }

  // value = sum_ij p_i p_j u_ij with u_ij = q P + (1 - q)(1 - P), where q and
  // P are the true and modeled probabilities that i beats j. u is symmetric,
  // so the policy gradient only needs the row sums of p_j u_ij.
  // d u / d(R_i - R_j) = (2q - 1) P (1 - P).
  double value = 0.0;
  std::vector<double> u_row(g, 0.0), w_net(g, 0.0);
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = 0; j < g; ++j) {
      const double q = sigmoid(r_true[i] - r_true[j]);
      const double p = sigmoid(r_phi[i] - r_phi[j]);
      const double u = q * p + (1.0 - q) * (1.0 - p);
      const double pj = groups.prob[j];
      u_row[i] += pj * u;
      const double w = groups.prob[i] * pj * (2.0 * q - 1.0) * p * (1.0 - p);
      w_net[i] += w;
      w_net[j] -= w;
    }
    value += groups.prob[i] * u_row[i];
  }

  // Fold the per-group coefficients onto the (s, a) counts.
  std::vector<double> coef_phi(n, 0.0), coef_lambda(n, 0.0);
  for (std::size_t i = 0; i < g; ++i) {
    for (int k = 0; k < n; ++k) {
      const double c = groups.counts[i][k];
      if (c == 0.0) continue;
      coef_phi[k] += w_net[i] * c;
      coef_lambda[k] += 2.0 * groups.prob[i] * u_row[i] * c;
    }
  }
  ExactPref out;
  out.value = value;
  out.grad_phi = ParamVec(reward.params.size());
  out.grad_lambda = ParamVec(policy.params.size());
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      out.grad_phi.axpy(coef_phi[s * na + a], rt.grad(s, a));
      out.grad_lambda.axpy(coef_lambda[s * na + a], st.at(s, a));
    }
  }
  out.total_probability = groups.total;
  out.n_trajectories = groups.n_trajectories;
  return out;
}

namespace {

struct InnerEval {
  double objective = 0.0;
  double j_value = 0.0;
  ParamVec grad;
};

InnerEval inner_eval(const TabularMdp& mdp, const RewardFn& reward_fn,
                     const RewardModel& reward, const PolicyModel& policy,
                     double sigma, int horizon, bool with_grad) {
  InnerEval e;
  const ExactPolicyEval ev = exact_policy_eval(mdp, policy_table(policy), reward_fn);
  e.j_value = ev.j_value;
  e.objective = ev.j_value;
  if (with_grad) e.grad = grad_lambda_J_from(mdp, ev, score_table(policy));
  if (sigma != 0.0) {
    const ExactPref pref = exact_pref_objective(mdp, policy, reward, horizon);
    e.objective += sigma * pref.value;
    if (with_grad) e.grad.axpy(sigma, pref.grad_lambda);
  }
  return e;
}

}  // namespace

InnerSolveResult exact_inner_solve(const TabularMdp& mdp,
                                   const RewardModel& reward,
                                   const PolicyModel& init, double sigma,
                                   int horizon,
                                   const InnerSolveOptions& options) {
  if (!(options.tol > 0.0)) throw UsageError("inner solve tolerance must be > 0");
  const RewardFn reward_fn = reward_fn_of(reward);
  PolicyModel policy = init;
  InnerEval cur = inner_eval(mdp, reward_fn, reward, policy, sigma, horizon, true);
  // Backtracking on the displacement length along the unit gradient; the
  // trial length doubles after every accepted step so flat saturating
  // directions are crossed in few iterations.
  double length = 0.5;
  for (int it = 0; it < options.max_iter; ++it) {
    const double gnorm = cur.grad.norm();
    if (gnorm <= options.tol) {
      return {std::move(policy), cur.objective, cur.j_value, gnorm, it};
    }
    length *= 2.0;
    bool accepted = false;
    for (int bt = 0; bt < 200; ++bt) {
      PolicyModel trial = policy;
      trial.params.axpy(length / gnorm, cur.grad);
      const InnerEval next =
          inner_eval(mdp, reward_fn, reward, trial, sigma, horizon, false);
      if (next.objective > cur.objective &&
          next.objective >= cur.objective + 1e-4 * length * gnorm) {
        policy = std::move(trial);
        cur = inner_eval(mdp, reward_fn, reward, policy, sigma, horizon, true);
        accepted = true;
        break;
      }
      length *= 0.5;
    }
    if (!accepted) {
      // No representable ascent step remains: the gradient is at the
      // rounding floor of the objective.
      throw ConvergenceError("inner solve line search failed at gradient norm " +
                             format_double(gnorm));
    }
  }
  throw ConvergenceError("inner solve exceeded the iteration cap");
}

PenaltySolution solve_penalty(const TabularMdp& mdp, const RewardModel& reward,
                              const PolicyModel& init, double sigma,
                              int horizon, const InnerSolveOptions& options) {
  if (!(sigma > 0.0)) throw ConfigError("sigma", "must be > 0");
  PenaltySolution out;
  out.plain = exact_inner_solve(mdp, reward, init, 0.0, horizon, options);
  out.penalized = exact_inner_solve(mdp, reward, init, sigma, horizon, options);
  out.value = (out.penalized.objective - out.plain.objective) / sigma;
  return out;
}

double penalty_objective(const TabularMdp& mdp, const RewardModel& reward,
                         const PolicyModel& init, double sigma, int horizon,
                         const InnerSolveOptions& options) {
  return solve_penalty(mdp, reward, init, sigma, horizon, options).value;
}

ParamVec fd_hyper_grad(const TabularMdp& mdp, const RewardModel& reward,
                       const PolicyModel& init, double sigma, int horizon,
                       double tol, double h) {
  if (!(sigma > 0.0)) throw ConfigError("sigma", "must be > 0");
  const InnerSolveOptions opts{tol, InnerSolveOptions{}.max_iter};
  const PenaltySolution base = solve_penalty(mdp, reward, init, sigma, horizon, opts);
  auto phi_value = [&](const RewardModel& r) {
    const InnerSolveResult plain =
        exact_inner_solve(mdp, r, base.plain.policy, 0.0, horizon, opts);
    const InnerSolveResult pen =
        exact_inner_solve(mdp, r, base.penalized.policy, sigma, horizon, opts);
    return (pen.objective - plain.objective) / sigma;
  };
  ParamVec grad(reward.params.size());
  RewardModel probe = reward;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    probe.params[i] = reward.params[i] + h;
    const double up = phi_value(probe);
    probe.params[i] = reward.params[i] - h;
    const double down = phi_value(probe);
    probe.params[i] = reward.params[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double richardson_ratio(const std::function<ParamVec(double)>& fd, double h) {
  const ParamVec g1 = fd(h), g2 = fd(h / 2.0), g4 = fd(h / 4.0);
  return (g1 - g2).norm() / std::max((g2 - g4).norm(), 1e-300);
}

ProbeStats probe_policy(const TabularMdp& mdp, const PolicyModel& policy,
                        const RewardFn& reward_fn) {
  const int ns = mdp.n_states(), na = mdp.n_actions();
  const PolicyTable pt = policy_table(policy);
  const ScoreTable st = score_table(policy);
  const ExactPolicyEval ev = exact_policy_eval(mdp, pt, reward_fn);
  const std::size_t dim = policy.params.size();

  ProbeStats out;
  MatrixXd fisher = MatrixXd::Zero(dim, dim);
  for (int s = 0; s < ns; ++s) {
    for (int a = 0; a < na; ++a) {
      const ParamVec& sc = st.at(s, a);
      const Eigen::Map<const VectorXd> v(sc.span().data(), dim);
      fisher.noalias() += ev.d(s, a) * v * v.transpose();
      out.max_score_norm = std::max(out.max_score_norm, sc.norm());
    }
  }
  out.fisher_min_eig =
      Eigen::SelfAdjointEigenSolver<MatrixXd>(fisher, Eigen::EigenvaluesOnly)
          .eigenvalues()
          .minCoeff();

  // Compatible approximation error under the optimal policy's visitation:
  // min_w sum d*(s, a) (A(s, a) - (1 - gamma) w^T score(s, a))^2.
  const OptimalValue opt = value_iteration(mdp, reward_fn);
  const ExactPolicyEval ev_star =
      exact_policy_eval(mdp, greedy_table(mdp, opt.greedy), reward_fn);
  MatrixXd design(ns * na, dim);
  VectorXd target(ns * na);
  for (int s = 0; s < ns; ++s) {
    double v = 0.0;
    for (int a = 0; a < na; ++a) v += pt.prob(s, a) * ev.q(s, a);
    for (int a = 0; a < na; ++a) {
      const double w = std::sqrt(ev_star.d(s, a));
      const ParamVec& sc = st.at(s, a);
      for (std::size_t k = 0; k < dim; ++k) {
        design(s * na + a, k) = w * (1.0 - mdp.gamma()) * sc[k];
      }
      target(s * na + a) = w * (ev.q(s, a) - v);
    }
  }
  const VectorXd w = design.completeOrthogonalDecomposition().solve(target);
  out.eps_bias = (design * w - target).squaredNorm();
  return out;
}

ProbeReport assumption_probes(const TabularMdp& mdp, const PolicyModel& policy,
                              const RewardModel& reward, int n_samples,
                              std::uint64_t seed, double scale) {
  const RewardFn reward_fn = reward_fn_of(reward);
  const ProbeStats here = probe_policy(mdp, policy, reward_fn);
  ProbeReport rep;
  rep.fisher_min_eig = here.fisher_min_eig;
  rep.max_score_norm = here.max_score_norm;
  rep.eps_bias = here.eps_bias;
  rep.j_star = value_iteration(mdp, reward_fn).j_star;

  Rng rng(seed);
  std::vector<PolicyModel> samples;
  double mu_f = here.fisher_min_eig, m_g = here.max_score_norm,
         eps_bias = here.eps_bias;
  for (int i = 0; i < n_samples; ++i) {
    PolicyModel p = policy;
    p.params = init_params(p.spec, InitScheme::kFanIn, rng) * scale;
    const ProbeStats st = probe_policy(mdp, p, reward_fn);
    mu_f = std::min(mu_f, st.fisher_min_eig);
    m_g = std::max(m_g, st.max_score_norm);
    eps_bias = std::max(eps_bias, st.eps_bias);
    samples.push_back(std::move(p));
  }
  // Eigenvalues of a PSD matrix can come out as tiny negatives.
  mu_f = std::max(mu_f, 0.0);
  rep.mu3 = m_g > 0.0 ? mu_f * mu_f * mu_f / (2.0 * m_g * m_g) : 0.0;
  rep.eps_prime = m_g > 0.0
                      ? mu_f * std::sqrt(eps_bias) / (m_g * (1.0 - mdp.gamma()))
                      : 0.0;
  rep.domination_samples = n_samples;
  rep.domination_worst_margin = INFINITY;
  for (const PolicyModel& p : samples) {
    const ExactPolicyEval ev = exact_policy_eval(mdp, policy_table(p), reward_fn);
    const double lhs = std::sqrt(rep.mu3) * (rep.j_star - ev.j_value);
    const double rhs =
        rep.eps_prime + grad_lambda_J_from(mdp, ev, score_table(p)).norm();
    rep.domination_worst_margin = std::min(rep.domination_worst_margin, rhs - lhs);
    if (lhs > rhs) ++rep.domination_violations;
  }
  if (n_samples == 0) rep.domination_worst_margin = 0.0;
  return rep;
}

void write_probe_report(std::ostream& out, const ProbeReport& r) {
  out << "fisher_min_eig: " << format_double(r.fisher_min_eig) << '\n'
      << "max_score_norm: " << format_double(r.max_score_norm) << '\n'
      << "eps_bias: " << format_double(r.eps_bias) << '\n'
      << "mu3: " << format_double(r.mu3) << '\n'
      << "eps_prime: " << format_double(r.eps_prime) << '\n'
      << "j_star: " << format_double(r.j_star) << '\n'
      << "domination_samples: " << r.domination_samples << '\n'
      << "domination_violations: " << r.domination_violations << '\n'
      << "domination_worst_margin: " << format_double(r.domination_worst_margin) << '\n';
}

}  // namespace rlhf
