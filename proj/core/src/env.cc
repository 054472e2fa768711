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

#include "rlhf/env.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>

#include "rlhf/errors.h"
#include "rlhf/rng.h"
#include "rlhf/textio.h"

namespace rlhf {

namespace {

constexpr double kNormTol = 1e-12;

bool is_distribution(std::span<const double> p, double tol) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) return false;
    s += v;
  }
  return std::abs(s - 1.0) <= tol;
}

std::vector<double> dirichlet_ones(int n, Rng& rng) {
  std::vector<double> w(n);
  double s = 0.0;
  for (double& v : w) {
    v = rng.exponential();
    s += v;
  }
  for (double& v : w) v /= s;
  return w;
}

}  // namespace

TabularMdp::TabularMdp(int n_states, int n_actions,
                       std::vector<double> transition,
                       std::vector<double> true_reward, double gamma,
                       std::vector<double> start_dist)
    : n_states_(n_states),
      n_actions_(n_actions),
      transition_(std::move(transition)),
      true_reward_(std::move(true_reward)),
      gamma_(gamma),
      start_dist_(std::move(start_dist)) {
  if (n_states < 1 || n_actions < 1) {
    throw ConfigError("mdp", "n_states and n_actions must be >= 1");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ConfigError("gamma", "must lie in (0, 1)");
  }
  const std::size_t ns = n_states, na = n_actions;
  if (transition_.size() != ns * na * ns) {
    throw ConfigError("transition", "expected n_states*n_actions*n_states entries");
  }
  if (true_reward_.size() != ns * na) {
    throw ConfigError("true_reward", "expected n_states*n_actions entries");
  }
  if (start_dist_.size() != ns) {
    throw ConfigError("start_dist", "expected n_states entries");
  }
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      if (!is_distribution(row(s, a), kNormTol)) {
        throw ConfigError("transition", "row (" + std::to_string(s) + ", " +
                                            std::to_string(a) +
                                            ") is not a distribution");
      }
    }
  }
  for (double r : true_reward_) {
    if (!(r >= 0.0 && r <= 1.0)) {
      throw ConfigError("true_reward", "entries must lie in [0, 1]");
    }
  }
  if (!is_distribution(start_dist_, kNormTol)) {
    throw ConfigError("start_dist", "not a distribution");
  }
}

PolicyTable::PolicyTable(int n_states, int n_actions, std::vector<double> probs)
    : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
  if (probs_.size() != static_cast<std::size_t>(n_states) * n_actions) {
    throw DimensionError("policy table size mismatch");
  }
  for (int s = 0; s < n_states; ++s) {
    if (!is_distribution(this->probs(s), 1e-9)) {
      throw ModelError("policy output for state " + std::to_string(s) +
                       " is not a normalized distribution");
    }
  }
}

PolicyTable PolicyTable::from_fn(
    int n_states, int n_actions,
    const std::function<std::vector<double>(int)>& dist) {
  std::vector<double> probs;
  probs.reserve(static_cast<std::size_t>(n_states) * n_actions);
  for (int s = 0; s < n_states; ++s) {
    const std::vector<double> p = dist(s);
    if (p.size() != static_cast<std::size_t>(n_actions)) {
      throw DimensionError("policy returned the wrong number of actions");
    }
    probs.insert(probs.end(), p.begin(), p.end());
  }
  return PolicyTable(n_states, n_actions, std::move(probs));
}

PolicyTable PolicyTable::uniform(int n_states, int n_actions) {
  return PolicyTable(
      n_states, n_actions,
      std::vector<double>(static_cast<std::size_t>(n_states) * n_actions,
                          1.0 / n_actions));
}

TabularMdp make_random_tabular(std::uint64_t seed, int n_states, int n_actions,
                               double gamma) {
  if (n_states < 2 || n_actions < 2) {
    throw ConfigError("mdp", "random MDP needs n_states, n_actions >= 2");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ConfigError("gamma", "must lie in (0, 1)");
  }
  Rng rng(seed);
  std::vector<double> transition;
  transition.reserve(static_cast<std::size_t>(n_states) * n_actions * n_states);
  for (int i = 0; i < n_states * n_actions; ++i) {
    const std::vector<double> row = dirichlet_ones(n_states, rng);
    transition.insert(transition.end(), row.begin(), row.end());
  }
  std::vector<double> reward(static_cast<std::size_t>(n_states) * n_actions);
  for (double& r : reward) r = rng.uniform();
  std::vector<double> start = dirichlet_ones(n_states, rng);
  return TabularMdp(n_states, n_actions, std::move(transition),
                    std::move(reward), gamma, std::move(start));
}

TabularMdp make_chain(int n_states, double gamma, double slip) {
  if (n_states < 3) throw ConfigError("n_states", "chain needs >= 3 states");
  if (!(slip >= 0.0 && slip < 0.5)) {
    throw ConfigError("slip", "must lie in [0, 0.5)");
  }
  const int na = 2;
  std::vector<double> transition(static_cast<std::size_t>(n_states) * na * n_states,
                                 0.0);
  auto at = [&](int s, int a, int s2) -> double& {
    return transition[(static_cast<std::size_t>(s) * na + a) * n_states + s2];
  };
  for (int s = 0; s < n_states; ++s) {
    const int left = std::max(s - 1, 0);
    const int right = std::min(s + 1, n_states - 1);
    at(s, kLeft, left) += 1.0 - slip;
    at(s, kLeft, right) += slip;
    at(s, kRight, right) += 1.0 - slip;
    at(s, kRight, left) += slip;
  }
  std::vector<double> reward(static_cast<std::size_t>(n_states) * na, 0.0);
  reward[static_cast<std::size_t>(n_states - 1) * na + kRight] = 1.0;
  std::vector<double> start(n_states, 0.0);
  start[0] = 1.0;
  return TabularMdp(n_states, na, std::move(transition), std::move(reward),
                    gamma, std::move(start));
}

Trajectory sample_trajectory(const TabularMdp& mdp, const PolicyTable& policy,
                             int horizon, Rng& rng) {
  if (horizon < 1) throw UsageError("trajectory horizon must be >= 1");
  Trajectory traj;
  traj.steps.reserve(horizon);
  int s = rng.categorical(mdp.start_dist());
  for (int h = 0; h < horizon; ++h) {
    const int a = rng.categorical(policy.probs(s));
    traj.steps.push_back({s, a});
    if (h + 1 < horizon) s = rng.categorical(mdp.row(s, a));
  }
  return traj;
}

int default_geo_horizon(double gamma) {
  const double m = std::ceil(std::log(1e-3) / std::log(gamma));
  return std::max(1, static_cast<int>(m));
}

int sample_truncated_geometric(double gamma, int max_geo_horizon, Rng& rng) {
  if (max_geo_horizon < 1) throw UsageError("max_geo_horizon must be >= 1");
  // Inverse CDF of the geometric law conditioned on t < max_geo_horizon.
  const double kept = -std::expm1(max_geo_horizon * std::log(gamma));
  const double u = rng.uniform();
  const double t = std::floor(std::log1p(-u * kept) / std::log(gamma));
  return std::clamp(static_cast<int>(t), 0, max_geo_horizon - 1);
}

Step sample_visitation_pair(const TabularMdp& mdp, const PolicyTable& policy,
                            Rng& rng, int max_geo_horizon) {
  const int t = sample_truncated_geometric(mdp.gamma(), max_geo_horizon, rng);
  int s = rng.categorical(mdp.start_dist());
  int a = rng.categorical(policy.probs(s));
  for (int i = 0; i < t; ++i) {
    s = rng.categorical(mdp.row(s, a));
    a = rng.categorical(policy.probs(s));
  }
  return {s, a};
}

std::vector<Transition> collect_transitions(const TabularMdp& mdp,
                                            const PolicyTable& policy,
                                            const RewardFn& reward_fn, int n,
                                            int horizon, Rng& rng) {
  if (n < 1) throw UsageError("need at least one transition");
  if (horizon < 1) throw UsageError("rollout horizon must be >= 1");
  std::vector<Transition> out;
  out.reserve(n);
  while (static_cast<int>(out.size()) < n) {
    int s = rng.categorical(mdp.start_dist());
    for (int h = 0; h < horizon && static_cast<int>(out.size()) < n; ++h) {
      const int a = rng.categorical(policy.probs(s));
      const double r = reward_fn(s, a);
      if (!std::isfinite(r)) throw ModelError("reward model returned non-finite value");
      const int s_next = rng.categorical(mdp.row(s, a));
      out.push_back({s, a, r, s_next});
      s = s_next;
    }
  }
  return out;
}

std::vector<double> one_hot_state(int n_states, int s) {
  std::vector<double> x(n_states, 0.0);
  x[s] = 1.0;
  return x;
}

std::vector<double> one_hot_state_action(int n_states, int n_actions, int s,
                                         int a) {
  std::vector<double> x(static_cast<std::size_t>(n_states) + n_actions, 0.0);
  x[s] = 1.0;
  x[n_states + a] = 1.0;
  return x;
}

void write_mdp(std::ostream& out, const TabularMdp& mdp) {
  out << "n_states: " << mdp.n_states() << '\n'
      << "n_actions: " << mdp.n_actions() << '\n'
      << "gamma: " << format_double(mdp.gamma()) << '\n'
      << "start_dist: " << format_doubles(mdp.start_dist()) << '\n'
      << "transition: " << format_doubles(mdp.transition_data()) << '\n'
      << "true_reward: " << format_doubles(mdp.true_reward_data()) << '\n';
}

TabularMdp read_mdp(std::istream& in) {
  std::map<std::string, std::string> fields;
  for (auto& kv : read_key_values(in, ':')) fields[kv.key] = kv.value;
  static const char* kKeys[] = {"n_states",   "n_actions",  "gamma",
                                "start_dist", "transition", "true_reward"};
  for (const char* k : kKeys) {
    if (!fields.count(k)) throw ConfigError(k, "missing from MDP file");
  }
  for (const auto& [k, v] : fields) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys),
                     [&](const char* x) { return k == x; }) == std::end(kKeys)) {
      throw ConfigError(k, "unknown key in MDP file");
    }
  }
  return TabularMdp(static_cast<int>(parse_int(fields["n_states"], "n_states")),
                    static_cast<int>(parse_int(fields["n_actions"], "n_actions")),
                    parse_doubles(fields["transition"], "transition"),
                    parse_doubles(fields["true_reward"], "true_reward"),
                    parse_double(fields["gamma"], "gamma"),
                    parse_doubles(fields["start_dist"], "start_dist"));
}

void save_mdp(const std::string& path, const TabularMdp& mdp) {
  std::ofstream out(path);
  if (!out) throw ConfigError(path, "cannot open for writing");
  write_mdp(out, mdp);
}

TabularMdp load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open MDP file");
  return read_mdp(in);
}

}  // namespace rlhf
