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

#ifndef RLHF_ENV_H_
#define RLHF_ENV_H_

// Finite synthetic MDPs with a hidden ground-truth reward, plus the samplers
// used by training: trajectories, replay transitions and draws from the
// discounted state-action visitation distribution.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace rlhf {

class Rng;

class TabularMdp {
 public:
  TabularMdp() = default;
  // `transition` is [s][a][s'] row-major, `true_reward` is [s][a]. Throws
  // ConfigError if any invariant fails.
  TabularMdp(int n_states, int n_actions, std::vector<double> transition,
             std::vector<double> true_reward, double gamma,
             std::vector<double> start_dist);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  int n_pairs() const { return n_states_ * n_actions_; }
  double gamma() const { return gamma_; }

  // Next-state distribution for (s, a).
  std::span<const double> row(int s, int a) const {
    return {transition_.data() +
                (static_cast<std::size_t>(s) * n_actions_ + a) * n_states_,
            static_cast<std::size_t>(n_states_)};
  }
  double transition(int s, int a, int s_next) const { return row(s, a)[s_next]; }
  double true_reward(int s, int a) const {
    return true_reward_[static_cast<std::size_t>(s) * n_actions_ + a];
  }
  std::span<const double> start_dist() const { return start_dist_; }
  const std::vector<double>& transition_data() const { return transition_; }
  const std::vector<double>& true_reward_data() const { return true_reward_; }

  bool operator==(const TabularMdp&) const = default;

 private:
  int n_states_ = 0;
  int n_actions_ = 0;
  std::vector<double> transition_;
  std::vector<double> true_reward_;
  double gamma_ = 0.0;
  std::vector<double> start_dist_;
};

struct Step {
  int state = 0;
  int action = 0;
  bool operator==(const Step&) const = default;
};

struct Trajectory {
  std::vector<Step> steps;

  std::size_t length() const { return steps.size(); }
  bool operator==(const Trajectory&) const = default;
};

struct Transition {
  int s = 0;
  int a = 0;
  double r = 0.0;
  int s_next = 0;
};

// Action probabilities of a fixed policy for every state, [s][a] row-major.
// Evaluating the policy once per state lets the samplers draw long rollouts
// without re-running the network.
class PolicyTable {
 public:
  PolicyTable() = default;
  // Throws ModelError if a row is negative or sums away from 1 by > 1e-9.
  PolicyTable(int n_states, int n_actions, std::vector<double> probs);

  // Tabulates `dist` over all states.
  static PolicyTable from_fn(int n_states, int n_actions,
                             const std::function<std::vector<double>(int)>& dist);
  static PolicyTable uniform(int n_states, int n_actions);

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  std::span<const double> probs(int s) const {
    return {probs_.data() + static_cast<std::size_t>(s) * n_actions_,
            static_cast<std::size_t>(n_actions_)};
  }
  double prob(int s, int a) const { return probs(s)[a]; }

 private:
  int n_states_ = 0;
  int n_actions_ = 0;
  std::vector<double> probs_;
};

using RewardFn = std::function<double(int state, int action)>;

// Random MDP: transition rows and the start distribution from a symmetric
// Dirichlet(1), true rewards i.i.d. uniform on [0, 1]. Deterministic in seed.
TabularMdp make_random_tabular(std::uint64_t seed, int n_states, int n_actions,
                               double gamma);

// Chain with actions {0: left, 1: right}. The intended move happens with
// probability 1 - slip, the opposite move otherwise; moves off either end
// stay put. Reward 1 at (rightmost, right), start at state 0.
TabularMdp make_chain(int n_states, double gamma, double slip);

inline constexpr int kLeft = 0;
inline constexpr int kRight = 1;

// s0 ~ start_dist, a_t ~ policy(s_t), s_{t+1} ~ P(s_t, a_t); exactly H steps.
Trajectory sample_trajectory(const TabularMdp& mdp, const PolicyTable& policy,
                             int horizon, Rng& rng);

// ceil(ln(1e-3) / ln(gamma)), at least 1: the truncation point at which the
// discarded geometric mass is at most 1e-3.
int default_geo_horizon(double gamma);

// Index t with P(t = k) proportional to (1 - gamma) gamma^k on
// {0, ..., max_geo_horizon - 1}.
int sample_truncated_geometric(double gamma, int max_geo_horizon, Rng& rng);

// Draw from the discounted visitation distribution: roll out t steps with t
// from the truncated geometric above and return (s_t, a_t).
Step sample_visitation_pair(const TabularMdp& mdp, const PolicyTable& policy,
                            Rng& rng, int max_geo_horizon);

// n replay tuples gathered from length-H rollouts; r is reward_fn(s, a).
// Throws ModelError if reward_fn returns a non-finite value.
std::vector<Transition> collect_transitions(const TabularMdp& mdp,
                                            const PolicyTable& policy,
                                            const RewardFn& reward_fn, int n,
                                            int horizon, Rng& rng);

// One-hot featurizations shared by every network.
std::vector<double> one_hot_state(int n_states, int s);
std::vector<double> one_hot_state_action(int n_states, int n_actions, int s,
                                         int a);

// Fixture file format: one "key: values" line per field, numbers printed
// with 17 significant digits so reading back is exact.
void write_mdp(std::ostream& out, const TabularMdp& mdp);
TabularMdp read_mdp(std::istream& in);
void save_mdp(const std::string& path, const TabularMdp& mdp);
TabularMdp load_mdp(const std::string& path);

}  // namespace rlhf

#endif  // RLHF_ENV_H_
