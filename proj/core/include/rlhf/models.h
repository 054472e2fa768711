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

#ifndef RLHF_MODELS_H_
#define RLHF_MODELS_H_

// The three parameterized function families: softmax policy, bounded reward
// and critic. States and actions enter every network as one-hot vectors.

#include <iosfwd>
#include <string>
#include <vector>

#include "rlhf/diffcore.h"
#include "rlhf/env.h"

namespace rlhf {

// Hidden layer widths; empty means the tabular (single affine layer) form.
struct Architecture {
  std::vector<int> hidden_widths;
  Activation activation = Activation::kTanh;

  static Architecture tabular() { return {}; }
  static Architecture mlp(int width) { return {{width}, Activation::kTanh}; }
  bool operator==(const Architecture&) const = default;
};

struct PolicyModel {
  MlpSpec spec;
  ParamVec params;

  int n_states() const { return spec.input_dim; }
  int n_actions() const { return spec.output_dim; }
};

struct RewardModel {
  MlpSpec spec;
  ParamVec params;
  int n_states = 0;
  int n_actions = 0;
};

struct CriticModel {
  MlpSpec spec;
  ParamVec params;
  // Projection center used while fitting.
  ParamVec anchor;
  int n_states = 0;
  int n_actions = 0;
};

// Input encoding of a state-action pair for a reward or critic network. A
// network with no hidden layer sees a one-hot over the n_states * n_actions
// pairs, so it is an exact table; deeper networks see the concatenation of
// the state and action one-hots.
std::vector<double> state_action_features(const MlpSpec& spec, int n_states,
                                          int n_actions, int s, int a);

MlpSpec policy_spec(int n_states, int n_actions, const Architecture& arch);
MlpSpec reward_spec(int n_states, int n_actions, const Architecture& arch);
MlpSpec critic_spec(int n_states, int n_actions, const Architecture& arch);

PolicyModel make_policy(int n_states, int n_actions, const Architecture& arch,
                        ParamVec params);
RewardModel make_reward(int n_states, int n_actions, const Architecture& arch,
                        ParamVec params);
// The anchor starts equal to `params`.
CriticModel make_critic(int n_states, int n_actions, const Architecture& arch,
                        ParamVec params);

// Action probabilities pi(. | s).
std::vector<double> policy_dist(const PolicyModel& policy, int s);
// Gradient of log pi(a | s) with respect to the policy parameters.
ParamVec policy_score(const PolicyModel& policy, int s, int a);
// Scores of every action at s from a single forward pass.
std::vector<ParamVec> policy_scores(const PolicyModel& policy, int s);
PolicyTable policy_table(const PolicyModel& policy);

struct ValueGrad {
  double value = 0.0;
  ParamVec grad;
};

// r_phi(s, a) in (0, 1) and its parameter gradient.
ValueGrad reward_eval_grad(const RewardModel& reward, int s, int a);
double reward_value(const RewardModel& reward, int s, int a);

// Q_theta(s, a) and its parameter gradient.
ValueGrad critic_eval_grad(const CriticModel& critic, int s, int a);
double critic_value(const CriticModel& critic, int s, int a);

// Per-(s, a) caches. Every estimator in this library evaluates the models on
// one-hot inputs only, so tabulating the finite input set once per parameter
// value gives the same numbers as evaluating per sample.
struct ScoreTable {
  int n_states = 0;
  int n_actions = 0;
  std::vector<ParamVec> scores;  // [s][a]
  const ParamVec& at(int s, int a) const {
    return scores[static_cast<std::size_t>(s) * n_actions + a];
  }
};
ScoreTable score_table(const PolicyModel& policy);

struct ValueGradTable {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> values;  // [s][a]
  std::vector<ParamVec> grads;  // [s][a]; empty when built without gradients
  double value(int s, int a) const {
    return values[static_cast<std::size_t>(s) * n_actions + a];
  }
  const ParamVec& grad(int s, int a) const {
    return grads[static_cast<std::size_t>(s) * n_actions + a];
  }
};
ValueGradTable reward_table(const RewardModel& reward, bool with_grads);
ValueGradTable critic_table(const CriticModel& critic, bool with_grads);

// Checkpoint format: the MlpSpec descriptor followed by the flat parameters,
// "key: value" per line with exact float formatting.
void write_checkpoint(std::ostream& out, const std::string& kind,
                      const MlpSpec& spec, const ParamVec& params);
struct Checkpoint {
  std::string kind;
  MlpSpec spec;
  ParamVec params;
};
Checkpoint read_checkpoint(std::istream& in);

}  // namespace rlhf

#endif  // RLHF_MODELS_H_
