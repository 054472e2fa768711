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

#include "rlhf/models.h"

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "rlhf/errors.h"
#include "rlhf/textio.h"

namespace rlhf {

namespace {

MlpSpec make_spec(int in, int out, const Architecture& arch,
                  OutputTransform transform) {
  MlpSpec spec{in, arch.hidden_widths, arch.activation, out, transform};
  spec.validate();
  return spec;
}

void check_params(const MlpSpec& spec, const ParamVec& params) {
  if (params.size() != spec.param_count()) {
    throw DimensionError("parameter vector does not match model spec");
  }
}

void check_state(int n_states, int s) {
  if (s < 0 || s >= n_states) throw DimensionError("state index out of range");
}

void check_pair(int n_states, int n_actions, int s, int a) {
  check_state(n_states, s);
  if (a < 0 || a >= n_actions) throw DimensionError("action index out of range");
}

bool joint_encoding(const Architecture& arch) { return arch.hidden_widths.empty(); }

int sa_input_dim(int ns, int na, const Architecture& arch) {
  return joint_encoding(arch) ? ns * na : ns + na;
}

Tensor sa_input(const MlpSpec& spec, int ns, int na, int s, int a) {
  return Tensor::vector(state_action_features(spec, ns, na, s, a));
}

ValueGrad scalar_eval_grad(const MlpSpec& spec, const ParamVec& params,
                           const Tensor& input) {
  auto [out, tape] = mlp_forward(spec, params, input);
  ParamVec grad = backward(tape, Tensor::vector({1.0}));
  return {out[0], std::move(grad)};
}

}  // namespace

std::vector<double> state_action_features(const MlpSpec& spec, int n_states,
                                          int n_actions, int s, int a) {
  if (spec.hidden_widths.empty()) {
    std::vector<double> x(static_cast<std::size_t>(n_states) * n_actions, 0.0);
    x[static_cast<std::size_t>(s) * n_actions + a] = 1.0;
    return x;
  }
  return one_hot_state_action(n_states, n_actions, s, a);
}

MlpSpec policy_spec(int n_states, int n_actions, const Architecture& arch) {
  return make_spec(n_states, n_actions, arch, OutputTransform::kLogSoftmax);
}

MlpSpec reward_spec(int n_states, int n_actions, const Architecture& arch) {
  return make_spec(sa_input_dim(n_states, n_actions, arch), 1, arch,
                   OutputTransform::kSigmoid);
}

MlpSpec critic_spec(int n_states, int n_actions, const Architecture& arch) {
  return make_spec(sa_input_dim(n_states, n_actions, arch), 1, arch,
                   OutputTransform::kIdentity);
}

PolicyModel make_policy(int n_states, int n_actions, const Architecture& arch,
                        ParamVec params) {
  PolicyModel p{policy_spec(n_states, n_actions, arch), std::move(params)};
  check_params(p.spec, p.params);
  return p;
}

RewardModel make_reward(int n_states, int n_actions, const Architecture& arch,
                        ParamVec params) {
  RewardModel r{reward_spec(n_states, n_actions, arch), std::move(params),
                n_states, n_actions};
  check_params(r.spec, r.params);
  return r;
}

CriticModel make_critic(int n_states, int n_actions, const Architecture& arch,
                        ParamVec params) {
  CriticModel c{critic_spec(n_states, n_actions, arch), params,
                params, n_states, n_actions};
  check_params(c.spec, c.params);
  return c;
}

std::vector<double> policy_dist(const PolicyModel& policy, int s) {
  check_state(policy.n_states(), s);
  const Tensor logp = mlp_eval(
      policy.spec, policy.params,
      Tensor::vector(one_hot_state(policy.n_states(), s)));
  std::vector<double> p(logp.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(logp[i]);
  return p;
}

ParamVec policy_score(const PolicyModel& policy, int s, int a) {
  check_pair(policy.n_states(), policy.n_actions(), s, a);
  auto [out, tape] = mlp_forward(
      policy.spec, policy.params,
      Tensor::vector(one_hot_state(policy.n_states(), s)));
  Tensor cot = Tensor::zeros({out.size()});
  cot[a] = 1.0;
  return backward(tape, cot);
}

std::vector<ParamVec> policy_scores(const PolicyModel& policy, int s) {
  check_state(policy.n_states(), s);
  auto [out, tape] = mlp_forward(
      policy.spec, policy.params,
      Tensor::vector(one_hot_state(policy.n_states(), s)));
  std::vector<ParamVec> scores;
  scores.reserve(out.size());
  for (std::size_t a = 0; a < out.size(); ++a) {
    Tape copy = tape;
    Tensor cot = Tensor::zeros({out.size()});
    cot[a] = 1.0;
    scores.push_back(backward(copy, cot));
  }
  return scores;
}

PolicyTable policy_table(const PolicyModel& policy) {
  return PolicyTable::from_fn(policy.n_states(), policy.n_actions(),
                              [&](int s) { return policy_dist(policy, s); });
}

ValueGrad reward_eval_grad(const RewardModel& reward, int s, int a) {
  check_pair(reward.n_states, reward.n_actions, s, a);
  return scalar_eval_grad(reward.spec, reward.params,
                          sa_input(reward.spec, reward.n_states, reward.n_actions, s, a));
}

double reward_value(const RewardModel& reward, int s, int a) {
  check_pair(reward.n_states, reward.n_actions, s, a);
  return mlp_eval(reward.spec, reward.params,
                  sa_input(reward.spec, reward.n_states, reward.n_actions, s, a))[0];
}

ValueGrad critic_eval_grad(const CriticModel& critic, int s, int a) {
  check_pair(critic.n_states, critic.n_actions, s, a);
  return scalar_eval_grad(critic.spec, critic.params,
                          sa_input(critic.spec, critic.n_states, critic.n_actions, s, a));
}

double critic_value(const CriticModel& critic, int s, int a) {
  check_pair(critic.n_states, critic.n_actions, s, a);
  return mlp_eval(critic.spec, critic.params,
                  sa_input(critic.spec, critic.n_states, critic.n_actions, s, a))[0];
}

ScoreTable score_table(const PolicyModel& policy) {
  ScoreTable t{policy.n_states(), policy.n_actions(), {}};
  t.scores.reserve(static_cast<std::size_t>(t.n_states) * t.n_actions);
  for (int s = 0; s < t.n_states; ++s) {
    for (ParamVec& g : policy_scores(policy, s)) t.scores.push_back(std::move(g));
  }
  return t;
}

namespace {

template <typename Model, typename EvalGrad, typename Eval>
ValueGradTable tabulate(const Model& m, bool with_grads, EvalGrad eval_grad,
                        Eval eval) {
  ValueGradTable t{m.n_states, m.n_actions, {}, {}};
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      if (with_grads) {
        ValueGrad vg = eval_grad(m, s, a);
        t.values.push_back(vg.value);
        t.grads.push_back(std::move(vg.grad));
      } else {
        t.values.push_back(eval(m, s, a));
      }
    }
  }
  return t;
}

}  // namespace

ValueGradTable reward_table(const RewardModel& reward, bool with_grads) {
  return tabulate(reward, with_grads, reward_eval_grad, reward_value);
}

ValueGradTable critic_table(const CriticModel& critic, bool with_grads) {
  return tabulate(critic, with_grads, critic_eval_grad, critic_value);
}

void write_checkpoint(std::ostream& out, const std::string& kind,
                      const MlpSpec& spec, const ParamVec& params) {
  std::string widths;
  for (std::size_t i = 0; i < spec.hidden_widths.size(); ++i) {
    if (i) widths += ' ';
    widths += std::to_string(spec.hidden_widths[i]);
  }
  out << "kind: " << kind << '\n'
      << "input_dim: " << spec.input_dim << '\n'
      << "hidden_widths: " << widths << '\n'
      << "activation: " << to_string(spec.activation) << '\n'
      << "output_dim: " << spec.output_dim << '\n'
      << "output_transform: " << to_string(spec.output_transform) << '\n'
      << "params: " << format_doubles(params.span()) << '\n';
}

Checkpoint read_checkpoint(std::istream& in) {
  std::map<std::string, std::string> f;
  for (auto& kv : read_key_values(in, ':')) f[kv.key] = kv.value;
  for (const char* k : {"kind", "input_dim", "hidden_widths", "activation",
                        "output_dim", "output_transform", "params"}) {
    if (!f.count(k)) throw ConfigError(k, "missing from checkpoint");
  }
  Checkpoint c;
  c.kind = f["kind"];
  c.spec.input_dim = static_cast<int>(parse_int(f["input_dim"], "input_dim"));
  std::istringstream ws(f["hidden_widths"]);
  std::string tok;
  while (ws >> tok) {
    c.spec.hidden_widths.push_back(static_cast<int>(parse_int(tok, "hidden_widths")));
  }
  c.spec.activation = parse_activation(f["activation"]);
  c.spec.output_dim = static_cast<int>(parse_int(f["output_dim"], "output_dim"));
  c.spec.output_transform = parse_output_transform(f["output_transform"]);
  c.spec.validate();
  c.params = ParamVec(parse_doubles(f["params"], "params"));
  check_params(c.spec, c.params);
  return c;
}

}  // namespace rlhf
