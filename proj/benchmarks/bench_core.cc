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


#include <benchmark/benchmark.h>

#include "rlhf/bilevel.h"
#include "rlhf/critic_fit.h"
#include "rlhf/diffcore.h"
#include "rlhf/oracle.h"
#include "rlhf/rng.h"

namespace {

using namespace rlhf;

MlpSpec bench_spec(int width) {
  MlpSpec spec;
  spec.input_dim = 7;
  spec.hidden_widths = {width, width};
  spec.output_dim = 2;
  spec.output_transform = OutputTransform::kLogSoftmax;
  return spec;
}

void BM_MlpForward(benchmark::State& state) {
  const MlpSpec spec = bench_spec(static_cast<int>(state.range(0)));
  Rng rng(0);
  const ParamVec params = init_params(spec, InitScheme::kFanIn, rng);
  const Tensor x = Tensor::vector({1, 0, 0, 0, 0, 1, 0});
  for (auto _ : state) benchmark::DoNotOptimize(mlp_eval(spec, params, x));
}
BENCHMARK(BM_MlpForward)->Arg(16)->Arg(64);

void BM_MlpForwardBackward(benchmark::State& state) {
  const MlpSpec spec = bench_spec(static_cast<int>(state.range(0)));
  Rng rng(0);
  const ParamVec params = init_params(spec, InitScheme::kFanIn, rng);
  const Tensor x = Tensor::vector({1, 0, 0, 0, 0, 1, 0});
  const Tensor cot = Tensor::vector({1.0, 0.0});
  for (auto _ : state) {
    auto fwd = mlp_forward(spec, params, x);
    benchmark::DoNotOptimize(backward(fwd.tape, cot));
  }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(16)->Arg(64);

void BM_FitQ(benchmark::State& state) {
  const TabularMdp mdp = make_random_tabular(0, 5, 2, 0.9);
  const Architecture arch = state.range(0) == 0 ? Architecture::tabular()
                                                : Architecture::mlp(64);
  Rng rng(0);
  const PolicyTable pt = PolicyTable::uniform(5, 2);
  const ReplayBuffer buffer{
      collect_transitions(mdp, pt, true_reward_fn(mdp), 256, 5, rng)};
  const CriticModel init = make_critic(
      5, 2, arch, init_params(critic_spec(5, 2, arch), InitScheme::kFanIn, rng));
  CriticFitConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_q(0.9, buffer, pt, init, cfg, rng));
  }
}
BENCHMARK(BM_FitQ)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ExactPolicyEval(benchmark::State& state) {
  const int ns = static_cast<int>(state.range(0));
  const TabularMdp mdp = make_random_tabular(0, ns, 2, 0.9);
  const PolicyTable pt = PolicyTable::uniform(ns, 2);
  const RewardFn rf = true_reward_fn(mdp);
  for (auto _ : state) benchmark::DoNotOptimize(exact_policy_eval(mdp, pt, rf));
}
BENCHMARK(BM_ExactPolicyEval)->Arg(5)->Arg(50);

void BM_ExactPrefObjective(benchmark::State& state) {
  const int horizon = static_cast<int>(state.range(0));
  const TabularMdp mdp = make_random_tabular(0, 5, 2, 0.9);
  const Architecture tab = Architecture::tabular();
  Rng rng(0);
  const PolicyModel policy = make_policy(
      5, 2, tab, init_params(policy_spec(5, 2, tab), InitScheme::kFanIn, rng));
  const RewardModel reward = make_reward(
      5, 2, tab, init_params(reward_spec(5, 2, tab), InitScheme::kFanIn, rng));
  for (auto _ : state) {
    benchmark::DoNotOptimize(exact_pref_objective(mdp, policy, reward, horizon));
  }
}
BENCHMARK(BM_ExactPrefObjective)->Arg(2)->Arg(3)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
