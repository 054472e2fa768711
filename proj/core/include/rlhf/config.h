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


#ifndef RLHF_CONFIG_H_
#define RLHF_CONFIG_H_

// Experiment configuration: a flat "key = value" text file with dotted keys
// for nested groups (env.*, critic.*, model.*, oracle.*, output.*). Blank
// lines and lines starting with '#' are ignored.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rlhf/bilevel.h"
#include "rlhf/env.h"

namespace rlhf {

enum class EnvKind { kRandom, kChain, kFixture };

std::string to_string(EnvKind kind);
EnvKind parse_env_kind(const std::string& s);

struct EnvConfig {
  EnvKind kind = EnvKind::kRandom;
  // Seed of the random MDP generator; defaults to the master seed.
  std::optional<std::uint64_t> seed;
  int n_states = 5;
  int n_actions = 2;
  double gamma = 0.9;
  double slip = 0.1;  // chain only
  std::string path;   // fixture only
};

struct ExperimentConfig {
  EnvConfig env;
  TrainConfig train;
  std::string output_dir;  // optional default for --out
  bool write_checkpoints = true;

  std::uint64_t env_seed() const { return env.seed.value_or(train.seed); }
};

// Keys that must be present in every config file.
const std::vector<std::string>& required_config_keys();

// Strict parse. Unknown, duplicate, malformed or out-of-range entries throw
// ConfigError naming the key. Relative fixture paths resolve against
// `base_dir` when it is non-empty.
ExperimentConfig parse_config(std::istream& in, const std::string& base_dir = "");
ExperimentConfig load_config(const std::string& path);

// Every key with its resolved value, in a fixed order. Parsing the echo gives
// back an equal config.
std::string echo_config(const ExperimentConfig& cfg);

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

// Environment described by the config.
TabularMdp build_environment(const ExperimentConfig& cfg);

}  // namespace rlhf

#endif  // RLHF_CONFIG_H_
