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


#include "rlhf/config.h"

#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "rlhf/errors.h"
#include "rlhf/textio.h"

namespace rlhf {

std::string to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::kRandom: return "random";
    case EnvKind::kChain: return "chain";
    case EnvKind::kFixture: return "fixture";
  }
  return "random";
}

EnvKind parse_env_kind(const std::string& s) {
  if (s == "random") return EnvKind::kRandom;
  if (s == "chain") return EnvKind::kChain;
  if (s == "fixture") return EnvKind::kFixture;
  throw ConfigError("env.kind", "expected random, chain or fixture, got '" + s + "'");
}

namespace {

int as_int(const std::string& v, const std::string& key) {
  const long long x = parse_int(v, key);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    throw ConfigError(key, "integer out of range");
  }
  return static_cast<int>(x);
}

std::uint64_t as_seed(const std::string& v, const std::string& key) {
  const long long x = parse_int(v, key);
  if (x < 0) throw ConfigError(key, "seed must be >= 0");
  return static_cast<std::uint64_t>(x);
}

std::string format_widths(const Architecture& arch) {
  if (arch.hidden_widths.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < arch.hidden_widths.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(arch.hidden_widths[i]);
  }
  return out;
}

std::vector<int> parse_widths(const std::string& v, const std::string& key) {
  if (v == "none") return {};
  std::vector<int> widths;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const int w = as_int(trim(item), key);
    if (w < 1) throw ConfigError(key, "hidden widths must be >= 1");
    widths.push_back(w);
  }
  if (widths.empty()) throw ConfigError(key, "expected 'none' or comma-separated widths");
  return widths;
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : "default";
}

std::optional<double> parse_optional(const std::string& v, const std::string& key) {
  if (v == "default") return std::nullopt;
  return parse_double(v, key);
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define RLHF_INT_FIELD(name, member)                                          \
  Field {                                                                     \
    name,                                                                     \
        [](ExperimentConfig& c, const std::string& v, const std::string& k) { \
          c.member = as_int(v, k);                                            \
        },                                                                    \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }    \
  }
#define RLHF_DOUBLE_FIELD(name, member)                                       \
  Field {                                                                     \
    name,                                                                     \
        [](ExperimentConfig& c, const std::string& v, const std::string& k) { \
          c.member = parse_double(v, k);                                      \
        },                                                                    \
        [](const ExperimentConfig& c) { return format_double(c.member); }     \
  }
#define RLHF_BOOL_FIELD(name, member)                                         \
  Field {                                                                     \
    name,                                                                     \
        [](ExperimentConfig& c, const std::string& v, const std::string& k) { \
          c.member = parse_bool(v, k);                                        \
        },                                                                    \
        [](const ExperimentConfig& c) {                                       \
          return std::string(c.member ? "true" : "false");                    \
        }                                                                     \
  }
#define RLHF_ARCH_FIELD(name, member)                                         \
  Field {                                                                     \
    name,                                                                     \
        [](ExperimentConfig& c, const std::string& v, const std::string& k) { \
          c.member.hidden_widths = parse_widths(v, k);                        \
        },                                                                    \
        [](const ExperimentConfig& c) { return format_widths(c.member); }     \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      Field{"seed",
            [](ExperimentConfig& c, const std::string& v, const std::string& k) {
              c.train.seed = as_seed(v, k);
            },
            [](const ExperimentConfig& c) { return std::to_string(c.train.seed); }},
      RLHF_INT_FIELD("T", train.T),
      RLHF_INT_FIELD("K", train.K),
      RLHF_INT_FIELD("B", train.B),
      RLHF_INT_FIELD("n", train.n),
      RLHF_INT_FIELD("H", train.H),
      RLHF_DOUBLE_FIELD("sigma", train.sigma),
      RLHF_DOUBLE_FIELD("mu1", train.mu1),
      RLHF_DOUBLE_FIELD("mu2", train.mu2),
      RLHF_DOUBLE_FIELD("mu3", train.mu3),
      RLHF_DOUBLE_FIELD("norm_eps", train.norm_eps),
      Field{"hyper_variant",
            [](ExperimentConfig& c, const std::string& v, const std::string&) {
              c.train.hyper_variant = parse_hyper_variant(v);
            },
            [](const ExperimentConfig& c) { return to_string(c.train.hyper_variant); }},
      Field{"sampling_mode",
            [](ExperimentConfig& c, const std::string& v, const std::string&) {
              c.train.sampling_mode = parse_sampling_mode(v);
            },
            [](const ExperimentConfig& c) { return to_string(c.train.sampling_mode); }},
      RLHF_INT_FIELD("j_horizon", train.j_horizon),
      RLHF_INT_FIELD("max_geo_horizon", train.max_geo_horizon),
      RLHF_INT_FIELD("heldout_pairs", train.heldout_pairs),
      RLHF_BOOL_FIELD("coupled_j_samples", train.coupled_j_samples),
      RLHF_BOOL_FIELD("warm_start_chains", train.warm_start_chains),
      Field{"env.kind",
            [](ExperimentConfig& c, const std::string& v, const std::string&) {
              c.env.kind = parse_env_kind(v);
            },
            [](const ExperimentConfig& c) { return to_string(c.env.kind); }},
      Field{"env.seed",
            [](ExperimentConfig& c, const std::string& v, const std::string& k) {
              c.env.seed = v == "default" ? std::nullopt
                                          : std::optional<std::uint64_t>(as_seed(v, k));
            },
            [](const ExperimentConfig& c) {
              return c.env.seed ? std::to_string(*c.env.seed) : std::string("default");
            }},
      RLHF_INT_FIELD("env.n_states", env.n_states),
      RLHF_INT_FIELD("env.n_actions", env.n_actions),
      RLHF_DOUBLE_FIELD("env.gamma", env.gamma),
      RLHF_DOUBLE_FIELD("env.slip", env.slip),
      Field{"env.path",
            [](ExperimentConfig& c, const std::string& v, const std::string&) {
              c.env.path = v;
            },
            [](const ExperimentConfig& c) { return c.env.path; }},
      RLHF_INT_FIELD("critic.J_outer", train.critic_cfg.J_outer),
      RLHF_INT_FIELD("critic.L_inner", train.critic_cfg.L_inner),
      Field{"critic.step_beta",
            [](ExperimentConfig& c, const std::string& v, const std::string& k) {
              c.train.critic_cfg.step_beta = parse_optional(v, k);
            },
            [](const ExperimentConfig& c) {
              return format_optional(c.train.critic_cfg.step_beta);
            }},
      Field{"critic.radius",
            [](ExperimentConfig& c, const std::string& v, const std::string& k) {
              c.train.critic_cfg.radius = parse_optional(v, k);
            },
            [](const ExperimentConfig& c) {
              return format_optional(c.train.critic_cfg.radius);
            }},
      RLHF_ARCH_FIELD("model.policy_hidden", train.policy_arch),
      RLHF_ARCH_FIELD("model.reward_hidden", train.reward_arch),
      RLHF_ARCH_FIELD("model.critic_hidden", train.critic_arch),
      Field{"model.activation",
            [](ExperimentConfig& c, const std::string& v, const std::string& k) {
              Activation a;
              try {
                a = parse_activation(v);
              } catch (const Error& e) {
                throw ConfigError(k, e.what());
              }
              c.train.policy_arch.activation = a;
              c.train.reward_arch.activation = a;
              c.train.critic_arch.activation = a;
            },
            [](const ExperimentConfig& c) {
              return to_string(c.train.policy_arch.activation);
            }},
      RLHF_BOOL_FIELD("oracle.enabled", train.oracle_enabled),
      Field{"output.dir",
            [](ExperimentConfig& c, const std::string& v, const std::string&) {
              c.output_dir = v;
            },
            [](const ExperimentConfig& c) { return c.output_dir; }},
      RLHF_BOOL_FIELD("output.checkpoints", write_checkpoints),
  };
  return kFields;
}

#undef RLHF_INT_FIELD
#undef RLHF_DOUBLE_FIELD
#undef RLHF_BOOL_FIELD
#undef RLHF_ARCH_FIELD

void validate(const ExperimentConfig& cfg) {
  cfg.train.validate();
  const EnvConfig& e = cfg.env;
  if (!(e.gamma > 0.0 && e.gamma < 1.0)) {
    throw ConfigError("env.gamma", "must lie in (0, 1)");
  }
  switch (e.kind) {
    case EnvKind::kRandom:
      if (e.n_states < 2) throw ConfigError("env.n_states", "must be >= 2");
      if (e.n_actions < 2) throw ConfigError("env.n_actions", "must be >= 2");
      break;
    case EnvKind::kChain:
      if (e.n_states < 3) throw ConfigError("env.n_states", "chain needs >= 3 states");
      if (e.n_actions != 2) throw ConfigError("env.n_actions", "chain has exactly 2 actions");
      if (!(e.slip >= 0.0 && e.slip < 0.5)) {
        throw ConfigError("env.slip", "must lie in [0, 0.5)");
      }
      break;
    case EnvKind::kFixture:
      if (e.path.empty()) throw ConfigError("env.path", "required for env.kind = fixture");
      if (!std::filesystem::exists(e.path)) {
        throw ConfigError("env.path", "file not found: " + e.path);
      }
      break;
  }
}

}  // namespace

const std::vector<std::string>& required_config_keys() {
  static const std::vector<std::string> kRequired = {"env.kind", "T", "K", "B",
                                                      "n",        "H", "sigma"};
  return kRequired;
}

ExperimentConfig parse_config(std::istream& in, const std::string& base_dir) {
  const std::vector<KeyValue> entries = read_key_values(in, '=');
  ExperimentConfig cfg;
  std::set<std::string> seen;
  for (const KeyValue& kv : entries) {
    const Field* field = nullptr;
    for (const Field& f : fields()) {
      if (f.key == kv.key) {
        field = &f;
        break;
      }
    }
    if (!field) {
      throw ConfigError(kv.key, "unknown key (line " + std::to_string(kv.line) + ")");
    }
    field->set(cfg, kv.value, kv.key);
    seen.insert(kv.key);
  }
  for (const std::string& key : required_config_keys()) {
    if (!seen.count(key)) throw ConfigError(key, "required key missing");
  }
  if (cfg.env.kind == EnvKind::kFixture && !base_dir.empty() &&
      std::filesystem::path(cfg.env.path).is_relative()) {
    cfg.env.path = (std::filesystem::path(base_dir) / cfg.env.path).string();
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  return parse_config(in, std::filesystem::path(path).parent_path().string());
}

std::string echo_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) {
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return echo_config(a) == echo_config(b);
}

TabularMdp build_environment(const ExperimentConfig& cfg) {
  switch (cfg.env.kind) {
    case EnvKind::kRandom:
      return make_random_tabular(cfg.env_seed(), cfg.env.n_states, cfg.env.n_actions,
                                 cfg.env.gamma);
    case EnvKind::kChain:
      return make_chain(cfg.env.n_states, cfg.env.gamma, cfg.env.slip);
    case EnvKind::kFixture:
      return load_mdp(cfg.env.path);
  }
  throw ConfigError("env.kind", "unsupported environment");
}

}  // namespace rlhf
