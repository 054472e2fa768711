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


#ifndef RLHF_EXPERIMENT_H_
#define RLHF_EXPERIMENT_H_

#include <cstdint>
#include <iosfwd>
#include <string>

#include "rlhf/config.h"

namespace rlhf {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitBadConfig = 2;
inline constexpr int kExitNumericFailure = 3;

// Runs one training job and writes into `out_dir`:
//   metrics.csv        one row per outer iteration, flushed as it goes
//   config.txt         the config text exactly as given
//   config.resolved    every key with its resolved value
//   reward.ckpt, policy.ckpt, penalized_policy.ckpt
// Returns kExitNumericFailure (after the partial metrics are on disk) when
// training hits a non-finite value.
int run_experiment(const ExperimentConfig& cfg, const std::string& config_text,
                   const std::string& out_dir, std::ostream& log);

// Loads `config_path` and runs it. An empty `out_dir` falls back to
// output.dir from the config. Config problems return kExitBadConfig with a
// single diagnostic line on `log`.
int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::ostream& log);

struct SeedRange {
  std::uint64_t first = 0;
  std::uint64_t last = 0;
};

// "a..b" with a <= b, or a single seed "a".
SeedRange parse_seed_range(const std::string& text);

// Worker count for sweeps: RLHF_BILEVEL_THREADS when set to a positive
// integer, else the hardware concurrency (at least 1).
int sweep_thread_count();

// One run per seed into out_dir/seed_<s>; the seed replaces the config's
// master seed. Returns the largest exit code over all runs.
int cmd_sweep(const std::string& config_path, const SeedRange& seeds,
              const std::string& out_dir, std::ostream& log);

}  // namespace rlhf

#endif  // RLHF_EXPERIMENT_H_
