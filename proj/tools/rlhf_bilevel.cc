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


// rlhf_bilevel: run, verify and sweep the penalty-based bilevel RLHF trainer.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "rlhf/errors.h"
#include "rlhf/experiment.h"
#include "rlhf/verify.h"

int main(int argc, char** argv) {
  CLI::App app{"Penalty-based bilevel RLHF on tabular MDPs"};
  app.require_subcommand(1);

  std::string run_config, run_out;
  CLI::App* run = app.add_subcommand("run", "Train one configuration");
  run->add_option("config", run_config, "Config file")->required();
  run->add_option("--out", run_out, "Output directory (default: output.dir)");

  std::string level = "fast";
  bool inject_fault = false;
  CLI::App* verify = app.add_subcommand("verify", "Run the oracle checks");
  verify->add_option("--level", level, "fast or full")
      ->check(CLI::IsMember({"fast", "full"}));
  verify->add_option_function<std::string>(
      "--inject-fault",
      [&](const std::string&) { inject_fault = true; },
      "Test hook; the only fault is backward-sign")
      ->check(CLI::IsMember({"backward-sign"}));

  std::string sweep_config, sweep_out, seeds;
  CLI::App* sweep = app.add_subcommand("sweep", "Train one config over seeds");
  sweep->add_option("config", sweep_config, "Config file")->required();
  sweep->add_option("--seeds", seeds, "Seed range a..b")->required();
  sweep->add_option("--out", sweep_out, "Output root directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? rlhf::kExitOk : rlhf::kExitBadConfig;
  }

  try {
    if (*run) return rlhf::cmd_run(run_config, run_out, std::cerr);
    if (*verify) {
      return rlhf::cmd_verify(rlhf::parse_verify_level(level), inject_fault,
                              std::cout);
    }
    if (*sweep) {
      return rlhf::cmd_sweep(sweep_config, rlhf::parse_seed_range(seeds),
                             sweep_out, std::cerr);
    }
  } catch (const rlhf::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return rlhf::kExitBadConfig;
  }
  return rlhf::kExitOk;
}
