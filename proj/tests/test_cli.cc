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


#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "rlhf/config.h"
#include "rlhf/errors.h"
#include "rlhf/experiment.h"
#include "rlhf/metrics.h"
#include "rlhf/verify.h"

using namespace rlhf;
namespace fs = std::filesystem;

namespace {

const char* kMinimal =
    "env.kind = random\n"
    "T = 2\nK = 1\nB = 8\nn = 16\nH = 3\nsigma = 0.3\n";

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rlhf_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "run.cfg";
  std::ofstream(p) << text;
  return p;
}

std::string smoke_text() { return slurp(RLHF_CONFIG_DIR "/smoke.cfg"); }

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("minimal config fills defaults") {
  const ExperimentConfig cfg = parse(kMinimal);
  CHECK(cfg.train.mu1 == 1.0);
  CHECK(cfg.train.mu2 == 1.0);
  CHECK(cfg.train.mu3 == 1.0);
  CHECK(cfg.train.norm_eps == 1e-12);
  CHECK(cfg.train.hyper_variant == HyperVariant::kPenaltyConsistent);
  CHECK(cfg.train.sampling_mode == SamplingMode::kPerChain);
  CHECK(cfg.env.kind == EnvKind::kRandom);
  CHECK(cfg.env_seed() == cfg.train.seed);
}

TEST_CASE("strict parsing names the offending key") {
  auto key_of = [](const std::string& text) {
    try {
      parse(text);
    } catch (const ConfigError& e) {
      return e.key();
    }
    return std::string("<accepted>");
  };
  CHECK(key_of(std::string(kMinimal) + "foo = 1\n") == "foo");
  CHECK(key_of(std::string(kMinimal) + "sigma = 0.5\n") == "sigma");
  CHECK(key_of("env.kind = random\nT = 2\nK = 1\nB = 8\nn = 16\nH = 3\n") == "sigma");
  CHECK(key_of(std::string(kMinimal) + "mu1 = -1\n") == "mu1");
  CHECK(key_of(std::string(kMinimal) + "hyper_variant = other\n") == "hyper_variant");
  CHECK(key_of(std::string(kMinimal) + "critic.L_inner = zero\n") == "critic.L_inner");
  CHECK(key_of(std::string(kMinimal) + "env.gamma = 1.5\n") == "env.gamma");
  CHECK(key_of(std::string(kMinimal) + "model.policy_hidden = 0\n") == "model.policy_hidden");
  CHECK(key_of("env.kind = fixture\nenv.path = /nonexistent.mdp\n"
               "T = 2\nK = 1\nB = 8\nn = 16\nH = 3\nsigma = 0.3\n") == "env.path");
}

TEST_CASE("echo round-trip is idempotent") {
  for (const std::string& text :
       {std::string(kMinimal), smoke_text(), slurp(RLHF_CONFIG_DIR "/acceptance.cfg"),
        slurp(RLHF_CONFIG_DIR "/chain.cfg")}) {
    const ExperimentConfig c = parse(text);
    const ExperimentConfig again = parse(echo_config(c));
    CHECK(again == c);
    CHECK(echo_config(again) == echo_config(c));
  }
}

TEST_CASE("environments built from config") {
  ExperimentConfig c = parse(kMinimal);
  CHECK(build_environment(c) == make_random_tabular(0, 5, 2, 0.9));
  c.env.kind = EnvKind::kChain;
  c.env.slip = 0.2;
  CHECK(build_environment(c) == make_chain(5, 0.9, 0.2));
  c.env.kind = EnvKind::kFixture;
  c.env.path = RLHF_TEST_DATA_DIR "/mdp_seed0_5x2.txt";
  CHECK(build_environment(c) == make_random_tabular(0, 5, 2, 0.9));
}

TEST_CASE("metrics rows round-trip exactly") {
  RunRecord a{3, 0.1 + 0.2, std::nan(""), 1.0 / 3.0, 0.875, 1e-300, 12345.678901234567};
  std::stringstream ss;
  MetricsWriter w(ss);
  w.write(a);
  CHECK(ss.str().rfind(metrics_header() + "\n", 0) == 0);
  const std::vector<RunRecord> back = read_metrics(ss);
  REQUIRE(back.size() == 1);
  CHECK(back[0].t == 3);
  CHECK(back[0].upper_value_est == a.upper_value_est);
  CHECK(std::isnan(back[0].upper_value_exact));
  CHECK(back[0].j_true_exact == a.j_true_exact);
  CHECK(back[0].grad_norm_dt == a.grad_norm_dt);
  CHECK(back[0].bellman_residual == a.bellman_residual);
  std::istringstream bad("t,wrong\n");
  CHECK_THROWS_AS(read_metrics(bad), ConfigError);
}

TEST_CASE("run: smoke config writes one row and every artifact") {
  const fs::path dir = scratch_dir("smoke");
  const fs::path cfg = write_config(dir, smoke_text());
  std::ostringstream log;
  REQUIRE(cmd_run(cfg.string(), (dir / "out").string(), log) == kExitOk);
  const std::string metrics = slurp(dir / "out" / "metrics.csv");
  CHECK(count_lines(metrics) == 2);
  CHECK(slurp(dir / "out" / "config.txt") == smoke_text());
  CHECK(load_config((dir / "out" / "config.resolved").string()) == load_config(cfg.string()));
  for (const char* f : {"reward.ckpt", "policy.ckpt", "penalized_policy.ckpt"}) {
    CHECK(fs::exists(dir / "out" / f));
  }
}

TEST_CASE("run: same config twice gives byte-identical metrics") {
  const fs::path dir = scratch_dir("determinism");
  const fs::path cfg = write_config(
      dir, "env.kind = random\nT = 3\nK = 2\nB = 8\nn = 32\nH = 3\nsigma = 0.3\n"
           "critic.J_outer = 2\ncritic.L_inner = 20\nheldout_pairs = 40\n"
           "oracle.enabled = true\n");
  std::ostringstream log;
  REQUIRE(cmd_run(cfg.string(), (dir / "a").string(), log) == kExitOk);
  REQUIRE(cmd_run(cfg.string(), (dir / "b").string(), log) == kExitOk);
  CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));
}

TEST_CASE("run: exit codes") {
  const fs::path dir = scratch_dir("exit_codes");
  std::ostringstream log;
  SUBCASE("bad config exits 2 with one diagnostic line") {
    const fs::path cfg = write_config(dir, std::string(kMinimal) + "foo = 1\n");
    CHECK(cmd_run(cfg.string(), (dir / "out").string(), log) == kExitBadConfig);
    CHECK(count_lines(log.str()) == 1);
    CHECK(log.str().find("foo") != std::string::npos);
  }
  SUBCASE("missing file exits 2") {
    CHECK(cmd_run((dir / "absent.cfg").string(), (dir / "out").string(), log) ==
          kExitBadConfig);
  }
  SUBCASE("numeric failure exits 3 after the partial metrics are written") {
    std::string text = smoke_text();
    text.replace(text.find("sigma = 0.3"), 11, "sigma = 2.3e-308");
    text.replace(text.find("T = 1"), 5, "T = 4");
    const fs::path cfg = write_config(dir, text);
    CHECK(cmd_run(cfg.string(), (dir / "out").string(), log) == kExitNumericFailure);
    const std::string metrics = slurp(dir / "out" / "metrics.csv");
    CHECK(metrics.rfind(metrics_header(), 0) == 0);
    CHECK(count_lines(metrics) == 2);
  }
}

TEST_CASE("sweep") {
  CHECK(parse_seed_range("3..5").first == 3);
  CHECK(parse_seed_range("3..5").last == 5);
  CHECK(parse_seed_range("7").last == 7);
  CHECK_THROWS_AS(parse_seed_range("5..3"), ConfigError);
  CHECK_THROWS_AS(parse_seed_range("a..b"), ConfigError);

  const fs::path dir = scratch_dir("sweep");
  const fs::path cfg = write_config(dir, smoke_text());
  ::setenv("RLHF_BILEVEL_THREADS", "2", 1);
  CHECK(sweep_thread_count() == 2);
  std::ostringstream log;
  CHECK(cmd_sweep(cfg.string(), parse_seed_range("0..2"), (dir / "out").string(), log) ==
        kExitOk);
  ::unsetenv("RLHF_BILEVEL_THREADS");
  for (int s = 0; s <= 2; ++s) {
    CHECK(fs::exists(dir / "out" / ("seed_" + std::to_string(s)) / "metrics.csv"));
  }
  // The seed replaces the master seed, so runs differ.
  CHECK(slurp(dir / "out" / "seed_0" / "metrics.csv") !=
        slurp(dir / "out" / "seed_1" / "metrics.csv"));
  // A sweep member reproduces the single run with that seed.
  std::string text = smoke_text();
  text.replace(text.find("seed = 0"), 8, "seed = 2");
  const fs::path single = dir / "single.cfg";
  std::ofstream(single) << text;
  CHECK(cmd_run(single.string(), (dir / "single").string(), log) == kExitOk);
  CHECK(slurp(dir / "single" / "metrics.csv") ==
        slurp(dir / "out" / "seed_2" / "metrics.csv"));
}

TEST_CASE("verify") {
  CHECK(parse_verify_level("fast") == VerifyLevel::kFast);
  CHECK(parse_verify_level("full") == VerifyLevel::kFull);
  CHECK_THROWS_AS(parse_verify_level("medium"), UsageError);
  SUBCASE("fast level passes on a clean build") {
    std::ostringstream out;
    CHECK(cmd_verify(VerifyLevel::kFast, false, out) == 0);
  }
  SUBCASE("sign-flipped backward fails the autodiff check") {
    std::ostringstream out;
    CHECK(cmd_verify(VerifyLevel::kFast, true, out) == 1);
    const std::string text = out.str();
    const auto failing = text.find("failing checks:");
    REQUIRE(failing != std::string::npos);
    CHECK(text.find("autodiff", failing) != std::string::npos);
    CHECK_FALSE(backward_sign_fault());
  }
}
