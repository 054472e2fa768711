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


#include "rlhf/experiment.h"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <vector>

#include "rlhf/bilevel.h"
#include "rlhf/errors.h"
#include "rlhf/metrics.h"
#include "rlhf/models.h"
#include "rlhf/textio.h"

namespace rlhf {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("output", "cannot write " + path.string());
  out << text;
}

void save_checkpoint(const fs::path& path, const std::string& kind,
                     const MlpSpec& spec, const ParamVec& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("output", "cannot write " + path.string());
  write_checkpoint(out, kind, spec, params);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, const std::string& config_text,
                   const std::string& out_dir, std::ostream& log) {
  const fs::path dir(out_dir);
  TabularMdp mdp = [&] {
    try {
      return build_environment(cfg);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError("env", e.what());
    }
  }();
  fs::create_directories(dir);
  write_file(dir / "config.txt", config_text);
  write_file(dir / "config.resolved", echo_config(cfg));

  std::ofstream metrics_file(dir / "metrics.csv", std::ios::binary);
  if (!metrics_file) throw ConfigError("output", "cannot write metrics.csv");
  MetricsWriter writer(metrics_file);
  TrainResult result;
  try {
    result = train(mdp, cfg.train, [&](const RunRecord& r) { writer.write(r); });
  } catch (const NumericError& e) {
    log << "numeric failure: " << e.what() << "\n";
    return kExitNumericFailure;
  } catch (const ModelError& e) {
    log << "numeric failure: " << e.what() << "\n";
    return kExitNumericFailure;
  }
  if (cfg.write_checkpoints) {
    save_checkpoint(dir / "reward.ckpt", "reward", result.reward.spec,
                    result.reward.params);
    save_checkpoint(dir / "policy.ckpt", "policy", result.policy.spec,
                    result.policy.params);
    save_checkpoint(dir / "penalized_policy.ckpt", "policy",
                    result.penalized_policy.spec, result.penalized_policy.params);
  }
  if (!result.records.empty()) {
    const RunRecord& last = result.records.back();
    log << "t=" << last.t << " pref_accuracy=" << format_double(last.pref_accuracy)
        << " j_true_exact=" << format_double(last.j_true_exact) << "\n";
  }
  return kExitOk;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::ostream& log) {
  try {
    const std::string text = read_text(config_path);
    const ExperimentConfig cfg = load_config(config_path);
    const std::string dir = out_dir.empty() ? cfg.output_dir : out_dir;
    if (dir.empty()) throw ConfigError("output.dir", "no output directory given");
    return run_experiment(cfg, text, dir, log);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kExitBadConfig;
  }
}

SeedRange parse_seed_range(const std::string& text) {
  const auto pos = text.find("..");
  SeedRange r;
  auto seed = [](const std::string& s) {
    const long long v = parse_int(s, "seeds");
    if (v < 0) throw ConfigError("seeds", "seeds must be >= 0");
    return static_cast<std::uint64_t>(v);
  };
  if (pos == std::string::npos) {
    r.first = r.last = seed(text);
  } else {
    r.first = seed(text.substr(0, pos));
    r.last = seed(text.substr(pos + 2));
  }
  if (r.last < r.first) throw ConfigError("seeds", "empty range " + text);
  return r;
}

int sweep_thread_count() {
  if (const char* env = std::getenv("RLHF_BILEVEL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

int cmd_sweep(const std::string& config_path, const SeedRange& seeds,
              const std::string& out_dir, std::ostream& log) {
  std::string text;
  ExperimentConfig base;
  try {
    text = read_text(config_path);
    base = load_config(config_path);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return kExitBadConfig;
  }
  const std::uint64_t count = seeds.last - seeds.first + 1;
  const int workers =
      static_cast<int>(std::min<std::uint64_t>(count, sweep_thread_count()));
  std::atomic<std::uint64_t> next{0};
  std::atomic<int> worst{kExitOk};
  std::mutex log_mu;
  auto work = [&] {
    for (std::uint64_t i = next++; i < count; i = next++) {
      const std::uint64_t seed = seeds.first + i;
      ExperimentConfig cfg = base;
      cfg.train.seed = seed;
      std::ostringstream run_log;
      int code;
      try {
        code = run_experiment(cfg, text,
                              (fs::path(out_dir) / ("seed_" + std::to_string(seed))).string(),
                              run_log);
      } catch (const ConfigError& e) {
        run_log << "config error: " << e.what() << "\n";
        code = kExitBadConfig;
      }
      int prev = worst.load();
      while (code > prev && !worst.compare_exchange_weak(prev, code)) {
      }
      std::lock_guard<std::mutex> lock(log_mu);
      log << "[seed " << seed << "] exit " << code << "\n" << run_log.str();
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();
  return worst.load();
}

}  // namespace rlhf
