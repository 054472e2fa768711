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


// Acceptance suite. Prints one line per criterion and exits nonzero when any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "rlhf/bilevel.h"
#include "rlhf/config.h"
#include "rlhf/experiment.h"
#include "rlhf/oracle.h"
#include "rlhf/verify.h"

using namespace rlhf;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome autodiff() {
  const auto t0 = Clock::now();
  const double err = autodiff_max_error(100, 0, 1e-5);
  const double secs = seconds_since(t0);
  return {err <= 1e-5 && secs < 10.0,
          fmt("max rel err %.3g <= 1e-5 over 100 MLPs, %.2f s < 10 s", err, secs)};
}

Outcome policy_gradient() {
  const double fd = policy_grad_fd_error(0, Architecture::tabular());
  const McComparison mc = policy_grad_mc(50000, 0);
  return {fd <= 1e-5 && mc.outside == 0,
          fmt("exact vs fd rel err %.3g <= 1e-5; MC n=5e4 %d/%d coords beyond 3 SE "
              "(worst z %.2f)",
              fd, mc.outside, mc.coordinates, mc.worst_z)};
}

Outcome reward_gradient() {
  const double fd = reward_grad_fd_error(0, Architecture::tabular());
  const BiasCheck b3 = truncation_bias(3, 0);
  const BiasCheck b10 = truncation_bias(10, 0);
  return {fd <= 1e-6 && b3.bias_norm <= b3.bound && b10.bias_norm <= b10.bound,
          fmt("exact vs fd rel err %.3g <= 1e-6; bias H=3 %.3g <= %.3g, "
              "H=10 %.3g <= %.3g",
              fd, b3.bias_norm, b3.bound, b10.bias_norm, b10.bound)};
}

Outcome preference() {
  const double comp = preference_complement_error(1000, 0);
  const double fd = pref_grad_phi_fd_error(0);
  const McComparison mc = pref_grad_lambda_mc(100000, 0);
  return {comp <= 1e-12 && fd <= 1e-6 && mc.outside == 0,
          fmt("complement %.3g <= 1e-12; grad_phi fd rel err %.3g <= 1e-6; "
              "grad_lambda MC %d/%d coords beyond 3 SE (worst z %.2f)",
              comp, fd, mc.outside, mc.coordinates, mc.worst_z)};
}

Outcome critic() {
  const CriticCheck c = critic_fit_check(0);
  return {c.max_error <= c.tolerance && c.max_anchor_distance <= c.radius &&
              c.seconds < 60.0,
          fmt("max |Q_hat - Q| %.3f <= %.3f; anchor distance %.3f <= radius %.3f; "
              "%.2f s < 60 s",
              c.max_error, c.tolerance, c.max_anchor_distance, c.radius, c.seconds)};
}

Outcome hyper() {
  const HyperCheck h = hyper_mc_check(200000, 60, 0, false);
  return {h.cosine >= 0.99 && h.relative_error <= 0.05 && h.richardson >= 3.5 &&
              h.richardson <= 4.5,
          fmt("cosine %.5f >= 0.99; rel norm err %.4f <= 0.05; Richardson %.3f in "
              "[3.5, 4.5]",
              h.cosine, h.relative_error, h.richardson)};
}

struct EndToEnd {
  ExperimentConfig cfg;
  TabularMdp mdp;
  TrainResult result;
  double seconds = 0.0;
};

Outcome end_to_end(const EndToEnd& run) {
  const RunRecord& last = run.result.records.back();
  const double j_star = value_iteration(run.mdp, true_reward_fn(run.mdp)).j_star;
  const bool pass = last.pref_accuracy >= 0.85 && last.j_true_exact >= 0.9 * j_star &&
                    run.seconds <= 300.0;
  return {pass, fmt("accuracy %.4f >= 0.85; J_true %.4f >= 0.9 * %.4f = %.4f "
                    "(ratio %.4f); %.1f s <= 300 s",
                    last.pref_accuracy, last.j_true_exact, j_star, 0.9 * j_star,
                    last.j_true_exact / j_star, run.seconds)};
}

Outcome gap_trend(const EndToEnd& run) {
  const TrainConfig& tc = run.cfg.train;
  const PolicyModel init =
      make_policy(run.mdp.n_states(), run.mdp.n_actions(), tc.policy_arch,
                  ParamVec(run.result.policy.params.size(), 0.0));
  const InnerSolveResult sol = exact_inner_solve(run.mdp, run.result.reward, init, 0.0, tc.H);
  const double phi_star =
      exact_pref_objective(run.mdp, sol.policy, run.result.reward, tc.H).value;

  double running_min = HUGE_VAL;
  std::vector<double> xs, ys;
  for (const RunRecord& r : run.result.records) {
    running_min = std::min(running_min, std::abs(phi_star - r.upper_value_exact));
    if (r.t >= 5 && r.t <= 50) {
      xs.push_back(std::log(static_cast<double>(r.t)));
      ys.push_back(std::log(running_min));
    }
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= xs.size();
  my /= ys.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = sxy / sxx;
  return {std::isfinite(slope) && slope <= -0.3,
          fmt("log-log slope %.3f <= -0.3 over t in [5, 50] (Phi* %.6f, final gap %.3g)",
              slope, phi_star, running_min)};
}

Outcome determinism() {
  const std::string path = RLHF_CONFIG_DIR "/acceptance.cfg";
  const ExperimentConfig cfg = load_config(path);
  const std::string text = slurp(path);
  const fs::path root = fs::temp_directory_path() / "rlhf_acceptance_determinism";
  fs::remove_all(root);
  std::ostringstream log;
  const int a = run_experiment(cfg, text, (root / "a").string(), log);
  const int b = run_experiment(cfg, text, (root / "b").string(), log);
  const std::string ma = slurp(root / "a" / "metrics.csv");
  const std::string mb = slurp(root / "b" / "metrics.csv");
  fs::remove_all(root);
  return {a == kExitOk && b == kExitOk && !ma.empty() && ma == mb,
          fmt("two runs exit %d/%d, metrics.csv %zu bytes, %s", a, b, ma.size(),
              ma == mb ? "byte-identical" : "DIFFERENT")};
}

}  // namespace

int main() {
  EndToEnd run;
  bool all = true;
  auto report = [&all](int n, const char* name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    all = all && o.pass;
    std::printf("[%s] criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", n, name,
                o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "autodiff", autodiff);
  report(2, "policy gradient", policy_gradient);
  report(3, "reward gradient", reward_gradient);
  report(4, "preference", preference);
  report(5, "critic fit", critic);
  report(6, "hyper-gradient", hyper);
  report(7, "end-to-end", [&run] {
    run.cfg = load_config(RLHF_CONFIG_DIR "/acceptance.cfg");
    run.mdp = build_environment(run.cfg);
    const auto t0 = Clock::now();
    run.result = train(run.mdp, run.cfg.train);
    run.seconds = seconds_since(t0);
    return end_to_end(run);
  });
  report(8, "gap trend", [&run] {
    if (run.result.records.empty()) return Outcome{false, "end-to-end run unavailable"};
    return gap_trend(run);
  });
  report(9, "determinism", determinism);

  std::printf("%s\n", all ? "all criteria pass" : "some criteria FAIL");
  return all ? 0 : 1;
}
