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


#include "rlhf/metrics.h"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "rlhf/errors.h"
#include "rlhf/textio.h"

namespace rlhf {

const std::string& metrics_header() {
  static const std::string kHeader =
      "t,upper_value_est,upper_value_exact,j_true_exact,pref_accuracy,"
      "grad_norm_dt,bellman_residual";
  return kHeader;
}

std::string format_record(const RunRecord& rec) {
  std::string row = std::to_string(rec.t);
  for (double v : {rec.upper_value_est, rec.upper_value_exact, rec.j_true_exact,
                   rec.pref_accuracy, rec.grad_norm_dt, rec.bellman_residual}) {
    row += ',';
    row += std::isnan(v) ? std::string("nan") : format_double(v);
  }
  return row;
}

MetricsWriter::MetricsWriter(std::ostream& out) : out_(out) {
  out_ << metrics_header() << '\n';
  out_.flush();
}

void MetricsWriter::write(const RunRecord& rec) {
  out_ << format_record(rec) << '\n';
  out_.flush();
}

std::vector<RunRecord> read_metrics(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != metrics_header()) {
    throw ConfigError("metrics", "unexpected header");
  }
  std::vector<RunRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw ConfigError("metrics", "expected 7 columns: " + line);
    RunRecord r;
    r.t = static_cast<int>(parse_int(cells[0], "t"));
    r.upper_value_est = parse_double(cells[1], "upper_value_est");
    r.upper_value_exact = parse_double(cells[2], "upper_value_exact");
    r.j_true_exact = parse_double(cells[3], "j_true_exact");
    r.pref_accuracy = parse_double(cells[4], "pref_accuracy");
    r.grad_norm_dt = parse_double(cells[5], "grad_norm_dt");
    r.bellman_residual = parse_double(cells[6], "bellman_residual");
    out.push_back(r);
  }
  return out;
}

}  // namespace rlhf
