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


#ifndef RLHF_METRICS_H_
#define RLHF_METRICS_H_

#include <iosfwd>
#include <string>
#include <vector>

#include "rlhf/bilevel.h"

namespace rlhf {

// Fixed metrics.csv header.
const std::string& metrics_header();

// One CSV row; floats use 17 significant digits and NaN prints as "nan".
std::string format_record(const RunRecord& rec);

// Writes the header on construction and flushes after every row.
class MetricsWriter {
 public:
  explicit MetricsWriter(std::ostream& out);
  void write(const RunRecord& rec);

 private:
  std::ostream& out_;
};

// Parses a metrics file produced by MetricsWriter. Throws ConfigError on a
// malformed header or row.
std::vector<RunRecord> read_metrics(std::istream& in);

}  // namespace rlhf

#endif  // RLHF_METRICS_H_
