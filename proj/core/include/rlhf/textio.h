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

#ifndef RLHF_TEXTIO_H_
#define RLHF_TEXTIO_H_

// Small helpers for the line-oriented text formats (fixtures, checkpoints,
// configs, reports).

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rlhf {

// %.17g: shortest width that guarantees an exact double round trip.
std::string format_double(double v);
std::string format_doubles(std::span<const double> values);

// Strict numeric parsing; throws ConfigError naming `key`.
double parse_double(const std::string& text, const std::string& key);
long long parse_int(const std::string& text, const std::string& key);
bool parse_bool(const std::string& text, const std::string& key);
std::vector<double> parse_doubles(const std::string& text,
                                  const std::string& key);

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

// Reads "key<sep>value" lines. Blank lines and lines starting with '#' are
// skipped, whitespace around key and value is trimmed. Throws ConfigError on
// a line without the separator or a repeated key.
std::vector<KeyValue> read_key_values(std::istream& in, char sep);

std::string trim(const std::string& s);

}  // namespace rlhf

#endif  // RLHF_TEXTIO_H_
