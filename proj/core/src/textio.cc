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

#include "rlhf/textio.h"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <set>
#include <sstream>

#include "rlhf/errors.h"

namespace rlhf {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_doubles(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += format_double(values[i]);
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& text, const std::string& key) {
  const std::string t = trim(text);
  if (t.empty()) throw ConfigError(key, "expected a number");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE) {
    throw ConfigError(key, "not a valid number: '" + t + "'");
  }
  return v;
}

long long parse_int(const std::string& text, const std::string& key) {
  const std::string t = trim(text);
  if (t.empty()) throw ConfigError(key, "expected an integer");
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size() || errno == ERANGE) {
    throw ConfigError(key, "not a valid integer: '" + t + "'");
  }
  return v;
}

bool parse_bool(const std::string& text, const std::string& key) {
  const std::string t = trim(text);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + t + "'");
}

std::vector<double> parse_doubles(const std::string& text,
                                  const std::string& key) {
  std::istringstream in(text);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) out.push_back(parse_double(tok, key));
  return out;
}

std::vector<KeyValue> read_key_values(std::istream& in, char sep) {
  std::vector<KeyValue> out;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto pos = t.find(sep);
    if (pos == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno),
                        std::string("missing '") + sep + "' separator");
    }
    KeyValue kv{trim(t.substr(0, pos)), trim(t.substr(pos + 1)), lineno};
    if (kv.key.empty()) {
      throw ConfigError("line " + std::to_string(lineno), "empty key");
    }
    if (!seen.insert(kv.key).second) {
      throw ConfigError(kv.key, "duplicate key");
    }
    out.push_back(std::move(kv));
  }
  return out;
}

}  // namespace rlhf
