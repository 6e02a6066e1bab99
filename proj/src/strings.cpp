// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#include "strings.hpp"

#include "error.hpp"

namespace mtnet {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::optional<std::pair<std::string, std::string>> parse_key_value_line(const std::string& line) {
  std::string body = line;
  const auto hash = body.find('#');
  if (hash != std::string::npos) body = body.substr(0, hash);
  body = trim(body);
  if (body.empty()) return std::nullopt;
  const auto eq = body.find('=');
  if (eq == std::string::npos) fail(ErrorCode::Config, "expected 'key = value', got '" + body + "'");
  std::string key = trim(body.substr(0, eq));
  if (key.empty()) fail(ErrorCode::Config, "empty key in '" + body + "'");
  return std::make_pair(std::move(key), trim(body.substr(eq + 1)));
}

}  // namespace mtnet
