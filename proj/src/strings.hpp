// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mtnet Authors

#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mtnet {

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);
std::string join(const std::vector<std::string>& parts, const std::string& sep);
/// "key = value" with '#' comments; nullopt for blank or comment lines.
std::optional<std::pair<std::string, std::string>> parse_key_value_line(const std::string& line);

}  // namespace mtnet
