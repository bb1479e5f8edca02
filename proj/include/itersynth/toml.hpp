// Copyright 2026 The itersynth Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "itersynth/detail/fs.hpp"
#include "itersynth/detail/text.hpp"
#include "itersynth/error.hpp"

// Run configs are TOML, read with toml++ and handed to the rest of the code
// as JSON trees.
namespace itersynth::toml_io {

namespace detail_toml {

inline nlohmann::ordered_json to_json(const ::toml::node& node, const std::string& where) {
  if (const auto* t = node.as_table()) {
    auto out = nlohmann::ordered_json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = to_json(v, where);
    return out;
  }
  if (const auto* a = node.as_array()) {
    auto out = nlohmann::ordered_json::array();
    for (const auto& v : *a) out.push_back(to_json(v, where));
    return out;
  }
  if (const auto* s = node.as_string()) return s->get();
  if (const auto* i = node.as_integer()) return i->get();
  if (const auto* f = node.as_floating_point()) return f->get();
  if (const auto* b = node.as_boolean()) return b->get();
  throw ParseError(where + ": dates and times are not supported");
}

inline std::string describe(const ::toml::parse_error& e, std::string_view source) {
  return std::string(source) + ": line " + std::to_string(e.source().begin.line) + ": " +
         std::string(e.description());
}

// Splits "a.b.c" into bare-key segments.
inline std::vector<std::string> split_key(std::string_view key, const std::string& where) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const auto part = detail::trim(key.substr(pos, dot == std::string_view::npos ? dot : dot - pos));
    if (part.empty()) throw ValidationError(where + ": empty key segment");
    out.emplace_back(part);
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  return out;
}

}  // namespace detail_toml

inline nlohmann::ordered_json parse(std::string_view text, std::string_view source = "config") {
  try {
    return detail_toml::to_json(::toml::parse(text, source), std::string(source));
  } catch (const ::toml::parse_error& e) {
    throw ParseError(detail_toml::describe(e, source));
  }
}

/// Parses one value as it would appear on the right of '='.
inline nlohmann::ordered_json parse_value(std::string_view text, std::string_view where = "value") {
  const auto doc = parse("v = " + std::string(text), where);
  return doc.at("v");
}

inline nlohmann::ordered_json parse_file(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw IoError("cannot open config file " + path.string());
  }
  return parse(detail::read_file(path), path.string());
}

/// Applies "a.b.c=value"; values that do not parse as TOML are taken as
/// bare strings.
inline void apply_override(nlohmann::ordered_json& root, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ValidationError("override '" + std::string(assignment) + "' is not key=value");
  }
  const std::string where = "override '" + std::string(assignment) + "'";
  const auto path = detail_toml::split_key(assignment.substr(0, eq), where);
  nlohmann::ordered_json* node = &root;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    auto& next = (*node)[path[i]];
    if (next.is_null()) next = nlohmann::ordered_json::object();
    if (!next.is_object()) throw ValidationError(where + ": '" + path[i] + "' is not a table");
    node = &next;
  }
  const auto rhs = assignment.substr(eq + 1);
  try {
    (*node)[path.back()] = parse_value(rhs, where);
  } catch (const ParseError&) {
    (*node)[path.back()] = std::string(detail::trim(rhs));
  }
}

}  // namespace itersynth::toml_io
