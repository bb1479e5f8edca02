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
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "itersynth/error.hpp"
#include "itersynth/prompt_assets.hpp"

namespace itersynth {

using PromptVars = std::map<std::string, std::string, std::less<>>;

/// Substitutes `{{name}}` placeholders. `{{#name}}...{{/name}}` sections are
/// kept only when `name` is bound to a non-empty value. Any placeholder left
/// unbound is a TemplateError naming it.
inline std::string render_template(std::string_view tmpl, const PromptVars& vars) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    out.append(tmpl.substr(pos, open - pos));
    const std::size_t close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      throw TemplateError("unterminated placeholder in template");
    }
    std::string_view tag = tmpl.substr(open + 2, close - open - 2);
    if (!tag.empty() && tag.front() == '#') {
      const std::string name(tag.substr(1));
      const std::string end_tag = "{{/" + name + "}}";
      const std::size_t end = tmpl.find(end_tag, close + 2);
      if (end == std::string_view::npos) {
        throw TemplateError("section '" + name + "' is not closed");
      }
      auto it = vars.find(name);
      if (it != vars.end() && !it->second.empty()) {
        out += render_template(tmpl.substr(close + 2, end - close - 2), vars);
      }
      pos = end + end_tag.size();
      continue;
    }
    if (!tag.empty() && tag.front() == '/') {
      throw TemplateError("unmatched section end '" + std::string(tag.substr(1)) + "'");
    }
    auto it = vars.find(tag);
    if (it == vars.end()) {
      throw TemplateError("unbound placeholder '" + std::string(tag) + "'");
    }
    out += it->second;
    pos = close + 2;
  }
  return out;
}

/// Returns the named asset, preferring `<dir>/<name>.txt` when a directory is
/// given and the file exists.
inline std::string load_asset(std::string_view name,
                              const std::filesystem::path& dir = {}) {
  if (!dir.empty()) {
    const auto path = dir / (std::string(name) + ".txt");
    if (std::filesystem::exists(path)) {
      std::ifstream in(path, std::ios::binary);
      if (!in) throw IoError("cannot read template " + path.string());
      std::ostringstream ss;
      ss << in.rdbuf();
      std::string text = ss.str();
      if (!text.empty() && text.back() == '\n') text.pop_back();
      return text;
    }
  }
  const auto& table = assets::builtin_templates();
  auto it = table.find(name);
  if (it == table.end()) {
    throw TemplateError("unknown template asset '" + std::string(name) + "'");
  }
  return std::string(it->second);
}

}  // namespace itersynth
