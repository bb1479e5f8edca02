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

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "itersynth/error.hpp"

namespace itersynth {

enum class Origin { kSeed, kSynthetic };

enum class CorpusRole { kSeed, kSelected, kSynthetic, kValidation, kTest };

inline std::string_view to_string(Origin o) {
  return o == Origin::kSeed ? "seed" : "synthetic";
}

inline Origin origin_from_string(std::string_view s) {
  if (s == "seed") return Origin::kSeed;
  if (s == "synthetic") return Origin::kSynthetic;
  throw ParseError("unknown origin '" + std::string(s) + "'");
}

inline std::string_view to_string(CorpusRole r) {
  switch (r) {
    case CorpusRole::kSeed: return "seed";
    case CorpusRole::kSelected: return "selected";
    case CorpusRole::kSynthetic: return "synthetic";
    case CorpusRole::kValidation: return "validation";
    case CorpusRole::kTest: return "test";
  }
  return "seed";
}

inline CorpusRole corpus_role_from_string(std::string_view s) {
  if (s == "seed") return CorpusRole::kSeed;
  if (s == "selected") return CorpusRole::kSelected;
  if (s == "synthetic") return CorpusRole::kSynthetic;
  if (s == "validation") return CorpusRole::kValidation;
  if (s == "test") return CorpusRole::kTest;
  throw ValidationError("unknown corpus role '" + std::string(s) + "'");
}

/// One question-answer pair with its generation provenance.
struct Sample {
  std::string id;
  std::string question;
  std::string answer;
  Origin origin = Origin::kSeed;
  std::optional<std::string> parent_id;
  int iteration = 0;
  std::map<std::string, std::string> meta;

  bool operator==(const Sample&) const = default;

  static Sample seed(std::string id, std::string question, std::string answer,
                     std::map<std::string, std::string> meta = {}) {
    return Sample{std::move(id), std::move(question), std::move(answer),
                  Origin::kSeed, std::nullopt, 0, std::move(meta)};
  }
};

/// Throws ValidationError when the origin/parent/iteration combination is
/// inconsistent.
inline void validate_sample(const Sample& s) {
  if (s.id.empty()) throw ValidationError("sample with empty id");
  if (s.iteration < 0) {
    throw ValidationError("sample '" + s.id + "' has negative iteration");
  }
  if (s.origin == Origin::kSeed) {
    if (s.parent_id) {
      throw ValidationError("seed sample '" + s.id + "' must not have a parent");
    }
    if (s.iteration != 0) {
      throw ValidationError("seed sample '" + s.id + "' must have iteration 0");
    }
  } else if (!s.parent_id || s.parent_id->empty()) {
    throw ValidationError("synthetic sample '" + s.id + "' has no parent_id");
  }
}

// Synthetic ids are a pure function of (iteration, counter) so reruns are
// reproducible.
inline std::string synthetic_id(int iteration, std::size_t counter) {
  return "synth-" + std::to_string(iteration) + "-" + std::to_string(counter);
}

/// Immutable, role-tagged, order-preserving collection of samples.
class Corpus {
 public:
  Corpus() = default;

  Corpus(CorpusRole role, std::vector<Sample> samples,
         int created_at_iteration = 0)
      : role_(role),
        samples_(std::move(samples)),
        created_at_iteration_(created_at_iteration) {
    if (role_ == CorpusRole::kSeed && samples_.empty()) {
      throw ValidationError("seed corpus must be non-empty");
    }
    std::unordered_set<std::string> seen;
    seen.reserve(samples_.size());
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      validate_sample(samples_[i]);
      if (!seen.insert(samples_[i].id).second) {
        throw ValidationError("duplicate sample id '" + samples_[i].id + "'");
      }
      index_.emplace(samples_[i].id, i);
    }
  }

  CorpusRole role() const { return role_; }
  int created_at_iteration() const { return created_at_iteration_; }
  const std::vector<Sample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }

  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }

  bool contains(std::string_view id) const {
    return index_.find(std::string(id)) != index_.end();
  }

  const Sample& at(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) {
      throw ValidationError("unknown sample id '" + std::string(id) + "'");
    }
    return samples_[it->second];
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(s.id);
    return out;
  }

  bool operator==(const Corpus& other) const {
    return role_ == other.role_ && samples_ == other.samples_ &&
           created_at_iteration_ == other.created_at_iteration_;
  }

 private:
  CorpusRole role_ = CorpusRole::kSynthetic;
  std::vector<Sample> samples_;
  int created_at_iteration_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Builds the selected corpus D̄ₜ; every id must exist in the seed corpus.
inline Corpus make_selected(const Corpus& seed,
                            const std::vector<std::string>& ids,
                            int iteration) {
  std::vector<Sample> picked;
  picked.reserve(ids.size());
  for (const auto& id : ids) {
    if (!seed.contains(id)) {
      throw ValidationError("selected id '" + id + "' is not in the seed corpus");
    }
    picked.push_back(seed.at(id));
  }
  return Corpus(CorpusRole::kSelected, std::move(picked), iteration);
}

/// Links a synthetic child to the exemplar it was generated from. The score
/// and correctness fields feed the fidelity analyses.
struct GenerationRecord {
  std::string parent_id;
  std::string child_id;
  int iteration = 0;
  std::optional<double> selection_score;
  std::string scorer_kind;
  std::optional<double> child_score;
  std::optional<bool> child_correct;

  bool operator==(const GenerationRecord&) const = default;
};

/// Every record must resolve its parent in the seed corpus and its child in
/// one of the synthetic corpora.
inline void check_provenance(const std::vector<GenerationRecord>& records,
                             const Corpus& seed,
                             const std::vector<const Corpus*>& synthetic) {
  for (const auto& r : records) {
    if (r.iteration < 0) {
      throw ValidationError("record for '" + r.child_id + "' has negative iteration");
    }
    if (!seed.contains(r.parent_id)) {
      throw ValidationError("record parent '" + r.parent_id +
                            "' is not in the seed corpus");
    }
    bool found = false;
    for (const Corpus* c : synthetic) {
      if (c->contains(r.child_id)) {
        found = true;
        break;
      }
    }
    if (!found) {
      throw ValidationError("record child '" + r.child_id +
                            "' is not in any synthetic corpus");
    }
  }
}

// ---------------------------------------------------------------------------
// JSON Lines persistence

inline nlohmann::ordered_json to_json(const Sample& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["question"] = s.question;
  j["answer"] = s.answer;
  j["origin"] = std::string(to_string(s.origin));
  j["parent_id"] = s.parent_id ? nlohmann::ordered_json(*s.parent_id)
                               : nlohmann::ordered_json(nullptr);
  j["iteration"] = s.iteration;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
  for (const auto& [k, v] : s.meta) meta[k] = v;
  j["meta"] = std::move(meta);
  return j;
}

namespace detail {

inline std::string require_string(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    throw ParseError(std::string("missing or non-string field '") + key + "'");
  }
  return it->get<std::string>();
}

}  // namespace detail

inline Sample sample_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("record is not a JSON object");
  Sample s;
  s.id = detail::require_string(j, "id");
  s.question = detail::require_string(j, "question");
  s.answer = detail::require_string(j, "answer");
  if (auto it = j.find("origin"); it != j.end()) {
    if (!it->is_string()) throw ParseError("field 'origin' must be a string");
    s.origin = origin_from_string(it->get<std::string>());
  }
  if (auto it = j.find("parent_id"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ParseError("field 'parent_id' must be a string");
    s.parent_id = it->get<std::string>();
  }
  if (auto it = j.find("iteration"); it != j.end()) {
    if (!it->is_number_integer()) {
      throw ParseError("field 'iteration' must be an integer");
    }
    s.iteration = it->get<int>();
  }
  if (auto it = j.find("meta"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw ParseError("field 'meta' must be an object");
    for (const auto& [k, v] : it->items()) {
      s.meta[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  return s;
}

inline std::string serialize_sample(const Sample& s) {
  return to_json(s).dump(-1, ' ', false,
                         nlohmann::json::error_handler_t::strict);
}

/// Parses JSON Lines text. `source` names the input in error messages.
inline Corpus parse_corpus(std::istream& in, CorpusRole role,
                           std::string_view source) {
  std::vector<Sample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    bool blank = true;
    for (char c : line) {
      if (c != ' ' && c != '\t') {
        blank = false;
        break;
      }
    }
    if (blank) continue;
    try {
      samples.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string(source) + ": line " +
                       std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(std::string(source) + ": line " +
                       std::to_string(line_no) + ": " + e.what());
    }
  }
  int created = 0;
  for (const auto& s : samples) created = std::max(created, s.iteration);
  return Corpus(role, std::move(samples), created);
}

inline Corpus load_corpus(const std::filesystem::path& path, CorpusRole role) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file " + path.string());
  return parse_corpus(in, role, path.string());
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& s : corpus) out << serialize_sample(s) << '\n';
}

inline void save_corpus(const Corpus& corpus,
                        const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write corpus file " + path.string());
  try {
    write_corpus(out, corpus);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot encode corpus for " + path.string() + ": " + e.what());
  }
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

/// D̂ₜ := D̂ₜ ∪ D̂ₜ₋₁, previous samples first.
inline Corpus merge_accumulate(const Corpus& current, const Corpus& previous) {
  if (current.role() != CorpusRole::kSynthetic ||
      previous.role() != CorpusRole::kSynthetic) {
    throw ValidationError("merge_accumulate expects synthetic corpora");
  }
  std::vector<Sample> merged;
  merged.reserve(current.size() + previous.size());
  merged.insert(merged.end(), previous.begin(), previous.end());
  for (const auto& s : current) {
    if (previous.contains(s.id)) {
      throw ValidationError("accumulated corpora share id '" + s.id + "'");
    }
    merged.push_back(s);
  }
  return Corpus(CorpusRole::kSynthetic, std::move(merged),
                std::max(current.created_at_iteration(),
                         previous.created_at_iteration()));
}

}  // namespace itersynth
