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

#include <array>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "itersynth/error.hpp"
#include "itersynth/modelio/types.hpp"

namespace itersynth::modelio {

struct CallRecord {
  ModelRole role = ModelRole::kTeacher;
  std::string purpose;
  TokenUsage usage;

  bool operator==(const CallRecord&) const = default;
};

/// Serialized token accumulator with optional per-role hard caps on
/// input+output tokens. A charge that would cross a cap is rejected whole.
class BudgetLedger {
 public:
  BudgetLedger() = default;
  BudgetLedger(const BudgetLedger&) = delete;
  BudgetLedger& operator=(const BudgetLedger&) = delete;

  void set_cap(ModelRole role, std::optional<std::int64_t> total_tokens) {
    std::lock_guard lock(mu_);
    caps_[index(role)] = total_tokens;
  }

  std::optional<std::int64_t> cap(ModelRole role) const {
    std::lock_guard lock(mu_);
    return caps_[index(role)];
  }

  // Throws BudgetError if the role has no headroom left.
  void ensure_available(ModelRole role) const {
    std::lock_guard lock(mu_);
    const auto& c = caps_[index(role)];
    if (c && totals_[index(role)].total() >= *c) {
      throw BudgetError(std::string(to_string(role)) + " token budget of " +
                        std::to_string(*c) + " exhausted");
    }
  }

  void charge(ModelRole role, const TokenUsage& usage,
              const std::string& purpose) {
    if (usage.input_tokens < 0 || usage.output_tokens < 0) {
      throw ValidationError("token usage must be non-negative");
    }
    std::lock_guard lock(mu_);
    auto& t = totals_[index(role)];
    const auto& c = caps_[index(role)];
    if (c && t.total() + usage.total() > *c) {
      throw BudgetError(std::string(to_string(role)) + " token budget of " +
                        std::to_string(*c) + " would be exceeded by " +
                        purpose);
    }
    t.input_tokens += usage.input_tokens;
    t.output_tokens += usage.output_tokens;
    t.approximate = t.approximate || usage.approximate;
    calls_.push_back({role, purpose, usage});
  }

  TokenUsage totals(ModelRole role) const {
    std::lock_guard lock(mu_);
    return totals_[index(role)];
  }

  // Teacher-side compute proxy; reward-model tokens only when asked.
  std::int64_t teacher_budget_tokens(bool include_reward) const {
    std::lock_guard lock(mu_);
    std::int64_t total = totals_[index(ModelRole::kTeacher)].total();
    if (include_reward) total += totals_[index(ModelRole::kReward)].total();
    return total;
  }

  std::vector<CallRecord> calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

  std::size_t call_count() const {
    std::lock_guard lock(mu_);
    return calls_.size();
  }

  // Totals only; the call log is persisted separately per iteration.
  nlohmann::ordered_json snapshot() const {
    std::lock_guard lock(mu_);
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (auto role : {ModelRole::kTeacher, ModelRole::kStudent, ModelRole::kReward}) {
      const auto& t = totals_[index(role)];
      nlohmann::ordered_json r;
      r["input_tokens"] = t.input_tokens;
      r["output_tokens"] = t.output_tokens;
      r["approximate"] = t.approximate;
      j[std::string(to_string(role))] = std::move(r);
    }
    j["calls"] = restored_calls_ + calls_.size();
    return j;
  }

  // Restores totals from a snapshot (used on resume). The call log restarts
  // empty; earlier calls live in the per-iteration call files.
  void restore(const nlohmann::json& snap) {
    std::lock_guard lock(mu_);
    for (auto role : {ModelRole::kTeacher, ModelRole::kStudent, ModelRole::kReward}) {
      const auto& r = snap.at(std::string(to_string(role)));
      auto& t = totals_[index(role)];
      t.input_tokens = r.at("input_tokens").get<std::int64_t>();
      t.output_tokens = r.at("output_tokens").get<std::int64_t>();
      t.approximate = r.value("approximate", false);
    }
    calls_.clear();
    restored_calls_ = snap.value("calls", std::size_t{0});
  }

 private:
  static std::size_t index(ModelRole r) { return static_cast<std::size_t>(r); }

  mutable std::mutex mu_;
  std::array<TokenUsage, 3> totals_{};
  std::array<std::optional<std::int64_t>, 3> caps_{};
  std::vector<CallRecord> calls_;
  std::size_t restored_calls_ = 0;
};

inline nlohmann::ordered_json to_json(const CallRecord& c) {
  nlohmann::ordered_json j;
  j["role"] = std::string(to_string(c.role));
  j["purpose"] = c.purpose;
  j["input_tokens"] = c.usage.input_tokens;
  j["output_tokens"] = c.usage.output_tokens;
  j["approximate"] = c.usage.approximate;
  return j;
}

inline CallRecord call_record_from_json(const nlohmann::json& j) {
  CallRecord c;
  c.role = model_role_from_string(j.at("role").get<std::string>());
  c.purpose = j.at("purpose").get<std::string>();
  c.usage.input_tokens = j.at("input_tokens").get<std::int64_t>();
  c.usage.output_tokens = j.at("output_tokens").get<std::int64_t>();
  c.usage.approximate = j.value("approximate", false);
  return c;
}

}  // namespace itersynth::modelio
