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

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "itersynth/error.hpp"

namespace itersynth::modelio {

enum class ModelRole { kTeacher, kStudent, kReward };

enum class Capability { kGenerate, kLogprobs, kGradEmbedding, kFinetune, kReward };

enum class Transport { kRemote, kSimulated };

inline std::string_view to_string(ModelRole r) {
  switch (r) {
    case ModelRole::kTeacher: return "teacher";
    case ModelRole::kStudent: return "student";
    case ModelRole::kReward: return "reward";
  }
  return "teacher";
}

inline ModelRole model_role_from_string(std::string_view s) {
  if (s == "teacher") return ModelRole::kTeacher;
  if (s == "student") return ModelRole::kStudent;
  if (s == "reward") return ModelRole::kReward;
  throw ValidationError("unknown model role '" + std::string(s) + "'");
}

inline std::string_view to_string(Capability c) {
  switch (c) {
    case Capability::kGenerate: return "generate";
    case Capability::kLogprobs: return "logprobs";
    case Capability::kGradEmbedding: return "grad_embedding";
    case Capability::kFinetune: return "finetune";
    case Capability::kReward: return "reward";
  }
  return "generate";
}

inline Capability capability_from_string(std::string_view s) {
  if (s == "generate") return Capability::kGenerate;
  if (s == "logprobs") return Capability::kLogprobs;
  if (s == "grad_embedding") return Capability::kGradEmbedding;
  if (s == "finetune") return Capability::kFinetune;
  if (s == "reward") return Capability::kReward;
  throw ValidationError("unknown capability '" + std::string(s) + "'");
}

struct ChatMessage {
  std::string role;  // "system", "user" or "assistant"
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  bool want_logprobs = false;
  std::optional<std::uint64_t> seed;

  bool operator==(const ChatRequest&) const = default;

  static ChatRequest user(std::string text) {
    ChatRequest r;
    r.messages.push_back({"user", std::move(text)});
    return r;
  }

  // Concatenated message text, used for token estimates and by simulators.
  std::string joined_text() const {
    std::string out;
    for (const auto& m : messages) {
      if (!out.empty()) out += '\n';
      out += m.content;
    }
    return out;
  }
};

inline void validate(const ChatRequest& r) {
  if (r.messages.empty()) throw ValidationError("chat request has no messages");
  if (!(r.temperature >= 0.0)) {
    throw ValidationError("chat request temperature must be >= 0");
  }
  if (r.max_output_tokens < 0) {
    throw ValidationError("chat request max_output_tokens must be >= 0");
  }
}

struct TokenUsage {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  // Set when counts come from the whitespace fallback rather than upstream.
  bool approximate = false;

  std::int64_t total() const { return input_tokens + output_tokens; }
  bool operator==(const TokenUsage&) const = default;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;  // natural log

  bool operator==(const TokenLogprob&) const = default;
};

struct ChatResponse {
  std::string text;
  std::optional<std::vector<TokenLogprob>> token_logprobs;
  TokenUsage usage;
};

// Opaque handle to a student checkpoint. `payload` is backend specific:
// the simulator stores its mastery vector, remote workers an adapter id.
struct StudentState {
  std::string id = "base";
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const StudentState& o) const {
    return id == o.id && payload == o.payload;
  }
};

// Per-position inputs for the softmax-head gradient: predictive distribution
// over the vocabulary, target token, and the output head's input vector.
struct GradientFeatures {
  std::vector<std::vector<double>> probs;
  std::vector<std::size_t> targets;
  std::vector<std::vector<double>> hidden;
  // Backends that compute the gradient themselves fill this instead.
  std::optional<std::vector<double>> raw_vector;
};

}  // namespace itersynth::modelio
