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

#include <chrono>
#include <cstdlib>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "itersynth/corpus.hpp"
#include "itersynth/error.hpp"
#include "itersynth/modelio/endpoint.hpp"
#include "itersynth/modelio/finetune.hpp"
#include "itersynth/modelio/types.hpp"

namespace itersynth::modelio {

// Client for an OpenAI-compatible chat server plus the worker extensions
// (/grad_embedding, /finetune, /reward, /health). Wire format: docs/protocol.md.
class HttpBackend : public ModelBackend {
 public:
  HttpBackend(EndpointConfig config, double timeout_seconds)
      : config_(std::move(config)), timeout_(timeout_seconds) {
    if (config_.base_url.empty()) throw ValidationError("remote endpoint needs base_url");
    auto url = config_.base_url;
    while (!url.empty() && url.back() == '/') url.pop_back();
    // Everything after scheme://host[:port] is a path prefix.
    const auto scheme_end = url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = url.find('/', host_start);
    if (path_start != std::string::npos) {
      prefix_ = url.substr(path_start);
      url = url.substr(0, path_start);
    }
    origin_ = url;
  }

  ChatResponse chat(const ChatRequest& request, const StudentState* state) override {
    auto body = chat_body(request, state);
    body["max_tokens"] = request.max_output_tokens;
    body["logprobs"] = request.want_logprobs;
    const auto j = post("/v1/chat/completions", body);
    ChatResponse out;
    const auto& choice = first_choice(j);
    try {
      const auto& content = choice.at("message").at("content");
      out.text = content.is_null() ? std::string() : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("chat response lacks message content: ") + e.what());
    }
    if (request.want_logprobs) out.token_logprobs = read_logprobs(choice);
    out.usage = read_usage(j, request.joined_text(), out.text);
    return out;
  }

  // Teacher-forced scoring: the answer goes in as an assistant turn, the
  // server echoes it with max_tokens 0 and returns per-token logprobs of the
  // echoed answer only.
  std::vector<TokenLogprob> answer_logprobs(const ChatRequest& prompt, std::string_view answer,
                                            const StudentState* state) override {
    ChatRequest r = prompt;
    r.messages.push_back({"assistant", std::string(answer)});
    auto body = chat_body(r, state);
    body["max_tokens"] = 0;
    body["echo"] = true;
    body["logprobs"] = true;
    const auto j = post("/v1/chat/completions", body);
    return read_logprobs(first_choice(j));
  }

  double reward(std::string_view question, std::string_view answer) override {
    nlohmann::json body = {{"model", config_.model},
                           {"question", std::string(question)},
                           {"answer", std::string(answer)}};
    const auto j = post("/reward", body);
    if (!j.contains("reward") || !j["reward"].is_number()) {
      throw ProtocolError("/reward response lacks a numeric 'reward'");
    }
    return j["reward"].get<double>();
  }

  GradientFeatures grad_features(const ChatRequest& prompt, std::string_view answer,
                                 const StudentState* state) override {
    auto body = chat_body(prompt, state);
    body["answer"] = std::string(answer);
    const auto j = post("/grad_embedding", body);
    GradientFeatures f;
    try {
      auto v = j.at("vector").get<std::vector<double>>();
      const auto vocab = j.at("vocab_size").get<std::size_t>();
      const auto hidden = j.at("hidden_size").get<std::size_t>();
      if (v.size() != vocab * hidden) {
        throw ProtocolError("/grad_embedding vector length " + std::to_string(v.size()) +
                            " != vocab_size * hidden_size");
      }
      f.raw_vector = std::move(v);
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("malformed /grad_embedding response: ") + e.what());
    }
    return f;
  }

  StudentState finetune(const Corpus& train, const Corpus& validation,
                        const FinetuneHyperparams& hp, std::string_view prompt_template,
                        std::uint64_t seed) override {
    auto pairs = [](const Corpus& c) {
      auto arr = nlohmann::json::array();
      for (const auto& s : c) arr.push_back({{"id", s.id}, {"question", s.question}, {"answer", s.answer}});
      return arr;
    };
    nlohmann::json body = {{"model", config_.model},
                           {"train", pairs(train)},
                           {"validation", pairs(validation)},
                           {"hyperparams", to_json(hp)},
                           {"prompt_template", std::string(prompt_template)},
                           {"seed", seed}};
    const auto j = post("/finetune", body);
    if (!j.contains("handle") || !j["handle"].is_string()) {
      throw ProtocolError("/finetune response lacks a string 'handle'");
    }
    StudentState s;
    s.id = j["handle"].get<std::string>();
    s.payload = {{"handle", s.id}};
    return s;
  }

  // {status, model, capabilities[], max_context, hidden_representation}
  nlohmann::json health() const { return get("/health"); }

  /// Fails fast when the worker does not serve a capability the run needs.
  void require_capabilities(const std::set<Capability>& needed) const {
    const auto j = health();
    std::set<std::string> served;
    if (j.contains("capabilities") && j["capabilities"].is_array()) {
      for (const auto& c : j["capabilities"]) {
        if (c.is_string()) served.insert(c.get<std::string>());
      }
    }
    for (auto c : needed) {
      if (!served.count(std::string(to_string(c)))) {
        throw UnsupportedCapabilityError(origin_ + prefix_ + " does not serve " +
                                         std::string(to_string(c)));
      }
    }
  }

  const std::string& origin() const { return origin_; }
  const std::string& prefix() const { return prefix_; }

 private:
  nlohmann::json chat_body(const ChatRequest& r, const StudentState* state) const {
    nlohmann::json body;
    body["model"] = config_.model;
    auto msgs = nlohmann::json::array();
    for (const auto& m : r.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    body["messages"] = msgs;
    body["temperature"] = r.temperature;
    if (r.seed) body["seed"] = *r.seed;
    if (state && state->id != "base") body["adapter"] = state->id;
    return body;
  }

  static const nlohmann::json& first_choice(const nlohmann::json& j) {
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
      throw ProtocolError("chat response has no choices");
    }
    return j["choices"][0];
  }

  static std::vector<TokenLogprob> read_logprobs(const nlohmann::json& choice) {
    if (!choice.contains("logprobs") || choice["logprobs"].is_null() ||
        !choice["logprobs"].contains("content")) {
      throw ProtocolError("logprobs requested but missing from response");
    }
    std::vector<TokenLogprob> out;
    try {
      for (const auto& t : choice["logprobs"]["content"]) {
        out.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
      }
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(std::string("malformed logprobs: ") + e.what());
    }
    return out;
  }

  static TokenUsage read_usage(const nlohmann::json& j, const std::string& prompt,
                               const std::string& completion) {
    TokenUsage u;
    if (j.contains("usage") && j["usage"].is_object() &&
        j["usage"].contains("prompt_tokens") && j["usage"].contains("completion_tokens")) {
      u.input_tokens = j["usage"]["prompt_tokens"].get<std::int64_t>();
      u.output_tokens = j["usage"]["completion_tokens"].get<std::int64_t>();
      return u;
    }
    u.input_tokens = approx_token_count(prompt);
    u.output_tokens = approx_token_count(completion);
    u.approximate = true;
    return u;
  }

  httplib::Client client() const {
    httplib::Client c(origin_);
    const auto secs = std::chrono::duration<double>(timeout_);
    c.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
    c.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
    c.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
    if (!config_.api_key_env.empty()) {
      if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
        c.set_bearer_token_auth(key);
      }
    }
    return c;
  }

  nlohmann::json handle(const httplib::Result& res, const std::string& path) const {
    if (!res) {
      throw TransportError("request to " + origin_ + prefix_ + path + " failed: " +
                               httplib::to_string(res.error()),
                           true);
    }
    const int status = res->status;
    if (status == 501) {
      throw UnsupportedCapabilityError(path + " is not served by " + origin_ + prefix_);
    }
    if (status == 429 || status >= 500) {
      throw TransportError(path + " returned HTTP " + std::to_string(status), true);
    }
    if (status < 200 || status >= 300) {
      throw TransportError(path + " returned HTTP " + std::to_string(status) + ": " +
                               res->body.substr(0, 200),
                           false);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw ProtocolError(path + " returned invalid JSON: " + e.what());
    }
  }

  nlohmann::json post(const std::string& path, const nlohmann::json& body) const {
    auto c = client();
    return handle(c.Post(prefix_ + path, body.dump(), "application/json"), path);
  }

  nlohmann::json get(const std::string& path) const {
    auto c = client();
    return handle(c.Get(prefix_ + path), path);
  }

  EndpointConfig config_;
  double timeout_;
  std::string origin_;
  std::string prefix_;
};

}  // namespace itersynth::modelio
